#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qus/raster.hpp"

namespace qus::sim {

inline constexpr double kDensityMin = 1.0;
inline constexpr double kDensityMax = 20.0;
inline constexpr double kAmpMeanMin = 1.0;
inline constexpr double kAmpMeanMax = 5.0;
// Variance of a scatterer amplitude as a fraction of its mean.
inline constexpr double kAmpVarianceFraction = 0.02;

// Gaussian-envelope PSF with an axial cosine carrier. Widths in samples,
// carrier frequency in cycles per axial sample.
struct PSFSpec {
    double sigma_a = 3.0;
    double sigma_l = 5.0;
    double fc_norm = 0.25;
    int kernel_half_extent = 15;

    void validate() const;

    // Smallest kernel support satisfying half_extent >= 3 * max(sigma).
    static PSFSpec with_default_extent(double sigma_a, double sigma_l, double fc_norm);

    // Grid points in one resolution cell, (3 sigma_a) * (3 sigma_l).
    double resolution_cell_points() const noexcept { return 9.0 * sigma_a * sigma_l; }

    friend bool operator==(const PSFSpec&, const PSFSpec&) = default;
};

enum class Shape { background, rectangle, ellipse };

const char* shape_name(Shape shape) noexcept;
Shape parse_shape(const std::string& name);

// A phantom region. Rectangles and ellipses are given by centre and
// half-extent in canvas pixel coordinates; the background ignores geometry.
struct Region {
    Shape shape = Shape::background;
    double center_a = 0.0;
    double center_l = 0.0;
    double half_a = 0.0;
    double half_l = 0.0;
    double density = 1.0;   // scatterers per resolution cell
    double amp_mean = 1.0;  // mean scattering amplitude

    bool contains(double a, double l) const noexcept;
};

// Regions are painted in order, later ones overwrite earlier ones.
// regions[0] must be the background.
struct PhantomSpec {
    Dims canvas{};
    std::vector<Region> regions;

    // Field-named ConfigError on any violated bound.
    void validate() const;

    // Index of the last region covering canvas pixel (a, l).
    std::size_t region_at(std::size_t a, std::size_t l) const noexcept;
};

struct TRFGrid {
    Raster amplitudes;  // 0 where no scatterer
    Mask occupancy;

    std::size_t scatterer_count() const noexcept;
};

// Scatterer at each grid point with probability density / resolution_cell_points,
// amplitude ~ Normal(amp_mean, 0.02 * amp_mean) redrawn until positive.
TRFGrid build_trf(const PhantomSpec& phantom, const PSFSpec& psf, std::uint64_t seed);

// (2H + 1) x (2H + 1) kernel, centre at (H, H):
// exp(-(a^2 / sa^2 + l^2 / sl^2) / 2) * cos(2 pi fc a).
Raster psf_kernel(const PSFSpec& psf);

// "Same"-size zero-padded 2D linear convolution of the TRF with the PSF.
// The kernel is separable, so it runs as a lateral pass followed by an
// axial pass.
Raster synthesize_rf(const Raster& trf, const PSFSpec& psf);
inline Raster synthesize_rf(const TRFGrid& trf, const PSFSpec& psf) { return synthesize_rf(trf.amplitudes, psf); }

struct Provenance {
    std::uint64_t seed = 0;
    std::optional<PSFSpec> psf;
    std::size_t skip_a = 0;
    std::size_t skip_l = 0;
    std::map<std::string, std::string> notes;
};

struct EnvelopeFrame {
    Raster data;
    Spacing spacing{};
    Provenance provenance;

    Dims dims() const noexcept { return data.dims(); }
};

// Magnitude of the axial analytic signal of every column (FFT Hilbert transform).
EnvelopeFrame detect_envelope(const Raster& rf, Spacing spacing = {});

// Keeps every (skip + 1)-th sample from index 0 in each direction. Throws
// ConfigError if the result is smaller than 8 x 8.
EnvelopeFrame skip_decimate(const EnvelopeFrame& frame, std::size_t skip_a, std::size_t skip_l);
Raster skip_decimate(const Raster& raster, std::size_t skip_a, std::size_t skip_l);
Dims decimated_dims(Dims dims, std::size_t skip_a, std::size_t skip_l) noexcept;

struct LagCorrelation {
    double axial = 0.0;
    double lateral = 0.0;
    double mean() const noexcept { return 0.5 * (axial + lateral); }
};

// Pearson coefficients between each sample and its axial / lateral neighbour.
// DegenerateDataError when either direction has zero variance.
LagCorrelation lag1_correlation_components(const Raster& frame);
inline double lag1_correlation(const Raster& frame) { return lag1_correlation_components(frame).mean(); }

// Density of the region covering each post-skip pixel.
Raster density_ground_truth(const PhantomSpec& phantom, const PSFSpec& psf, std::size_t skip_a,
                            std::size_t skip_l);

struct SimulatedFrame {
    EnvelopeFrame envelope;  // post-skip
    Raster density;          // aligned with envelope
    std::size_t scatterers = 0;
};

// TRF -> RF -> envelope -> decimation, plus the aligned ground truth.
SimulatedFrame simulate_frame(const PhantomSpec& phantom, const PSFSpec& psf, std::size_t skip_a,
                              std::size_t skip_l, std::uint64_t seed);

}  // namespace qus::sim
