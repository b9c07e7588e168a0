#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qus/field_simulator.hpp"
#include "qus/raster.hpp"
#include "qus/xu_estimator.hpp"

namespace qus::img {

enum class ExtentUnit { samples, physical };

struct PatchConfig {
    double extent_axial = 32.0;
    double extent_lateral = 32.0;
    // physical extents are divided by the frame spacing
    ExtentUnit unit = ExtentUnit::samples;
    double overlap_fraction = 0.75;
    std::size_t min_valid_samples = 16;

    void validate() const;
};

struct PatchWindow {
    std::size_t a0 = 0;
    std::size_t l0 = 0;
    std::size_t size_a = 0;
    std::size_t size_l = 0;
    double center_a = 0.0;
    double center_l = 0.0;

    bool covers(std::size_t a, std::size_t l) const noexcept {
        return a >= a0 && a < a0 + size_a && l >= l0 && l < l0 + size_l;
    }
};

// Regular grid of windows with stride extent * (1 - overlap) per axis
// (count floor((N - E) / stride) + 1); when that grid stops short of the far
// border one extra window flush with the border is appended, so every pixel
// is covered. Throws ConfigError when a patch is larger than the frame.
std::vector<PatchWindow> partition_patches(Dims frame, Spacing spacing, const PatchConfig& cfg);

// Maps the amplitudes of one patch to a parameter value. Throwing DataError
// (or returning a non-finite value) marks the patch invalid.
using Estimator = std::function<double(std::span<const double>)>;

Estimator xu_alpha_estimator(const xu::SolverConfig& cfg = {});
Estimator xu_k_estimator(const xu::SolverConfig& cfg = {});

struct ParametricMap {
    Raster data;     // NaN where invalid
    Mask validity;   // 1 where data holds an estimate
    Spacing spacing{};
    std::vector<PatchWindow> windows;
    std::vector<double> window_values;  // NaN for invalid patches

    Dims dims() const noexcept { return data.dims(); }
    std::size_t valid_windows() const noexcept;
    double valid_fraction() const noexcept;
};

// Estimates every window independently, then gives each pixel the mean of
// the valid windows covering it. Throws DegenerateDataError when no patch is
// valid.
ParametricMap estimate_map(const sim::EnvelopeFrame& frame, const PatchConfig& cfg, const Estimator& estimator,
                           unsigned jobs = 1);

// Wraps a plain raster as a fully-valid map (NaN entries become invalid).
ParametricMap map_from_raster(const Raster& data, Spacing spacing = {});

struct GainCurve {
    std::vector<double> depth;   // axial sample index
    std::vector<double> values;  // fitted gain, > 0
    std::string family = "poly-log";
    int degree = 4;
    std::vector<double> coefficients;  // in the normalized depth variable
    double depth_center = 0.0;
    double depth_half_range = 1.0;
};

// Mean amplitude per depth over all frames and lateral positions, then a
// degree-4 least-squares polynomial in log amplitude, exponentiated.
// Throws ConfigError on empty or mismatched input and DegenerateDataError
// naming the depth rows whose mean is zero.
GainCurve fit_gain(std::span<const sim::EnvelopeFrame> reference_frames);

// output(a, l) = frame(a, l) / curve(a).
sim::EnvelopeFrame apply_gain(const sim::EnvelopeFrame& frame, const GainCurve& curve);

// "depth,gain" header then one row per depth.
std::string gain_curve_csv(const GainCurve& curve);

struct UncertaintyMap {
    Raster data;  // population std / mean; NaN where invalid
    Mask validity;
};

struct FrameAggregate {
    ParametricMap mean;
    UncertaintyMap uncertainty;
};

// Pixelwise mean over N_f maps and frame-wise uncertainty
//   sqrt((1 / N_f) * sum (S_i - mean)^2) / mean.
// A pixel is valid only if valid in every map; uncertainty is additionally
// invalid where the mean is not positive. Per-pixel values are summed in
// sorted order, so results are bit-identical under any frame order.
FrameAggregate aggregate_frames(std::span<const ParametricMap> maps);

struct Metrics {
    double rmse = 0.0;
    double rrmse = 0.0;  // rmse / mean(truth)
    double mae = 0.0;
    std::size_t pixels = 0;
};

// Over pixels valid in `predicted`.
Metrics eval_metrics(const ParametricMap& predicted, const Raster& truth);

}  // namespace qus::img
