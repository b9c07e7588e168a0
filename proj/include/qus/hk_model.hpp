#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace qus::hk {

// Homodyned-K parameters: coherent amplitude epsilon, diffuse scale sigma2,
// clustering parameter alpha. The envelope is
//   A = |epsilon + sqrt(sigma2 * w) * (Z1 + i Z2)|,  w ~ Gamma(alpha, 1).
struct HKParams {
    double epsilon = 0.0;
    double sigma2 = 1.0;
    double alpha = 1.0;

    // Coherent-to-diffuse power ratio epsilon^2 / (2 sigma2 alpha).
    double k() const noexcept { return epsilon * epsilon / (2.0 * sigma2 * alpha); }
    double mean_intensity() const noexcept { return epsilon * epsilon + 2.0 * sigma2 * alpha; }

    // Throws DomainError unless epsilon >= 0, sigma2 > 0, alpha > 0 (all finite).
    void validate() const;

    // Parameters with the given (alpha, k) and mean intensity.
    static HKParams from_alpha_k(double alpha, double k, double mean_intensity = 1.0);
};

struct SampleBatch {
    std::vector<double> values;

    std::size_t count() const noexcept { return values.size(); }
};

struct PdfOptions {
    double relative_tolerance = 1e-10;
    unsigned max_depth = 12;
    // Gamma mixing mass discarded on each side of the w-range.
    double tail_mass = 1e-15;
};

// Density of the envelope at a >= 0, obtained by integrating the Rice
// density of A given w against the Gamma(alpha, 1) mixing law in log(w).
// Throws DomainError on invalid params, NumericalError when the adaptive
// quadrature misses its tolerance.
double hk_pdf(double a, const HKParams& params, const PdfOptions& options = {});

// n i.i.d. envelope draws via the compound construction. Deterministic in seed.
SampleBatch hk_sample(const HKParams& params, std::size_t n, std::uint64_t seed);

struct XUValues {
    double x = 0.0;
    double u = 0.0;
};

// Supported (alpha, k) domain of the lookup table and of the estimator.
inline constexpr double kAlphaMin = 0.5;
inline constexpr double kAlphaMax = 100.0;
inline constexpr double kKMin = 0.0;
inline constexpr double kKMax = 10.0;

// Population X and U of HK(alpha, k), read from a lookup table built once on
// first use (log-spaced alpha, uniform in sqrt(k)) with bilinear interpolation.
// Throws DomainError outside [kAlphaMin, kAlphaMax] x [kKMin, kKMax].
XUValues hk_theoretical_xu(double alpha, double k);

// Same quantity evaluated directly: the conditional expectations given w have
// closed forms (Rician log-moments through the exponential integral), leaving
// one smooth quadrature over the Gamma mixing law. Accepts any alpha > 0,
// k >= 0 (k = +inf gives the constant-intensity limit X = U = 0) and an
// arbitrary mean intensity; X and U do not depend on it.
XUValues hk_theoretical_xu_exact(double alpha, double k, double mean_intensity = 1.0);

struct XuTableShape {
    std::size_t alpha_points;
    std::size_t k_points;
};
XuTableShape theoretical_table_shape() noexcept;

}  // namespace qus::hk
