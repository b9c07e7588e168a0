#include "qus/hk_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "qus/error.hpp"
#include "qus/random.hpp"

namespace qus::hk {

namespace {

constexpr double kEulerGamma = std::numbers::egamma;

// I0(x) * exp(-x) for x >= 0.
double bessel_i0_scaled(double x) {
    if (x < 500.0) return boost::math::cyl_bessel_i(0, x) * std::exp(-x);
    const double r = 1.0 / x;
    const double series = 1.0 + r * (1.0 / 8.0 + r * (9.0 / 128.0 + r * (225.0 / 3072.0)));
    return series / std::sqrt(2.0 * std::numbers::pi * x);
}

// Log-w interval that keeps all but `tail` of the Gamma(alpha, 1) mass on each side.
std::pair<double, double> mixing_range(double alpha, double tail) {
    double lo = boost::math::gamma_p_inv(alpha, tail);
    const double hi = boost::math::gamma_q_inv(alpha, tail);
    lo = std::max(lo, std::numeric_limits<double>::min());
    return {std::log(lo), std::log(hi)};
}

// Gamma(alpha, 1) density expressed as a density in t = log w.
double log_mixing_weight(double t, double alpha, double log_gamma_alpha) {
    return std::exp(alpha * t - std::exp(t) - log_gamma_alpha);
}

// E[log Y] for Y = |mu + Z|^2, Z complex standard normal, kappa = mu^2:
// log(kappa) + E1(kappa), continuous at kappa = 0 where it equals -gamma.
double rician_log_moment(double kappa) {
    if (kappa < 1.0) {
        double term = 1.0;
        double sum = 0.0;
        for (int n = 1; n < 40; ++n) {
            term *= kappa / n;
            const double add = ((n % 2) ? 1.0 : -1.0) * term / n;
            sum += add;
            if (std::abs(add) < 1e-18) break;
        }
        return -kEulerGamma + sum;
    }
    return std::log(kappa) + boost::math::expint(1, kappa);
}

}  // namespace

void HKParams::validate() const {
    if (!std::isfinite(epsilon) || !std::isfinite(sigma2) || !std::isfinite(alpha) ||
        epsilon < 0.0 || sigma2 <= 0.0 || alpha <= 0.0) {
        std::ostringstream os;
        os << "invalid HK parameters (epsilon=" << epsilon << ", sigma2=" << sigma2
           << ", alpha=" << alpha << "): need epsilon >= 0, sigma2 > 0, alpha > 0";
        throw DomainError(os.str());
    }
}

HKParams HKParams::from_alpha_k(double alpha, double k, double mean_intensity) {
    if (!(alpha > 0.0) || !(k >= 0.0) || !std::isfinite(k) || !(mean_intensity > 0.0))
        throw DomainError("from_alpha_k: need alpha > 0, finite k >= 0, mean intensity > 0");
    HKParams p;
    p.alpha = alpha;
    p.sigma2 = mean_intensity / (2.0 * alpha * (1.0 + k));
    p.epsilon = std::sqrt(mean_intensity * k / (1.0 + k));
    return p;
}

double hk_pdf(double a, const HKParams& params, const PdfOptions& options) {
    params.validate();
    if (!std::isfinite(a)) throw DomainError("hk_pdf: amplitude must be finite");
    if (a <= 0.0) return 0.0;

    const double eps = params.epsilon;
    const double s2 = params.sigma2;
    const double alpha = params.alpha;
    const double lg = std::lgamma(alpha);

    auto integrand = [&](double t) {
        const double var = s2 * std::exp(t);  // per-component variance given w
        const double d = a - eps;
        const double rice = (a / var) * std::exp(-d * d / (2.0 * var)) * bessel_i0_scaled(a * eps / var);
        return rice * log_mixing_weight(t, alpha, lg);
    };

    const auto [lo, hi] = mixing_range(alpha, options.tail_mass);

    // Split where the integrand can be sharply peaked: the Gamma mode and the
    // mixing scales at which the conditional Rice density peaks at a.
    std::array<double, 5> cuts{lo, std::log(alpha), std::log(a * a / (2.0 * s2)), hi, hi};
    const double d2 = (a - eps) * (a - eps);
    cuts[4] = d2 > 0.0 ? std::log(d2 / s2) : hi;
    for (auto& c : cuts) c = std::clamp(c, lo, hi);
    std::sort(cuts.begin(), cuts.end());

    double total = 0.0;
    double total_error = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] - cuts[i] <= 0.0) continue;
        double err = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            integrand, cuts[i], cuts[i + 1], options.max_depth, options.relative_tolerance, &err);
        total_error += err;
    }

    if (!(total_error <= 1e-6 * total + 1e-300) || !std::isfinite(total)) {
        std::ostringstream os;
        os << "hk_pdf quadrature did not converge at a=" << a << " (error estimate " << total_error
           << ", value " << total << ")";
        throw NumericalError(os.str(), std::exp(hi), 2.0 * options.tail_mass, total_error);
    }
    return total;
}

SampleBatch hk_sample(const HKParams& params, std::size_t n, std::uint64_t seed) {
    params.validate();
    SampleBatch batch;
    batch.values.resize(n);
    Rng rng(seed);
    for (auto& v : batch.values) {
        const double w = rng.gamma(params.alpha);
        const double sd = std::sqrt(params.sigma2 * w);
        const double x = params.epsilon + sd * rng.normal();
        const double y = sd * rng.normal();
        v = std::hypot(x, y);
    }
    return batch;
}

XUValues hk_theoretical_xu_exact(double alpha, double k, double mean_intensity) {
    if (!(alpha > 0.0) || !(k >= 0.0) || !(mean_intensity > 0.0) || !std::isfinite(alpha) ||
        !std::isfinite(mean_intensity))
        throw DomainError("hk_theoretical_xu_exact: need alpha > 0, k >= 0, mean intensity > 0");
    if (std::isinf(k)) return {0.0, 0.0};

    // Intensity I = P(w) * Y, P(w) = diffuse power given w, Y = |mu + Z|^2 with
    // kappa = mu^2 = eps^2 / P(w). Conditional on w:
    //   E[log I]   = log P + L(kappa),             L(kappa) = log kappa + E1(kappa)
    //   E[I]       = P (1 + kappa)
    //   E[I log I] = P [(1 + kappa) log P + (1 + kappa) L(kappa) + 2 - exp(-kappa)]
    const double diffuse_scale = mean_intensity / (alpha * (1.0 + k));  // P(w) = diffuse_scale * w
    const double coherent = mean_intensity * k / (1.0 + k);             // eps^2
    const double lg = std::lgamma(alpha);

    // Mixing weight times the conditional moments {1, E[I], E[log I], E[I log I]}.
    auto conditional = [&](double t) {
        const double p = diffuse_scale * std::exp(t);
        const double kappa = coherent / p;
        const double log_p = std::log(p);
        const double lk = rician_log_moment(kappa);
        const double weight = log_mixing_weight(t, alpha, lg);
        return std::array<double, 4>{
            weight, weight * p * (1.0 + kappa), weight * (log_p + lk),
            weight * p * ((1.0 + kappa) * (log_p + lk) + 2.0 - std::exp(-kappa))};
    };

    // All four moments share one pass of composite Gauss-Legendre in log w;
    // the integrands are smooth there, including the alpha < 1 tail.
    const auto [lo, hi] = mixing_range(alpha, 1e-16);
    const double mode = std::clamp(std::log(alpha), lo, hi);
    using rule = boost::math::quadrature::gauss<double, 20>;
    const auto& nodes = rule::abscissa();
    const auto& weights = rule::weights();
    std::array<double, 4> m{};
    auto accumulate = [&](double a, double b, int panels) {
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = a + (p + 0.5) * h;
            for (std::size_t q = 0; q < nodes.size(); ++q) {
                for (double sign : {-1.0, 1.0}) {
                    const double t = mid + sign * 0.5 * h * nodes[q];
                    const double wq = 0.5 * h * weights[q];
                    const auto c = conditional(t);
                    for (int which = 0; which < 4; ++which) m[which] += wq * c[which];
                }
            }
        }
    };
    if (mode > lo) accumulate(lo, mode, 12);
    if (hi > mode) accumulate(mode, hi, 8);

    const double mass = m[0];
    const double mean_i = m[1] / mass;
    const double mean_log = m[2] / mass;
    const double mean_ilog = m[3] / mass;
    return {mean_ilog / mean_i - mean_log, mean_log - std::log(mean_i)};
}

namespace {

constexpr std::size_t kTableAlpha = 128;
constexpr std::size_t kTableK = 65;

// The k axis is sampled uniformly in s = sqrt(k / kKMax): for alpha < 1 the
// statistics move like k^alpha near k = 0.
double k_coordinate(double k) { return std::sqrt(std::max(k - kKMin, 0.0) / (kKMax - kKMin)); }

class XuTable {
public:
    XuTable() : values_(kTableAlpha * kTableK) {
        log_alpha_lo_ = std::log(kAlphaMin);
        log_alpha_step_ = (std::log(kAlphaMax) - log_alpha_lo_) / (kTableAlpha - 1);
        k_step_ = 1.0 / (kTableK - 1);
        for (std::size_t i = 0; i < kTableAlpha; ++i) {
            const double alpha = std::exp(log_alpha_lo_ + log_alpha_step_ * i);
            for (std::size_t j = 0; j < kTableK; ++j) {
                const double s = k_step_ * j;
                values_[i * kTableK + j] = hk_theoretical_xu_exact(alpha, kKMin + (kKMax - kKMin) * s * s);
            }
        }
    }

    XUValues lookup(double alpha, double k) const {
        const double fa = std::clamp((std::log(alpha) - log_alpha_lo_) / log_alpha_step_, 0.0,
                                     static_cast<double>(kTableAlpha - 1));
        const double fk = std::clamp(k_coordinate(k) / k_step_, 0.0, static_cast<double>(kTableK - 1));
        const std::size_t i = std::min(static_cast<std::size_t>(fa), kTableAlpha - 2);
        const std::size_t j = std::min(static_cast<std::size_t>(fk), kTableK - 2);
        const double ta = fa - i;
        const double tk = fk - j;
        const auto& v00 = values_[i * kTableK + j];
        const auto& v01 = values_[i * kTableK + j + 1];
        const auto& v10 = values_[(i + 1) * kTableK + j];
        const auto& v11 = values_[(i + 1) * kTableK + j + 1];
        auto blend = [&](double a00, double a01, double a10, double a11) {
            return (1 - ta) * ((1 - tk) * a00 + tk * a01) + ta * ((1 - tk) * a10 + tk * a11);
        };
        return {blend(v00.x, v01.x, v10.x, v11.x), blend(v00.u, v01.u, v10.u, v11.u)};
    }

private:
    std::vector<XUValues> values_;
    double log_alpha_lo_ = 0.0;
    double log_alpha_step_ = 0.0;
    double k_step_ = 0.0;
};

const XuTable& table() {
    static const XuTable instance;
    return instance;
}

}  // namespace

XUValues hk_theoretical_xu(double alpha, double k) {
    if (!(alpha >= kAlphaMin && alpha <= kAlphaMax && k >= kKMin && k <= kKMax)) {
        std::ostringstream os;
        os << "hk_theoretical_xu: (alpha=" << alpha << ", k=" << k << ") outside supported grid ["
           << kAlphaMin << ", " << kAlphaMax << "] x [" << kKMin << ", " << kKMax << "]";
        throw DomainError(os.str());
    }
    return table().lookup(alpha, k);
}

XuTableShape theoretical_table_shape() noexcept { return {kTableAlpha, kTableK}; }

}  // namespace qus::hk
