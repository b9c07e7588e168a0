#include "qus/xu_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "qus/error.hpp"

namespace qus::xu {

XUStats compute_xu(std::span<const double> amplitudes) {
    std::vector<double> intensity;
    intensity.reserve(amplitudes.size());
    XUStats stats;
    for (double a : amplitudes) {
        if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("compute_xu: amplitudes must be finite and >= 0");
        if (a == 0.0) {
            ++stats.zeros_removed;
            continue;
        }
        intensity.push_back(a * a);
    }
    stats.n_samples = intensity.size();
    if (intensity.size() < 2) {
        std::ostringstream os;
        os << "compute_xu: " << intensity.size() << " positive samples (" << stats.zeros_removed
           << " zeros removed), need at least 2";
        throw InsufficientDataError(os.str());
    }
    if (std::all_of(intensity.begin(), intensity.end(), [&](double v) { return v == intensity.front(); }))
        throw DegenerateDataError("compute_xu: all samples identical (X = U = 0)", 0.0, 0.0);

    // Normalizing by the mean intensity first makes both statistics exactly
    // scale-free and keeps I log I well conditioned.
    const double n = static_cast<double>(intensity.size());
    double mean_i = 0.0;
    for (double v : intensity) mean_i += v;
    mean_i /= n;

    double mean_ilog = 0.0;
    double mean_log = 0.0;
    double mean_ratio = 0.0;
    for (double v : intensity) {
        const double r = v / mean_i;
        const double lr = std::log(r);
        mean_ratio += r;
        mean_ilog += r * lr;
        mean_log += lr;
    }
    mean_ratio /= n;
    mean_ilog /= n;
    mean_log /= n;

    stats.x = mean_ilog / mean_ratio - mean_log;
    stats.u = mean_log - std::log(mean_ratio);
    return stats;
}

void SolverConfig::validate() const {
    if (!(alpha_min >= hk::kAlphaMin && alpha_max <= hk::kAlphaMax && alpha_min < alpha_max &&
          k_min >= hk::kKMin && k_max <= hk::kKMax && k_min < k_max))
        throw ConfigError("solver bounds must be ordered and lie within alpha [0.5, 100], k [0, 10]");
    if (!(tolerance > 0.0)) throw ConfigError("solver tolerance must be > 0");
    if (max_iterations < 1) throw ConfigError("solver max_iterations must be >= 1");
}

double xu_residual(const XUStats& stats, double alpha, double k) {
    const auto t = hk::hk_theoretical_xu(alpha, k);
    return std::max(std::abs(t.x - stats.x), std::abs(t.u - stats.u));
}

namespace {

struct InnerSolution {
    double k;
    bool clamped;
};

class NestedBisection {
public:
    NestedBisection(const XUStats& stats, const SolverConfig& cfg) : stats_(stats), cfg_(cfg) {}

    double u_mismatch(double alpha, double k) const { return hk::hk_theoretical_xu(alpha, k).u - stats_.u; }

    // k in [k_min, k_max] with U(alpha, k) = U_obs. U is increasing in k at fixed alpha.
    InnerSolution solve_k(double alpha) {
        const double f_lo = u_mismatch(alpha, cfg_.k_min);
        if (f_lo >= 0.0) return {cfg_.k_min, f_lo > 0.0};
        const double f_hi = u_mismatch(alpha, cfg_.k_max);
        if (f_hi <= 0.0) return {cfg_.k_max, f_hi < 0.0};
        double lo = cfg_.k_min;
        double hi = cfg_.k_max;
        for (int it = 0; it < cfg_.max_iterations && hi - lo > 1e-13; ++it) {
            ++inner_iterations_;
            const double mid = 0.5 * (lo + hi);
            if (u_mismatch(alpha, mid) < 0.0)
                lo = mid;
            else
                hi = mid;
        }
        return {0.5 * (lo + hi), false};
    }

    // exp(log(alpha_max)) can round just past the table edge.
    double to_alpha(double log_alpha) const {
        return std::clamp(std::exp(log_alpha), cfg_.alpha_min, cfg_.alpha_max);
    }

    bool feasible(double alpha) const {
        return u_mismatch(alpha, cfg_.k_min) <= 0.0 && u_mismatch(alpha, cfg_.k_max) >= 0.0;
    }

    // Point on the U-level curve for a trial alpha.
    struct CurvePoint {
        double log_alpha;
        InnerSolution inner;
        double g;  // X mismatch
    };

    CurvePoint at(double log_alpha) {
        const double alpha = to_alpha(log_alpha);
        const auto inner = solve_k(alpha);
        return {log_alpha, inner, hk::hk_theoretical_xu(alpha, inner.k).x - stats_.x};
    }

    double residual(const CurvePoint& p) const {
        return xu_residual(stats_, to_alpha(p.log_alpha), p.inner.k);
    }

    // Edge of the feasible alpha-range between a feasible and an infeasible end.
    double feasibility_edge(double good, double bad) const {
        for (int it = 0; it < cfg_.max_iterations && std::abs(bad - good) > 1e-13; ++it) {
            const double mid = 0.5 * (good + bad);
            if (feasible(to_alpha(mid)))
                good = mid;
            else
                bad = mid;
        }
        return good;
    }

    HKEstimate finish(const CurvePoint& p, bool clamped) {
        HKEstimate est;
        est.alpha_hat = to_alpha(p.log_alpha);
        est.k_hat = p.inner.k;
        est.bounds_hit = clamped || p.inner.clamped;
        est.residual = residual(p);
        est.converged = est.residual <= cfg_.tolerance;
        est.iterations = iterations_;
        est.inner_iterations = inner_iterations_;
        return est;
    }

    HKEstimate solve() {
        double lo = std::log(cfg_.alpha_min);
        double hi = std::log(cfg_.alpha_max);
        const bool lo_ok = feasible(cfg_.alpha_min);
        const bool hi_ok = feasible(cfg_.alpha_max);

        if (!lo_ok && !hi_ok) {
            // U_obs is outside what any alpha in range can produce.
            const auto a = at(lo);
            const auto b = at(hi);
            return finish(residual(a) <= residual(b) ? a : b, true);
        }
        if (!hi_ok) hi = feasibility_edge(lo, hi);
        if (!lo_ok) lo = feasibility_edge(hi, lo);

        auto p_lo = at(lo);
        auto p_hi = at(hi);
        if (p_lo.g == 0.0) return finish(p_lo, false);
        if (p_hi.g == 0.0) return finish(p_hi, false);
        if ((p_lo.g > 0.0) == (p_hi.g > 0.0)) {
            const bool pick_lo = residual(p_lo) <= residual(p_hi);
            return finish(pick_lo ? p_lo : p_hi, true);
        }
        const bool lo_positive = p_lo.g > 0.0;
        for (int it = 0; it < cfg_.max_iterations && p_hi.log_alpha - p_lo.log_alpha > 1e-13; ++it) {
            ++iterations_;
            const auto mid = at(0.5 * (p_lo.log_alpha + p_hi.log_alpha));
            if ((mid.g > 0.0) == lo_positive)
                p_lo = mid;
            else
                p_hi = mid;
        }
        return finish(at(0.5 * (p_lo.log_alpha + p_hi.log_alpha)), false);
    }

private:
    const XUStats& stats_;
    const SolverConfig& cfg_;
    int iterations_ = 0;
    int inner_iterations_ = 0;
};

}  // namespace

HKEstimate estimate_xu(const XUStats& stats, const SolverConfig& cfg) {
    cfg.validate();
    return NestedBisection(stats, cfg).solve();
}

HKEstimate estimate_xu(std::span<const double> amplitudes, const SolverConfig& cfg) {
    return estimate_xu(compute_xu(amplitudes), cfg);
}

EnvelopeMoments envelope_moments(std::span<const double> amplitudes) {
    if (amplitudes.size() < 4) throw InsufficientDataError("envelope_moments: need at least 4 samples");
    const double n = static_cast<double>(amplitudes.size());
    double mean = 0.0;
    for (double a : amplitudes) mean += a;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double a : amplitudes) {
        const double d = a - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw DegenerateDataError("envelope_moments: constant samples");
    EnvelopeMoments m;
    m.snr = mean / std::sqrt(m2);
    m.skewness = m3 / std::pow(m2, 1.5);
    m.kurtosis = m4 / (m2 * m2);
    return m;
}

}  // namespace qus::xu
