#pragma once

#include <cstddef>
#include <span>

#include "qus/hk_model.hpp"

namespace qus::xu {

// Log-moment statistics of intensity I = A^2 (natural log):
//   X = <I log I> / <I> - <log I>,   U = <log I> - log <I>.
struct XUStats {
    double x = 0.0;
    double u = 0.0;
    std::size_t n_samples = 0;      // strictly positive amplitudes used
    std::size_t zeros_removed = 0;  // exact zeros dropped before taking logs
};

// Throws InsufficientDataError with fewer than two positive amplitudes and
// DegenerateDataError (x = u = 0) when every positive amplitude is equal.
// Negative amplitudes are a DomainError.
XUStats compute_xu(std::span<const double> amplitudes);
inline XUStats compute_xu(const hk::SampleBatch& batch) { return compute_xu(batch.values); }

struct SolverConfig {
    double alpha_min = hk::kAlphaMin;
    double alpha_max = hk::kAlphaMax;
    double k_min = hk::kKMin;
    double k_max = hk::kKMax;
    // Largest accepted residual on the matched statistics.
    double tolerance = 1e-3;
    // Per bisection loop.
    int max_iterations = 60;

    // Bounds must be ordered and lie inside the theoretical table domain.
    void validate() const;
};

struct HKEstimate {
    double alpha_hat = 0.0;
    double k_hat = 0.0;
    // max(|X_theory - X|, |U_theory - U|) at (alpha_hat, k_hat).
    double residual = 0.0;
    int iterations = 0;        // outer (alpha) bisection steps
    int inner_iterations = 0;  // k bisection steps summed over all outer evaluations
    bool bounds_hit = false;   // a bracket had no sign change and the solution was clamped
    bool converged = false;    // residual <= tolerance
};

// Nested bisection: the inner loop finds, for a trial alpha, the k at which
// U matches (U is increasing in k at every fixed alpha); the outer loop
// bisects log alpha along that U-level curve until X matches. The outer
// bracket is first shrunk to the alpha-range where the inner solve has a root.
// Brackets without a sign change fall back to the best end point and set
// bounds_hit.
HKEstimate estimate_xu(const XUStats& stats, const SolverConfig& cfg = {});
HKEstimate estimate_xu(std::span<const double> amplitudes, const SolverConfig& cfg = {});
inline HKEstimate estimate_xu(const hk::SampleBatch& batch, const SolverConfig& cfg = {}) {
    return estimate_xu(std::span<const double>(batch.values), cfg);
}

// Residual of (alpha, k) against the statistic pair, recomputed from the table.
double xu_residual(const XUStats& stats, double alpha, double k);

struct EnvelopeMoments {
    double snr = 0.0;       // mean / std
    double skewness = 0.0;  // third standardized central moment
    double kurtosis = 0.0;  // fourth standardized central moment (not excess)
};

// Population-normalized moments of the amplitudes. Needs at least four
// samples; constant input throws DegenerateDataError.
EnvelopeMoments envelope_moments(std::span<const double> amplitudes);

}  // namespace qus::xu
