#include "qus/parametric_imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "qus/error.hpp"
#include "qus/parallel.hpp"

namespace qus::img {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t extent_in_samples(double extent, ExtentUnit unit, double spacing) {
    const double samples = unit == ExtentUnit::physical ? extent / spacing : extent;
    return static_cast<std::size_t>(std::llround(samples));
}

// Window starts along one axis.
std::vector<std::size_t> axis_starts(std::size_t n, std::size_t extent, double overlap) {
    const double stride = std::max(1.0, static_cast<double>(extent) * (1.0 - overlap));
    const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n - extent) / stride)) + 1;
    std::vector<std::size_t> starts;
    starts.reserve(count + 1);
    for (std::size_t i = 0; i < count; ++i)
        starts.push_back(std::min(n - extent, static_cast<std::size_t>(std::floor(i * stride))));
    if (starts.back() + extent < n) starts.push_back(n - extent);
    return starts;
}

}  // namespace

void PatchConfig::validate() const {
    if (!(extent_axial > 0.0) || !(extent_lateral > 0.0)) throw ConfigError("patch extent must be positive");
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
        throw ConfigError("patch.overlap must lie in [0, 1)");
    if (min_valid_samples < 16) throw ConfigError("patch.min_valid_samples must be >= 16");
}

std::vector<PatchWindow> partition_patches(Dims frame, Spacing spacing, const PatchConfig& cfg) {
    cfg.validate();
    const std::size_t ea = extent_in_samples(cfg.extent_axial, cfg.unit, spacing.axial);
    const std::size_t el = extent_in_samples(cfg.extent_lateral, cfg.unit, spacing.lateral);
    if (ea == 0 || el == 0 || ea > frame.axial || el > frame.lateral) {
        std::ostringstream os;
        os << "patch " << ea << "x" << el << " samples does not fit frame " << frame.axial << "x" << frame.lateral;
        throw ConfigError(os.str());
    }
    const auto rows = axis_starts(frame.axial, ea, cfg.overlap_fraction);
    const auto cols = axis_starts(frame.lateral, el, cfg.overlap_fraction);
    std::vector<PatchWindow> windows;
    windows.reserve(rows.size() * cols.size());
    for (std::size_t a0 : rows)
        for (std::size_t l0 : cols)
            windows.push_back({a0, l0, ea, el, a0 + 0.5 * (ea - 1.0), l0 + 0.5 * (el - 1.0)});
    return windows;
}

Estimator xu_alpha_estimator(const xu::SolverConfig& cfg) {
    cfg.validate();
    return [cfg](std::span<const double> samples) { return xu::estimate_xu(samples, cfg).alpha_hat; };
}

Estimator xu_k_estimator(const xu::SolverConfig& cfg) {
    cfg.validate();
    return [cfg](std::span<const double> samples) { return xu::estimate_xu(samples, cfg).k_hat; };
}

std::size_t ParametricMap::valid_windows() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(window_values.begin(), window_values.end(), [](double v) { return std::isfinite(v); }));
}

double ParametricMap::valid_fraction() const noexcept {
    return window_values.empty() ? 0.0 : static_cast<double>(valid_windows()) / window_values.size();
}

ParametricMap estimate_map(const sim::EnvelopeFrame& frame, const PatchConfig& cfg, const Estimator& estimator,
                           unsigned jobs) {
    ParametricMap map;
    map.spacing = frame.spacing;
    map.windows = partition_patches(frame.dims(), frame.spacing, cfg);
    map.window_values.assign(map.windows.size(), kNaN);

    parallel_for(map.windows.size(), jobs, [&](std::size_t w) {
        const auto& win = map.windows[w];
        std::vector<double> samples;
        samples.reserve(win.size_a * win.size_l);
        for (std::size_t a = win.a0; a < win.a0 + win.size_a; ++a)
            for (std::size_t l = win.l0; l < win.l0 + win.size_l; ++l) samples.push_back(frame.data(a, l));
        const auto positive =
            static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](double v) { return v > 0.0; }));
        if (positive < cfg.min_valid_samples) return;
        try {
            const double v = estimator(samples);
            if (std::isfinite(v)) map.window_values[w] = v;
        } catch (const DataError&) {
        }
    });

    if (map.valid_windows() == 0)
        throw DegenerateDataError("estimate_map: none of the " + std::to_string(map.windows.size()) +
                                  " patches yielded a valid estimate");

    const Dims dims = frame.dims();
    Raster sum(dims, 0.0);
    Grid<std::size_t> hits(dims, 0);
    // Windows are visited in index order so the per-pixel sums are reproducible.
    for (std::size_t w = 0; w < map.windows.size(); ++w) {
        const double v = map.window_values[w];
        if (!std::isfinite(v)) continue;
        const auto& win = map.windows[w];
        for (std::size_t a = win.a0; a < win.a0 + win.size_a; ++a)
            for (std::size_t l = win.l0; l < win.l0 + win.size_l; ++l) {
                sum(a, l) += v;
                ++hits(a, l);
            }
    }
    map.data = Raster(dims, kNaN);
    map.validity = Mask(dims, 0);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (hits.storage()[i] == 0) continue;
        map.data.storage()[i] = sum.storage()[i] / static_cast<double>(hits.storage()[i]);
        map.validity.storage()[i] = 1;
    }
    return map;
}

ParametricMap map_from_raster(const Raster& data, Spacing spacing) {
    ParametricMap map;
    map.data = data;
    map.spacing = spacing;
    map.validity = Mask(data.dims(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::isfinite(data.storage()[i]))
            map.validity.storage()[i] = 1;
        else
            map.data.storage()[i] = kNaN;
    }
    return map;
}

GainCurve fit_gain(std::span<const sim::EnvelopeFrame> reference_frames) {
    if (reference_frames.empty()) throw ConfigError("fit_gain: need at least one reference frame");
    const Dims dims = reference_frames.front().dims();
    for (const auto& f : reference_frames)
        if (f.dims() != dims) throw ConfigError("fit_gain: reference frames have different dimensions");
    if (dims.axial == 0 || dims.lateral == 0) throw ConfigError("fit_gain: empty reference frames");

    std::vector<double> mean(dims.axial, 0.0);
    for (std::size_t a = 0; a < dims.axial; ++a) {
        double s = 0.0;
        for (const auto& f : reference_frames)
            for (std::size_t l = 0; l < dims.lateral; ++l) s += f.data(a, l);
        mean[a] = s / static_cast<double>(reference_frames.size() * dims.lateral);
    }

    std::vector<std::size_t> zero_rows;
    for (std::size_t a = 0; a < dims.axial; ++a)
        if (!(mean[a] > 0.0)) zero_rows.push_back(a);
    if (!zero_rows.empty()) {
        std::ostringstream os;
        os << "fit_gain: reference mean amplitude is zero at depth rows";
        for (std::size_t i = 0; i < zero_rows.size() && i < 20; ++i) os << ' ' << zero_rows[i];
        if (zero_rows.size() > 20) os << " ... (" << zero_rows.size() << " rows)";
        throw DegenerateDataError(os.str());
    }

    GainCurve curve;
    curve.degree = static_cast<int>(std::min<std::size_t>(4, dims.axial - 1));
    curve.depth_center = 0.5 * (dims.axial - 1.0);
    curve.depth_half_range = std::max(0.5 * (dims.axial - 1.0), 1.0);

    const auto n = static_cast<Eigen::Index>(dims.axial);
    const int terms = curve.degree + 1;
    Eigen::MatrixXd design(n, terms);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) - curve.depth_center) / curve.depth_half_range;
        double p = 1.0;
        for (int j = 0; j < terms; ++j, p *= x) design(i, j) = p;
        target(i) = std::log(mean[static_cast<std::size_t>(i)]);
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
    const Eigen::VectorXd fitted = design * coef;

    curve.coefficients.assign(coef.data(), coef.data() + coef.size());
    curve.depth.resize(dims.axial);
    curve.values.resize(dims.axial);
    for (std::size_t a = 0; a < dims.axial; ++a) {
        curve.depth[a] = static_cast<double>(a);
        curve.values[a] = std::exp(fitted(static_cast<Eigen::Index>(a)));
    }
    return curve;
}

sim::EnvelopeFrame apply_gain(const sim::EnvelopeFrame& frame, const GainCurve& curve) {
    if (curve.values.size() != frame.dims().axial) {
        std::ostringstream os;
        os << "apply_gain: curve has " << curve.values.size() << " depths, frame has " << frame.dims().axial;
        throw ConfigError(os.str());
    }
    sim::EnvelopeFrame out = frame;
    for (std::size_t a = 0; a < frame.dims().axial; ++a) {
        const double g = curve.values[a];
        if (!(g > 0.0)) throw DomainError("apply_gain: gain curve must be positive");
        for (std::size_t l = 0; l < frame.dims().lateral; ++l) out.data(a, l) = frame.data(a, l) / g;
    }
    out.provenance.notes["gain_normalized"] = curve.family + "-" + std::to_string(curve.degree);
    return out;
}

std::string gain_curve_csv(const GainCurve& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "depth,gain\n";
    for (std::size_t i = 0; i < curve.values.size(); ++i) os << curve.depth[i] << ',' << curve.values[i] << '\n';
    return os.str();
}

FrameAggregate aggregate_frames(std::span<const ParametricMap> maps) {
    if (maps.empty()) throw ConfigError("aggregate_frames: need at least one map (N_f = 0)");
    const Dims dims = maps.front().dims();
    for (const auto& m : maps)
        if (m.dims() != dims) throw ConfigError("aggregate_frames: maps have different dimensions");

    FrameAggregate out;
    out.mean.data = Raster(dims, kNaN);
    out.mean.validity = Mask(dims, 0);
    out.mean.spacing = maps.front().spacing;
    out.uncertainty.data = Raster(dims, kNaN);
    out.uncertainty.validity = Mask(dims, 0);

    const double nf = static_cast<double>(maps.size());
    std::vector<double> values(maps.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        bool valid = true;
        for (std::size_t f = 0; f < maps.size() && valid; ++f) {
            valid = maps[f].validity.storage()[i] != 0;
            values[f] = maps[f].data.storage()[i];
        }
        if (!valid) continue;
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (double v : values) sum += v;
        const double mean = sum / nf;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        out.mean.data.storage()[i] = mean;
        out.mean.validity.storage()[i] = 1;
        if (mean > 0.0) {
            out.uncertainty.data.storage()[i] = std::sqrt(ss / nf) / mean;
            out.uncertainty.validity.storage()[i] = 1;
        }
    }
    return out;
}

Metrics eval_metrics(const ParametricMap& predicted, const Raster& truth) {
    if (predicted.dims() != truth.dims()) throw ConfigError("eval_metrics: prediction and truth dimensions differ");
    double se = 0.0, ae = 0.0, st = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!predicted.validity.storage()[i]) continue;
        const double d = predicted.data.storage()[i] - truth.storage()[i];
        se += d * d;
        ae += std::abs(d);
        st += truth.storage()[i];
        ++n;
    }
    if (n == 0) throw DataError("eval_metrics: no valid pixels");
    Metrics m;
    m.pixels = n;
    m.rmse = std::sqrt(se / n);
    m.mae = ae / n;
    m.rrmse = m.rmse / (st / n);
    return m;
}

}  // namespace qus::img
