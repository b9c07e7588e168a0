// qus: command-line front end for simulation, estimation and map tools.
//
// Exit status: 0 success, 2 config or usage error, 3 I/O error,
// 4 degenerate data, 1 anything else.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qus/dataset.hpp"
#include "qus/error.hpp"
#include "qus/field_simulator.hpp"
#include "qus/hk_model.hpp"
#include "qus/parametric_imaging.hpp"
#include "qus/raster_io.hpp"
#include "qus/run_config.hpp"
#include "qus/xu_estimator.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDegenerate = 4;

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    unsigned jobs = 0;  // 0: take io.jobs from the config
};

qus::cfg::RunConfig load_config(const Common& c) {
    if (c.config.empty()) return {};
    return qus::cfg::load_run_config(c.config);
}

unsigned jobs_for(const Common& c, const qus::cfg::RunConfig& rc) { return c.jobs > 0 ? c.jobs : rc.io.jobs; }

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

qus::sim::EnvelopeFrame frame_from(const qus::io::RasterFile& f) {
    return {f.data, f.meta.spacing, f.meta.provenance};
}

void require_out(const Common& c, const char* what) {
    if (c.out.empty()) throw qus::ConfigError(std::string("--out is required (") + what + ")");
}

int cmd_simulate(const Common& c) {
    if (c.config.empty()) throw qus::ConfigError("simulate: --config is required");
    require_out(c, "dataset directory");
    const auto rc = load_config(c);
    const auto ds = rc.dataset_config();
    const auto result = qus::sim::generate_dataset(
        ds, c.seed, c.out, jobs_for(c, rc), [&](std::size_t i, bool skipped) {
            std::cout << "sample " << i + 1 << "/" << ds.count << (skipped ? " kept" : " written") << "\n";
        });
    std::cout << "mean lag-1 correlation " << num(result.mean_lag1_correlation) << "\n";
    std::cout << "manifest " << result.manifest.string() << "\n";
    return 0;
}

int cmd_estimate(const Common& c, const std::string& input) {
    require_out(c, "map raster");
    const auto rc = load_config(c);
    const auto in = qus::io::read_raster(input);
    if (in.has_sidecar && in.meta.kind != qus::io::RasterKind::envelope)
        throw qus::ConfigError(input + ": expected an envelope raster, got " + qus::io::kind_name(in.meta.kind));
    const auto estimator = rc.io.estimator == "k" ? qus::img::xu_k_estimator(rc.solver)
                                                  : qus::img::xu_alpha_estimator(rc.solver);
    const auto map = qus::img::estimate_map(frame_from(in), rc.patch, estimator, jobs_for(c, rc));

    qus::io::RasterMeta meta;
    meta.kind = qus::io::RasterKind::parametric;
    meta.spacing = map.spacing;
    meta.provenance = in.meta.provenance;
    meta.provenance.notes["estimator"] = "xu-" + rc.io.estimator;
    meta.provenance.notes["source"] = fs::path(input).filename().string();
    qus::io::write_raster(c.out, map.data, meta);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < map.data.size(); ++i)
        if (map.validity.storage()[i]) {
            lo = std::min(lo, map.data.storage()[i]);
            hi = std::max(hi, map.data.storage()[i]);
        }
    std::cout << "valid patches " << map.valid_windows() << "/" << map.windows.size() << " ("
              << num(static_cast<double>(map.valid_windows()) / map.windows.size()) << "), " << rc.io.estimator
              << " range [" << num(lo) << ", " << num(hi) << "]\n";
    std::cout << "wrote " << c.out << "\n";
    return 0;
}

int cmd_uncertainty(const Common& c, const std::vector<std::string>& inputs) {
    require_out(c, "output prefix");
    std::vector<qus::img::ParametricMap> maps;
    qus::io::RasterMeta meta;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto f = qus::io::read_raster(inputs[i]);
        if (i == 0) meta = f.meta;
        maps.push_back(qus::img::map_from_raster(f.data, f.meta.spacing));
    }
    const auto agg = qus::img::aggregate_frames(maps);
    meta.provenance.notes["frames"] = std::to_string(inputs.size());
    const std::string mean_path = c.out + "_mean.qusr";
    const std::string unc_path = c.out + "_uncertainty.qusr";
    meta.kind = qus::io::RasterKind::parametric;
    qus::io::write_raster(mean_path, agg.mean.data, meta);
    meta.kind = qus::io::RasterKind::uncertainty;
    qus::io::write_raster(unc_path, agg.uncertainty.data, meta);
    std::cout << "frames " << inputs.size() << ", valid pixels " << num(agg.mean.valid_fraction()) << "\n";
    std::cout << "wrote " << mean_path << "\nwrote " << unc_path << "\n";
    return 0;
}

int cmd_gain(const Common& c, const std::vector<std::string>& refs, const std::string& target,
             std::string curve_path) {
    require_out(c, "normalized raster");
    std::vector<qus::sim::EnvelopeFrame> frames;
    for (const auto& r : refs) frames.push_back(frame_from(qus::io::read_raster(r)));
    const auto tgt = qus::io::read_raster(target);
    if (!frames.empty() && tgt.data.axial() != frames.front().dims().axial)
        throw qus::ConfigError("gain: target has " + std::to_string(tgt.data.axial()) +
                               " depth samples, references have " + std::to_string(frames.front().dims().axial));
    const auto curve = qus::img::fit_gain(frames);
    const auto out = qus::img::apply_gain(frame_from(tgt), curve);
    qus::io::RasterMeta meta = tgt.meta;
    meta.provenance = out.provenance;
    qus::io::write_raster(c.out, out.data, meta);
    if (curve_path.empty()) curve_path = c.out + ".gain.csv";
    qus::io::write_text_file(curve_path, qus::img::gain_curve_csv(curve));
    std::cout << "gain range [" << num(*std::min_element(curve.values.begin(), curve.values.end())) << ", "
              << num(*std::max_element(curve.values.begin(), curve.values.end())) << "]\n";
    std::cout << "wrote " << c.out << "\nwrote " << curve_path << "\n";
    return 0;
}

int cmd_correlation(const std::string& input) {
    const auto f = qus::io::read_raster(input);
    const auto r = qus::sim::lag1_correlation_components(f.data);
    std::cout << "axial " << num(r.axial) << " lateral " << num(r.lateral) << " mean " << num(r.mean()) << "\n";
    return 0;
}

struct HkArgs {
    double alpha = 5.0;
    double k = 0.0;
    double mean_intensity = 1.0;
    std::optional<double> epsilon;
    std::optional<double> sigma2;
};

qus::hk::HKParams hk_params(const HkArgs& h) {
    if (h.epsilon || h.sigma2) {
        if (!(h.epsilon && h.sigma2)) throw qus::ConfigError("hk: give both --epsilon and --sigma2, or neither");
        qus::hk::HKParams p{*h.epsilon, *h.sigma2, h.alpha};
        p.validate();
        return p;
    }
    return qus::hk::HKParams::from_alpha_k(h.alpha, h.k, h.mean_intensity);
}

int cmd_hk_sample(const Common& c, const HkArgs& h, std::size_t n) {
    const auto p = hk_params(h);
    const auto batch = qus::hk::hk_sample(p, n, c.seed);
    if (!c.out.empty()) {
        std::ostringstream os;
        os << std::setprecision(17);
        for (double v : batch.values) os << v << "\n";
        qus::io::write_text_file(c.out, os.str());
    }
    double m2 = 0.0;
    for (double v : batch.values) m2 += v * v;
    std::cout << "n " << n << " mean_intensity " << num(n ? m2 / static_cast<double>(n) : 0.0) << " theory "
              << num(p.mean_intensity());
    if (n >= 2) {
        try {
            const auto s = qus::xu::compute_xu(batch);
            std::cout << " X " << num(s.x) << " U " << num(s.u);
        } catch (const qus::DataError&) {
        }
    }
    std::cout << "\n";
    return 0;
}

int cmd_hk_pdf(const HkArgs& h, const std::vector<double>& points) {
    const auto p = hk_params(h);
    for (double a : points) std::cout << num(a) << " " << num(qus::hk::hk_pdf(a, p)) << "\n";
    return 0;
}

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
    if (with_config) sub->add_option("--config", c.config, "JSON run configuration");
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--out", c.out, "output path");
    sub->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantitative ultrasound toolkit: HK envelope statistics, speckle simulation, parametric maps"};
    app.require_subcommand(1);

    Common common;
    std::string input;
    std::vector<std::string> inputs, refs;
    std::string target, curve_path;
    HkArgs hk;
    std::size_t n = 1000;
    std::vector<double> points;

    auto* simulate = app.add_subcommand("simulate", "generate a labelled dataset of envelope / density rasters");
    add_common(simulate, common);

    auto* estimate = app.add_subcommand("estimate", "XU parametric map of an envelope raster");
    add_common(estimate, common);
    estimate->add_option("--in", input, "envelope raster")->required();

    auto* gain = app.add_subcommand("gain", "reference-phantom depth gain normalization");
    add_common(gain, common);
    gain->add_option("--reference", refs, "reference envelope rasters")->required();
    gain->add_option("--target", target, "raster to normalize")->required();
    gain->add_option("--curve", curve_path, "gain curve CSV (default <out>.gain.csv)");

    auto* uncertainty = app.add_subcommand("uncertainty", "multi-frame mean and uncertainty maps");
    add_common(uncertainty, common);
    uncertainty->add_option("--maps", inputs, "aligned map rasters")->required();

    auto* correlation = app.add_subcommand("correlation", "lag-1 sample correlation of a raster");
    add_common(correlation, common);
    correlation->add_option("--in", input, "raster")->required();

    auto* hkcmd = app.add_subcommand("hk", "HK distribution diagnostics");
    hkcmd->require_subcommand(1);
    auto* hk_sample = hkcmd->add_subcommand("sample", "draw envelope samples");
    auto* hk_pdf = hkcmd->add_subcommand("pdf", "evaluate the envelope density");
    for (auto* sub : {hk_sample, hk_pdf}) {
        add_common(sub, common, false);
        sub->add_option("--alpha", hk.alpha, "clustering parameter");
        sub->add_option("--k", hk.k, "coherent to diffuse power ratio");
        sub->add_option("--mean-intensity", hk.mean_intensity, "mean of A^2");
        sub->add_option("--epsilon", hk.epsilon, "coherent amplitude (with --sigma2)");
        sub->add_option("--sigma2", hk.sigma2, "diffuse scale (with --epsilon)");
    }
    hk_sample->add_option("-n,--count", n, "number of samples");
    hk_pdf->add_option("--at", points, "amplitudes")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(common);
        if (*estimate) return cmd_estimate(common, input);
        if (*gain) return cmd_gain(common, refs, target, curve_path);
        if (*uncertainty) return cmd_uncertainty(common, inputs);
        if (*correlation) return cmd_correlation(input);
        if (*hk_sample) return cmd_hk_sample(common, hk, n);
        if (*hk_pdf) return cmd_hk_pdf(hk, points);
    } catch (const qus::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const qus::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const qus::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const qus::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
