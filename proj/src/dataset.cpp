#include "qus/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "qus/error.hpp"
#include "qus/parallel.hpp"
#include "qus/raster_io.hpp"
#include "qus/run_config.hpp"

namespace qus::sim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMaxPhantomDraws = 1000;

void check_range(const std::string& field, Range r, double lo, double hi) {
    for (double v : {r.lo, r.hi})
        if (!(v >= lo && v <= hi)) {
            std::ostringstream os;
            os << field << " = " << v << " outside [" << lo << ", " << hi << "]";
            throw ConfigError(os.str());
        }
    if (r.lo > r.hi) throw ConfigError(field + ": lo > hi");
}

bool background_visible(const PhantomSpec& ph, std::size_t skip_a, std::size_t skip_l) {
    for (std::size_t a = 0; a < ph.canvas.axial; a += skip_a + 1)
        for (std::size_t l = 0; l < ph.canvas.lateral; l += skip_l + 1)
            if (ph.region_at(a, l) == 0) return true;
    return false;
}

Raster round_to_f32(const Raster& r) {
    Raster out = r;
    for (auto& v : out.storage()) v = static_cast<float>(v);
    return out;
}

bool sample_present(const fs::path& env, const fs::path& den) {
    try {
        const auto e = io::read_raster(env);
        const auto d = io::read_raster(den);
        return e.has_sidecar && d.has_sidecar && e.data.dims() == d.data.dims();
    } catch (const IoError&) {
        return false;
    }
}

struct SampleRecord {
    std::size_t scatterers = 0;
    double correlation = 0.0;
};

}  // namespace

void DatasetConfig::validate() const {
    if (count == 0) throw ConfigError("dataset.count must be >= 1");
    if (output.axial < 8 || output.lateral < 8) throw ConfigError("dataset.output must be at least 8 x 8");
    if (psf) {
        psf->validate();
    } else {
        if (!(sigma_a.lo > 0.0)) throw ConfigError("dataset.sigma_a must be > 0");
        if (!(sigma_l.lo > 0.0)) throw ConfigError("dataset.sigma_l must be > 0");
        if (sigma_a.lo > sigma_a.hi || sigma_l.lo > sigma_l.hi) throw ConfigError("dataset.sigma ranges: lo > hi");
        if (!(fc_norm > 0.0 && fc_norm < 0.5)) throw ConfigError("dataset.fc_norm must lie in (0, 0.5)");
    }
    if (phantom) {
        phantom->validate();
        if (decimated_dims(phantom->canvas, skip_a, skip_l) != output)
            throw ConfigError("phantom.canvas does not decimate to dataset.output");
    } else {
        check_range("dataset.density", density, kDensityMin, kDensityMax);
        check_range("dataset.amp_mean", amp_mean, kAmpMeanMin, kAmpMeanMax);
        if (shapes_min < 0 || shapes_min > shapes_max) throw ConfigError("dataset.shapes must satisfy 0 <= lo <= hi");
        check_range("dataset.size_fraction", size_fraction, 0.0, 1.0);
        if (!(size_fraction.lo > 0.0)) throw ConfigError("dataset.size_fraction must be > 0");
    }
    // every draw must satisfy density <= grid points per resolution cell
    const double cell = psf ? psf->resolution_cell_points() : 9.0 * sigma_a.lo * sigma_l.lo;
    double dmax = density.hi;
    if (phantom) {
        dmax = 0.0;
        for (const auto& r : phantom->regions) dmax = std::max(dmax, r.density);
    }
    if (dmax > cell) {
        std::ostringstream os;
        os << "density " << dmax << " exceeds the " << cell << " grid points of the smallest resolution cell";
        throw ConfigError(os.str());
    }
    // the widest PSF that can be drawn must fit inside the canvas
    const int half = psf ? psf->kernel_half_extent
                         : static_cast<int>(std::ceil(3.0 * std::max(sigma_a.hi, sigma_l.hi)));
    const Dims c = phantom ? phantom->canvas : canvas();
    const auto side = static_cast<std::size_t>(2 * half + 1);
    if (c.axial < side || c.lateral < side) {
        std::ostringstream os;
        os << "dataset.output: canvas " << c.axial << "x" << c.lateral << " is smaller than the " << side << "x"
           << side << " PSF kernel";
        throw ConfigError(os.str());
    }
}

Dims DatasetConfig::canvas() const noexcept {
    return {output.axial * (skip_a + 1), output.lateral * (skip_l + 1)};
}

PhantomSpec random_phantom(const DatasetConfig& cfg, Rng& rng) {
    const Dims canvas = cfg.canvas();
    for (int attempt = 0; attempt < kMaxPhantomDraws; ++attempt) {
        PhantomSpec ph;
        ph.canvas = canvas;
        Region bg;
        bg.density = rng.uniform(cfg.density.lo, cfg.density.hi);
        bg.amp_mean = rng.uniform(cfg.amp_mean.lo, cfg.amp_mean.hi);
        ph.regions.push_back(bg);
        const int n = rng.uniform_int(cfg.shapes_min, cfg.shapes_max);
        for (int s = 0; s < n; ++s) {
            Region r;
            r.shape = rng.bernoulli(0.5) ? Shape::rectangle : Shape::ellipse;
            r.half_a = 0.5 * rng.uniform(cfg.size_fraction.lo, cfg.size_fraction.hi) * canvas.axial;
            r.half_l = 0.5 * rng.uniform(cfg.size_fraction.lo, cfg.size_fraction.hi) * canvas.lateral;
            r.center_a = rng.uniform(0.0, static_cast<double>(canvas.axial));
            r.center_l = rng.uniform(0.0, static_cast<double>(canvas.lateral));
            r.density = rng.uniform(cfg.density.lo, cfg.density.hi);
            r.amp_mean = rng.uniform(cfg.amp_mean.lo, cfg.amp_mean.hi);
            ph.regions.push_back(r);
        }
        if (background_visible(ph, cfg.skip_a, cfg.skip_l)) return ph;
    }
    throw ConfigError("dataset: could not draw a phantom that leaves background visible; reduce dataset.size_fraction");
}

SampleSpec draw_sample(const DatasetConfig& cfg, std::uint64_t master_seed, std::size_t index) {
    SampleSpec s;
    s.index = index;
    s.seed = derive_seed(master_seed, index);
    Rng rng(s.seed);
    if (cfg.psf) {
        s.psf = *cfg.psf;
    } else {
        const double sa = rng.uniform(cfg.sigma_a.lo, cfg.sigma_a.hi);
        const double sl = rng.uniform(cfg.sigma_l.lo, cfg.sigma_l.hi);
        s.psf = PSFSpec::with_default_extent(sa, sl, cfg.fc_norm);
    }
    s.phantom = cfg.phantom ? *cfg.phantom : random_phantom(cfg, rng);
    return s;
}

std::string envelope_file_name(std::size_t index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "sample_%06zu_envelope.qusr", index);
    return buf;
}

std::string density_file_name(std::size_t index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "sample_%06zu_density.qusr", index);
    return buf;
}

DatasetResult generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed, const fs::path& out_dir,
                               unsigned jobs, const ProgressFn& progress) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));

    std::vector<SampleSpec> specs(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) specs[i] = draw_sample(cfg, master_seed, i);

    std::vector<SampleRecord> records(cfg.count);
    std::vector<char> skipped(cfg.count, 0);
    std::mutex progress_mutex;

    parallel_for(cfg.count, jobs, [&](std::size_t i) {
        const SampleSpec& spec = specs[i];
        const fs::path env_path = out_dir / envelope_file_name(i);
        const fs::path den_path = out_dir / density_file_name(i);
        if (sample_present(env_path, den_path)) {
            const auto env = io::read_raster(env_path);
            const auto it = env.meta.provenance.notes.find("scatterers");
            records[i].scatterers = it == env.meta.provenance.notes.end() ? 0 : std::stoull(it->second);
            records[i].correlation = lag1_correlation(env.data);
            skipped[i] = 1;
        } else {
            const std::uint64_t sim_seed = derive_seed(spec.seed, 1);
            SimulatedFrame f = simulate_frame(spec.phantom, spec.psf, cfg.skip_a, cfg.skip_l, sim_seed);
            f.envelope.data = round_to_f32(f.envelope.data);
            records[i].scatterers = f.scatterers;
            records[i].correlation = lag1_correlation(f.envelope.data);

            io::RasterMeta meta;
            meta.kind = io::RasterKind::envelope;
            meta.spacing = f.envelope.spacing;
            meta.provenance = f.envelope.provenance;
            meta.provenance.seed = spec.seed;
            meta.provenance.notes["index"] = std::to_string(i);
            meta.provenance.notes["scatterers"] = std::to_string(f.scatterers);
            io::write_raster(env_path, f.envelope.data, meta);

            meta.kind = io::RasterKind::density;
            meta.provenance.notes.erase("scatterers");
            io::write_raster(den_path, f.density, meta);
        }
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(i, skipped[i] != 0);
        }
    });

    DatasetResult result;
    json samples = json::array();
    double corr_sum = 0.0;
    for (std::size_t i = 0; i < cfg.count; ++i) {
        const SampleSpec& s = specs[i];
        samples.push_back({{"index", i},
                           {"seed", s.seed},
                           {"envelope", envelope_file_name(i)},
                           {"density", density_file_name(i)},
                           {"psf", io::psf_json(s.psf)},
                           {"phantom", cfg::phantom_json(s.phantom)},
                           {"scatterers", records[i].scatterers},
                           {"lag1_correlation", records[i].correlation}});
        corr_sum += records[i].correlation;
        (skipped[i] ? result.skipped : result.written)++;
    }
    result.mean_lag1_correlation = corr_sum / static_cast<double>(cfg.count);

    const json manifest = {{"format", "qus-dataset"},
                           {"version", 1},
                           {"master_seed", master_seed},
                           {"count", cfg.count},
                           {"layout", "row-major, axial index major"},
                           {"resolution_cell", "(3 sigma_a) x (3 sigma_l) grid points"},
                           {"config", cfg::dataset_json(cfg)},
                           {"mean_lag1_correlation", result.mean_lag1_correlation},
                           {"samples", samples}};
    result.manifest = out_dir / kManifestName;
    io::write_text_file(result.manifest, manifest.dump(2) + "\n");
    return result;
}

}  // namespace qus::sim
