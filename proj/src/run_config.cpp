#include "qus/run_config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "qus/error.hpp"
#include "qus/raster_io.hpp"

namespace qus::cfg {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Reader for one JSON object that tracks its dotted path for diagnostics
// and rejects keys it was not asked about.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [key, value] : j_.items()) {
            bool known = false;
            for (const char* k : keys) known = known || key == k;
            if (!known) throw ConfigError(field(key) + ": unknown field");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) const { return j_.at(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const char* key, double fallback) const {
        if (!has(key)) return fallback;
        return as_number(j_.at(key), field(key));
    }

    double required_number(const char* key) const {
        if (!has(key)) throw ConfigError(field(key) + ": required field missing");
        return as_number(j_.at(key), field(key));
    }

    std::size_t count(const char* key, std::size_t fallback) const {
        if (!has(key)) return fallback;
        return as_count(j_.at(key), field(key));
    }

    std::size_t required_count(const char* key) const {
        if (!has(key)) throw ConfigError(field(key) + ": required field missing");
        return as_count(j_.at(key), field(key));
    }

    std::string string(const char* key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_string()) throw ConfigError(field(key) + ": expected a string");
        return j_.at(key).get<std::string>();
    }

    sim::Range range(const char* key, sim::Range fallback) const {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        const std::string f = field(key);
        if (!v.is_array() || v.size() != 2) throw ConfigError(f + ": expected [lo, hi]");
        sim::Range r{as_number(v[0], f + "[0]"), as_number(v[1], f + "[1]")};
        if (r.lo > r.hi) throw ConfigError(f + ": lo " + fmt(r.lo) + " > hi " + fmt(r.hi));
        return r;
    }

    static double as_number(const json& v, const std::string& f) {
        if (!v.is_number()) throw ConfigError(f + ": expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(f + ": must be finite");
        return d;
    }

    static std::size_t as_count(const json& v, const std::string& f) {
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
            throw ConfigError(f + ": expected a non-negative integer");
        return v.get<std::size_t>();
    }

private:
    const json& j_;
    std::string path_;
};

Dims read_dims(const Section& parent, const char* key) {
    Section s(parent.at(key), parent.field(key));
    s.allow({"axial", "lateral"});
    return {s.required_count("axial"), s.required_count("lateral")};
}

sim::PSFSpec read_psf(const json& j) {
    Section s(j, "psf");
    s.allow({"sigma_a", "sigma_l", "fc_norm", "kernel_half_extent"});
    const sim::PSFSpec defaults;
    auto psf = sim::PSFSpec::with_default_extent(s.number("sigma_a", defaults.sigma_a),
                                                 s.number("sigma_l", defaults.sigma_l),
                                                 s.number("fc_norm", defaults.fc_norm));
    if (s.has("kernel_half_extent"))
        psf.kernel_half_extent = static_cast<int>(s.required_count("kernel_half_extent"));
    psf.validate();
    return psf;
}

sim::PhantomSpec read_phantom(const json& j) {
    Section s(j, "phantom");
    s.allow({"canvas", "regions"});
    if (!s.has("canvas")) throw ConfigError("phantom.canvas: required field missing");
    sim::PhantomSpec ph;
    ph.canvas = read_dims(s, "canvas");
    if (!s.has("regions") || !s.at("regions").is_array() || s.at("regions").empty())
        throw ConfigError("phantom.regions: expected a non-empty array");
    const json& regions = s.at("regions");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        Section r(regions[i], "phantom.regions[" + std::to_string(i) + "]");
        r.allow({"shape", "center_a", "center_l", "half_a", "half_l", "density", "amp_mean"});
        sim::Region reg;
        try {
            reg.shape = sim::parse_shape(r.string("shape", i == 0 ? "background" : "rectangle"));
        } catch (const ConfigError& e) {
            throw ConfigError(r.field("shape") + ": " + e.what());
        }
        reg.density = r.required_number("density");
        reg.amp_mean = r.number("amp_mean", 1.0);
        if (reg.shape != sim::Shape::background) {
            reg.center_a = r.required_number("center_a");
            reg.center_l = r.required_number("center_l");
            reg.half_a = r.required_number("half_a");
            reg.half_l = r.required_number("half_l");
        }
        ph.regions.push_back(reg);
    }
    ph.validate();
    return ph;
}

SkipConfig read_skip(const json& j) {
    Section s(j, "skip");
    s.allow({"axial", "lateral"});
    return {s.count("axial", 0), s.count("lateral", 0)};
}

img::PatchConfig read_patch(const json& j) {
    Section s(j, "patch");
    s.allow({"extent_axial", "extent_lateral", "unit", "overlap", "min_valid_samples"});
    img::PatchConfig p;
    p.extent_axial = s.number("extent_axial", p.extent_axial);
    p.extent_lateral = s.number("extent_lateral", p.extent_lateral);
    const std::string unit = s.string("unit", "samples");
    if (unit == "samples")
        p.unit = img::ExtentUnit::samples;
    else if (unit == "physical")
        p.unit = img::ExtentUnit::physical;
    else
        throw ConfigError("patch.unit: expected \"samples\" or \"physical\", got \"" + unit + "\"");
    p.overlap_fraction = s.number("overlap", p.overlap_fraction);
    p.min_valid_samples = s.count("min_valid_samples", p.min_valid_samples);
    p.validate();
    return p;
}

xu::SolverConfig read_solver(const json& j) {
    Section s(j, "solver");
    s.allow({"alpha_min", "alpha_max", "k_min", "k_max", "tolerance", "max_iterations"});
    xu::SolverConfig c;
    c.alpha_min = s.number("alpha_min", c.alpha_min);
    c.alpha_max = s.number("alpha_max", c.alpha_max);
    c.k_min = s.number("k_min", c.k_min);
    c.k_max = s.number("k_max", c.k_max);
    c.tolerance = s.number("tolerance", c.tolerance);
    c.max_iterations = static_cast<int>(s.count("max_iterations", static_cast<std::size_t>(c.max_iterations)));
    c.validate();
    return c;
}

sim::DatasetConfig read_dataset(const json& j) {
    Section s(j, "dataset");
    s.allow({"count", "output", "sigma_a", "sigma_l", "fc_norm", "density", "amp_mean", "shapes", "size_fraction"});
    sim::DatasetConfig d;
    d.count = s.count("count", d.count);
    if (s.has("output")) d.output = read_dims(s, "output");
    d.sigma_a = s.range("sigma_a", d.sigma_a);
    d.sigma_l = s.range("sigma_l", d.sigma_l);
    d.fc_norm = s.number("fc_norm", d.fc_norm);
    d.density = s.range("density", d.density);
    d.amp_mean = s.range("amp_mean", d.amp_mean);
    const auto shapes = s.range("shapes", {static_cast<double>(d.shapes_min), static_cast<double>(d.shapes_max)});
    if (shapes.lo != std::floor(shapes.lo) || shapes.hi != std::floor(shapes.hi))
        throw ConfigError("dataset.shapes: bounds must be integers");
    d.shapes_min = static_cast<int>(shapes.lo);
    d.shapes_max = static_cast<int>(shapes.hi);
    d.size_fraction = s.range("size_fraction", d.size_fraction);
    return d;
}

IoConfig read_io(const json& j) {
    Section s(j, "io");
    s.allow({"estimator", "jobs"});
    IoConfig io;
    io.estimator = s.string("estimator", io.estimator);
    if (io.estimator != "alpha" && io.estimator != "k")
        throw ConfigError("io.estimator: expected \"alpha\" or \"k\", got \"" + io.estimator + "\"");
    io.jobs = static_cast<unsigned>(s.count("jobs", io.jobs));
    if (io.jobs == 0) throw ConfigError("io.jobs: must be >= 1");
    return io;
}

std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

json range_json(sim::Range r) { return json::array({r.lo, r.hi}); }

}  // namespace

sim::DatasetConfig RunConfig::dataset_config() const {
    sim::DatasetConfig d = dataset.value_or(sim::DatasetConfig{});
    if (skip) {
        d.skip_a = skip->axial;
        d.skip_l = skip->lateral;
    }
    d.psf = psf;
    d.phantom = phantom;
    if (phantom) {
        const Dims out = sim::decimated_dims(phantom->canvas, d.skip_a, d.skip_l);
        if (dataset_output_given && dataset->output != out)
            throw ConfigError("dataset.output does not match phantom.canvas after skipping");
        d.output = out;
    }
    d.validate();
    return d;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ":" + line_col(text, e.byte) + ": syntax error: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");
    Section root(j, "");
    root.allow({"psf", "phantom", "skip", "patch", "solver", "dataset", "io"});
    RunConfig c;
    try {
        if (j.contains("psf")) c.psf = read_psf(j["psf"]);
        if (j.contains("phantom")) c.phantom = read_phantom(j["phantom"]);
        if (j.contains("skip")) c.skip = read_skip(j["skip"]);
        if (j.contains("patch")) c.patch = read_patch(j["patch"]);
        if (j.contains("solver")) c.solver = read_solver(j["solver"]);
        if (j.contains("dataset")) {
            c.dataset = read_dataset(j["dataset"]);
            c.dataset_output_given = j["dataset"].contains("output");
        }
        if (j.contains("io")) c.io = read_io(j["io"]);
        if (c.dataset || c.psf || c.phantom) (void)c.dataset_config();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse_run_config(os.str(), path.string());
}

json phantom_json(const sim::PhantomSpec& phantom) {
    json regions = json::array();
    for (const auto& r : phantom.regions) {
        json jr = {{"shape", sim::shape_name(r.shape)}, {"density", r.density}, {"amp_mean", r.amp_mean}};
        if (r.shape != sim::Shape::background) {
            jr["center_a"] = r.center_a;
            jr["center_l"] = r.center_l;
            jr["half_a"] = r.half_a;
            jr["half_l"] = r.half_l;
        }
        regions.push_back(jr);
    }
    return {{"canvas", {{"axial", phantom.canvas.axial}, {"lateral", phantom.canvas.lateral}}}, {"regions", regions}};
}

json dataset_json(const sim::DatasetConfig& cfg) {
    json j = {{"count", cfg.count},
              {"output", {{"axial", cfg.output.axial}, {"lateral", cfg.output.lateral}}},
              {"skip", {{"axial", cfg.skip_a}, {"lateral", cfg.skip_l}}},
              {"sigma_a", range_json(cfg.sigma_a)},
              {"sigma_l", range_json(cfg.sigma_l)},
              {"fc_norm", cfg.fc_norm},
              {"density", range_json(cfg.density)},
              {"amp_mean", range_json(cfg.amp_mean)},
              {"shapes", json::array({cfg.shapes_min, cfg.shapes_max})},
              {"size_fraction", range_json(cfg.size_fraction)}};
    if (cfg.psf) j["psf"] = io::psf_json(*cfg.psf);
    if (cfg.phantom) j["phantom"] = phantom_json(*cfg.phantom);
    return j;
}

}  // namespace qus::cfg
