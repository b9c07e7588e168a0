#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "qus/dataset.hpp"
#include "qus/field_simulator.hpp"
#include "qus/parametric_imaging.hpp"
#include "qus/xu_estimator.hpp"

namespace qus::cfg {

struct SkipConfig {
    std::size_t axial = 0;
    std::size_t lateral = 0;
};

struct IoConfig {
    // Parameter mapped by `estimate`: "alpha" or "k".
    std::string estimator = "alpha";
    unsigned jobs = 1;
};

// JSON document with optional sections psf, phantom, skip, patch, solver,
// dataset and io. Every present section is validated against its type
// invariants when the document is loaded, before any work starts.
struct RunConfig {
    std::optional<sim::PSFSpec> psf;
    std::optional<sim::PhantomSpec> phantom;
    std::optional<SkipConfig> skip;
    img::PatchConfig patch;
    xu::SolverConfig solver;
    std::optional<sim::DatasetConfig> dataset;
    IoConfig io;
    bool dataset_output_given = false;

    // Dataset settings for `simulate`: the dataset section with the fixed
    // psf / phantom / skip sections folded in. Throws ConfigError.
    sim::DatasetConfig dataset_config() const;
};

// ConfigError messages name the offending field ("phantom.regions[1].density
// = 25 outside [1, 20]"); syntax errors carry line and column.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
// Throws IoError when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json phantom_json(const sim::PhantomSpec& phantom);
nlohmann::json dataset_json(const sim::DatasetConfig& cfg);

}  // namespace qus::cfg
