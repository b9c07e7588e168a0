#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qus/field_simulator.hpp"
#include "qus/random.hpp"

namespace qus::sim {

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    friend bool operator==(const Range&, const Range&) = default;
};

struct DatasetConfig {
    std::size_t count = 4;
    Dims output{256, 128};  // post-skip, axial x lateral
    std::size_t skip_a = 1;
    std::size_t skip_l = 0;
    Range sigma_a{2.0, 5.0};
    Range sigma_l{3.0, 8.0};
    double fc_norm = 0.25;
    Range density{kDensityMin, kDensityMax};
    Range amp_mean{kAmpMeanMin, kAmpMeanMax};
    int shapes_min = 1;
    int shapes_max = 4;
    Range size_fraction{0.1, 0.6};  // of the canvas, per dimension
    std::optional<PSFSpec> psf;          // fixed instead of drawn
    std::optional<PhantomSpec> phantom;  // fixed instead of drawn

    void validate() const;

    // Pre-skip canvas giving `output` after decimation.
    Dims canvas() const noexcept;
};

struct SampleSpec {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    PSFSpec psf;
    PhantomSpec phantom;
};

// PSF and phantom of sample `index`, fully determined by (cfg, master_seed).
SampleSpec draw_sample(const DatasetConfig& cfg, std::uint64_t master_seed, std::size_t index);

// Random background plus shapes; redrawn while no post-skip pixel keeps the
// background.
PhantomSpec random_phantom(const DatasetConfig& cfg, Rng& rng);

std::string envelope_file_name(std::size_t index);
std::string density_file_name(std::size_t index);
inline constexpr const char* kManifestName = "manifest.json";

struct DatasetResult {
    std::filesystem::path manifest;
    std::size_t written = 0;
    std::size_t skipped = 0;  // already present and readable
    double mean_lag1_correlation = 0.0;
};

using ProgressFn = std::function<void(std::size_t index, bool skipped)>;

// Writes count (envelope, density) raster pairs and manifest.json into
// out_dir. Samples whose files already exist and decode are kept, so an
// interrupted run can be resumed; output does not depend on `jobs`.
DatasetResult generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed,
                               const std::filesystem::path& out_dir, unsigned jobs = 1,
                               const ProgressFn& progress = {});

}  // namespace qus::sim
