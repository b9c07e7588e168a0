#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qus/field_simulator.hpp"
#include "qus/raster.hpp"

namespace qus::io {

// QUSR raster layout, all fields little-endian:
//   offset 0   char[4]  "QUSR"
//   offset 4   u16      format version (1)
//   offset 6   u16      dtype code (1 = f32)
//   offset 8   u32      axial dimension
//   offset 12  u32      lateral dimension
//   offset 16  f32[axial * lateral], row-major with the axial index major
// Invalid map pixels are stored as NaN. Metadata lives in a JSON sidecar
// next to the raster: "<file>.json".
inline constexpr char kMagic[4] = {'Q', 'U', 'S', 'R'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kDtypeF32 = 1;
inline constexpr std::size_t kHeaderBytes = 16;

enum class RasterKind { envelope, rf, density, parametric, uncertainty };

const char* kind_name(RasterKind kind) noexcept;
RasterKind parse_kind(const std::string& name);

struct RasterMeta {
    RasterKind kind = RasterKind::envelope;
    Spacing spacing{};
    sim::Provenance provenance;
};

std::vector<std::uint8_t> encode_raster(const Raster& raster);
// Throws IoError on a malformed buffer (bad magic, version, dtype, length).
Raster decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<buffer>");

nlohmann::json sidecar_json(const RasterMeta& meta, Dims dims);
RasterMeta meta_from_json(const nlohmann::json& j);

std::filesystem::path sidecar_path(const std::filesystem::path& raster_path);

void write_raster(const std::filesystem::path& path, const Raster& raster, const RasterMeta& meta);

struct RasterFile {
    Raster data;
    RasterMeta meta;
    bool has_sidecar = false;
};

// Reads the raster and, when present, its sidecar. Throws IoError.
RasterFile read_raster(const std::filesystem::path& path);

// Writes through a temporary file and renames into place.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

nlohmann::json psf_json(const sim::PSFSpec& psf);
sim::PSFSpec psf_from_json(const nlohmann::json& j);

}  // namespace qus::io
