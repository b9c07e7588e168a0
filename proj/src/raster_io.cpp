#include "qus/raster_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qus/error.hpp"

namespace qus::io {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

}  // namespace

const char* kind_name(RasterKind kind) noexcept {
    switch (kind) {
        case RasterKind::envelope: return "envelope";
        case RasterKind::rf: return "rf";
        case RasterKind::density: return "density";
        case RasterKind::parametric: return "parametric";
        case RasterKind::uncertainty: return "uncertainty";
    }
    return "?";
}

RasterKind parse_kind(const std::string& name) {
    for (auto k : {RasterKind::envelope, RasterKind::rf, RasterKind::density, RasterKind::parametric,
                   RasterKind::uncertainty})
        if (name == kind_name(k)) return k;
    throw IoError("unknown raster kind '" + name + "'");
}

std::vector<std::uint8_t> encode_raster(const Raster& raster) {
    if (raster.axial() == 0 || raster.lateral() == 0) throw IoError("cannot encode an empty raster");
    if (raster.axial() > UINT32_MAX || raster.lateral() > UINT32_MAX) throw IoError("raster too large");
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 4 * raster.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kVersion);
    put_le<std::uint16_t>(out, kDtypeF32);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(raster.axial()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(raster.lateral()));
    for (double v : raster.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Raster decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < kHeaderBytes) throw IoError(origin + ": truncated QUSR header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError(origin + ": bad magic, not a QUSR raster");
    const auto version = get_le<std::uint16_t>(bytes.data() + 4);
    const auto dtype = get_le<std::uint16_t>(bytes.data() + 6);
    if (version != kVersion) throw IoError(origin + ": unsupported QUSR version " + std::to_string(version));
    if (dtype != kDtypeF32) throw IoError(origin + ": unsupported dtype code " + std::to_string(dtype));
    const Dims dims{get_le<std::uint32_t>(bytes.data() + 8), get_le<std::uint32_t>(bytes.data() + 12)};
    if (dims.axial == 0 || dims.lateral == 0) throw IoError(origin + ": zero dimension");
    if (bytes.size() != kHeaderBytes + 4 * dims.size())
        throw IoError(origin + ": size " + std::to_string(bytes.size()) + " does not match " +
                      std::to_string(dims.axial) + "x" + std::to_string(dims.lateral) + " f32 payload");
    Raster r(dims);
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    for (auto& v : r.storage()) {
        v = std::bit_cast<float>(get_le<std::uint32_t>(p));
        p += 4;
    }
    return r;
}

nlohmann::json psf_json(const sim::PSFSpec& psf) {
    return {{"sigma_a", psf.sigma_a},
            {"sigma_l", psf.sigma_l},
            {"fc_norm", psf.fc_norm},
            {"kernel_half_extent", psf.kernel_half_extent}};
}

sim::PSFSpec psf_from_json(const nlohmann::json& j) {
    sim::PSFSpec psf;
    psf.sigma_a = j.at("sigma_a").get<double>();
    psf.sigma_l = j.at("sigma_l").get<double>();
    psf.fc_norm = j.at("fc_norm").get<double>();
    psf.kernel_half_extent = j.at("kernel_half_extent").get<int>();
    return psf;
}

nlohmann::json sidecar_json(const RasterMeta& meta, Dims dims) {
    nlohmann::json prov = {{"seed", meta.provenance.seed},
                           {"skip", {{"axial", meta.provenance.skip_a}, {"lateral", meta.provenance.skip_l}}},
                           {"notes", meta.provenance.notes}};
    if (meta.provenance.psf) prov["psf"] = psf_json(*meta.provenance.psf);
    return {{"format", "QUSR"},
            {"version", kVersion},
            {"kind", kind_name(meta.kind)},
            {"dims", {{"axial", dims.axial}, {"lateral", dims.lateral}}},
            {"layout", "row-major, axial index major"},
            {"spacing", {{"axial", meta.spacing.axial}, {"lateral", meta.spacing.lateral}}},
            {"provenance", prov}};
}

RasterMeta meta_from_json(const nlohmann::json& j) {
    RasterMeta meta;
    try {
        meta.kind = parse_kind(j.value("kind", std::string("envelope")));
        if (j.contains("spacing")) {
            meta.spacing.axial = j["spacing"].value("axial", 1.0);
            meta.spacing.lateral = j["spacing"].value("lateral", 1.0);
        }
        if (j.contains("provenance")) {
            const auto& p = j["provenance"];
            meta.provenance.seed = p.value("seed", std::uint64_t{0});
            if (p.contains("skip")) {
                meta.provenance.skip_a = p["skip"].value("axial", std::size_t{0});
                meta.provenance.skip_l = p["skip"].value("lateral", std::size_t{0});
            }
            if (p.contains("psf")) meta.provenance.psf = psf_from_json(p["psf"]);
            if (p.contains("notes")) meta.provenance.notes = p["notes"].get<std::map<std::string, std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed raster sidecar: ") + e.what());
    }
    return meta;
}

fs::path sidecar_path(const fs::path& raster_path) {
    fs::path p = raster_path;
    p += ".json";
    return p;
}

void write_binary_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_file(const fs::path& path, const std::string& text) {
    write_binary_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_raster(const fs::path& path, const Raster& raster, const RasterMeta& meta) {
    write_binary_file(path, encode_raster(raster));
    write_text_file(sidecar_path(path), sidecar_json(meta, raster.dims()).dump(2) + "\n");
}

RasterFile read_raster(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open raster " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    RasterFile file;
    file.data = decode_raster(bytes, path.string());
    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        std::ifstream ss(side);
        nlohmann::json j;
        try {
            ss >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(side.string() + ": " + e.what());
        }
        file.meta = meta_from_json(j);
        file.has_sidecar = true;
    }
    return file;
}

}  // namespace qus::io
