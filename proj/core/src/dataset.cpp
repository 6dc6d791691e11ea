#include "salibi/dataset.hpp"

#include "salibi/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace salibi {

using nlohmann::json;

void AlignedTriplet::validate() const {
    const std::size_t S = lores.height;
    auto dims_ok = [](const Raster& r, std::size_t c, std::size_t s) {
        return r.channels == c && r.height == s && r.width == s && r.data.size() == c * s * s;
    };
    if (!dims_ok(radar, 2, S) || !dims_ok(lores, 3, S) || !dims_ok(hires, 3, 2 * S))
        throw FormatError("AlignedTriplet: inconsistent raster dimensions (S=" +
                          std::to_string(S) + ")");
    for (const Raster* r : {&radar, &lores, &hires})
        for (float v : r->data)
            if (!std::isfinite(v)) throw FormatError("AlignedTriplet: non-finite raster value");
}

Raster8 pack_radar(const Raster& vv, const Raster& vh) {
    if (vv.height != vh.height || vv.width != vh.width || vv.channels != 1 || vh.channels != 1)
        throw std::invalid_argument("pack_radar: vv/vh must be single-channel rasters of equal size");
    const std::size_t S = vv.height, W = vv.width;
    Raster8 out{3, S, W, std::vector<std::uint8_t>(3 * S * W, 0)};
    auto quantize = [](float v) -> std::uint8_t {
        const double scaled = std::round(static_cast<double>(v) * 256.0 / 1000.0);
        return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
    };
    for (std::size_t i = 0; i < S * W; ++i) {
        out.data[1 * S * W + i] = quantize(vv.data[i]); // green
        out.data[2 * S * W + i] = quantize(vh.data[i]); // blue
    }
    return out;
}

namespace {

// value noise: smoothstep-interpolated lattice of uniform samples; polynomial
// only, so outputs are identical across platforms
struct ValueNoise {
    std::size_t cells; // lattice cells per axis
    std::vector<double> lattice; // (cells+1)^2

    ValueNoise(std::size_t cells_, Rng& rng) : cells(cells_), lattice((cells_ + 1) * (cells_ + 1)) {
        for (auto& v : lattice) v = rng.uniform();
    }

    double sample(double u, double v) const { // u,v in [0,1)
        const double fu = u * static_cast<double>(cells);
        const double fv = v * static_cast<double>(cells);
        const std::size_t cu = std::min<std::size_t>(static_cast<std::size_t>(fu), cells - 1);
        const std::size_t cv = std::min<std::size_t>(static_cast<std::size_t>(fv), cells - 1);
        double tu = fu - static_cast<double>(cu);
        double tv = fv - static_cast<double>(cv);
        tu = tu * tu * (3.0 - 2.0 * tu);
        tv = tv * tv * (3.0 - 2.0 * tv);
        const std::size_t w = cells + 1;
        const double a = lattice[cv * w + cu], b = lattice[cv * w + cu + 1];
        const double c = lattice[(cv + 1) * w + cu], d = lattice[(cv + 1) * w + cu + 1];
        const double top = a + (b - a) * tu;
        const double bot = c + (d - c) * tu;
        return top + (bot - top) * tv;
    }
};

// Catmull-Rom kernel for the 2x hires upsample
double catmull_rom(double t) {
    const double a = std::abs(t);
    if (a < 1.0) return 1.0 - a * a * (2.5 - 1.5 * a);
    if (a < 2.0) return 2.0 - a * (4.0 - a * (2.5 - 0.5 * a));
    return 0.0;
}

double sample_bicubic(const Raster& img, std::size_t ch, double y, double x) {
    const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    const long y0 = static_cast<long>(std::floor(y));
    const long x0 = static_cast<long>(std::floor(x));
    double acc = 0.0;
    for (long dy = -1; dy <= 2; ++dy) {
        const long yy = std::clamp(y0 + dy, 0L, h - 1);
        const double wy = catmull_rom(y - static_cast<double>(y0 + dy));
        for (long dx = -1; dx <= 2; ++dx) {
            const long xx = std::clamp(x0 + dx, 0L, w - 1);
            const double wx = catmull_rom(x - static_cast<double>(x0 + dx));
            acc += wy * wx * static_cast<double>(img.at(ch, static_cast<std::size_t>(yy),
                                                        static_cast<std::size_t>(xx)));
        }
    }
    return acc;
}

std::size_t class_cells(std::uint32_t class_id, std::size_t size) {
    // class-dependent spectrum: coarser lattice -> lower spatial frequency
    const std::size_t cells = std::size_t{2} << (class_id % 4); // 2,4,8,16
    return std::min(cells, size / 2);
}

} // namespace

AlignedTriplet synth_triplet(const TileId& tile, std::uint32_t class_id, std::uint64_t seed,
                             std::size_t size) {
    if (size < 8 || size % 2 != 0)
        throw std::invalid_argument("synth_triplet: size must be even and >= 8");
    const std::size_t S = size;
    const std::uint64_t key = mix_key(seed, tile.z, tile.x, tile.y, class_id);
    Rng rng(key);

    AlignedTriplet t;
    t.tile = tile;
    t.class_id = class_id;
    t.lores = Raster::zeros(3, S, S);
    t.hires = Raster::zeros(3, 2 * S, 2 * S);
    t.radar = Raster::zeros(2, S, S);

    // lores: band-limited value-noise field, spectrum set by class
    const std::size_t cells = class_cells(class_id, S);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        ValueNoise field(cells, rng);
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(S);
                const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(S);
                t.lores.at(ch, y, x) = static_cast<float>(field.sample(u, v));
            }
    }

    // hires: bicubic 2x upsample of lores plus seeded high-frequency detail,
    // so the hires stream carries information lores lacks
    const std::size_t detail_cells = S; // one cell per lores pixel -> above lores band
    for (std::size_t ch = 0; ch < 3; ++ch) {
        ValueNoise detail(detail_cells, rng);
        for (std::size_t y = 0; y < 2 * S; ++y)
            for (std::size_t x = 0; x < 2 * S; ++x) {
                const double sy = (static_cast<double>(y) + 0.5) / 2.0 - 0.5;
                const double sx = (static_cast<double>(x) + 0.5) / 2.0 - 0.5;
                double val = sample_bicubic(t.lores, ch, sy, sx);
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(2 * S);
                const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(2 * S);
                val += 0.1 * (detail.sample(u, v) - 0.5);
                t.hires.at(ch, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
    }

    // radar: nonlinear transforms of lores structure with multiplicative speckle,
    // run through the same packing rule as real SAR ingestion
    Raster vv = Raster::zeros(1, S, S);
    Raster vh = Raster::zeros(1, S, S);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double lum = (t.lores.at(0, y, x) + t.lores.at(1, y, x) + t.lores.at(2, y, x)) / 3.0;
            const double gx = (x + 1 < S ? t.lores.at(0, y, x + 1) : t.lores.at(0, y, x)) -
                              t.lores.at(0, y, x);
            const double gy = (y + 1 < S ? t.lores.at(0, y + 1, x) : t.lores.at(0, y, x)) -
                              t.lores.at(0, y, x);
            const double grad = std::sqrt(gx * gx + gy * gy);
            const double speckle_vv = 0.7 + 0.6 * rng.uniform();
            const double speckle_vh = 0.7 + 0.6 * rng.uniform();
            vv.at(0, y, x) = static_cast<float>(1000.0 * lum * lum * speckle_vv);
            vh.at(0, y, x) = static_cast<float>(1000.0 * 2.0 * grad * speckle_vh);
        }
    const Raster8 packed = pack_radar(vv, vh);
    for (std::size_t i = 0; i < S * S; ++i) {
        t.radar.data[i] = static_cast<float>(packed.data[1 * S * S + i]) / 255.0f;        // green
        t.radar.data[S * S + i] = static_cast<float>(packed.data[2 * S * S + i]) / 255.0f; // blue
    }
    t.validate();
    return t;
}

std::size_t triplet_record_bytes(std::size_t size) {
    // tile z,x,y + class (4 x u32) then radar/lores/hires as f32
    const std::size_t floats = 2 * size * size + 3 * size * size + 3 * 4 * size * size;
    return 16 + 4 * floats;
}

namespace {

constexpr const char* kFormatName = "salibi-dataset";

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32s(std::ostream& os, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    // assumes little-endian host, checked at read time via manifest version
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

void read_f32s(std::istream& is, std::vector<float>& v) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

} // namespace

DatasetManifest write_dataset(const std::vector<AlignedTriplet>& samples,
                              const std::filesystem::path& dir, std::uint64_t seed) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    std::size_t S = 0;
    for (const auto& s : samples) {
        s.validate();
        if (S == 0) S = s.size();
        if (s.size() != S)
            throw std::invalid_argument("write_dataset: mixed sample sizes " + std::to_string(S) +
                                        " and " + std::to_string(s.size()));
    }

    DatasetManifest m;
    m.count = samples.size();
    m.size = S;
    m.seed = seed;

    std::ofstream bin(dir / "samples.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw FormatError("write_dataset: cannot open " + (dir / "samples.bin").string());
    std::uint64_t offset = 0;
    for (const auto& s : samples) {
        m.offsets.push_back(offset);
        m.tiles.push_back(s.tile);
        m.classes.push_back(s.class_id);
        write_u32(bin, s.tile.z);
        write_u32(bin, s.tile.x);
        write_u32(bin, s.tile.y);
        write_u32(bin, s.class_id);
        write_f32s(bin, s.radar.data);
        write_f32s(bin, s.lores.data);
        write_f32s(bin, s.hires.data);
        offset += triplet_record_bytes(S);
    }
    bin.close();
    if (!bin) throw FormatError("write_dataset: write failed for " + (dir / "samples.bin").string());

    json j;
    j["format"] = kFormatName;
    j["version"] = m.version;
    j["count"] = m.count;
    j["size"] = m.size;
    j["seed"] = m.seed;
    j["offsets"] = m.offsets;
    json recs = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i)
        recs.push_back({{"z", m.tiles[i].z},
                        {"x", m.tiles[i].x},
                        {"y", m.tiles[i].y},
                        {"class", m.classes[i]}});
    j["samples"] = recs;

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw FormatError("write_dataset: cannot open " + (dir / "manifest.json").string());
    mf << j.dump(2) << "\n";
    return m;
}

DatasetReader::DatasetReader(const std::filesystem::path& dir) : dir_(dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw FormatError("dataset: missing manifest.json in " + dir.string());
    json j;
    try {
        mf >> j;
    } catch (const json::exception& e) {
        throw FormatError("dataset: manifest.json is not valid JSON: " + std::string(e.what()));
    }
    if (!j.contains("format") || j["format"] != kFormatName)
        throw FormatError("dataset: bad format magic in manifest.json");
    if (!j.contains("version") || j["version"].get<std::uint32_t>() != 1)
        throw FormatError("dataset: unsupported manifest version");
    manifest_.count = j.at("count").get<std::uint64_t>();
    manifest_.size = j.at("size").get<std::size_t>();
    manifest_.seed = j.value("seed", std::uint64_t{0});
    manifest_.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
    for (const auto& r : j.at("samples")) {
        manifest_.tiles.push_back(TileId{r.at("z").get<std::uint32_t>(),
                                         r.at("x").get<std::uint32_t>(),
                                         r.at("y").get<std::uint32_t>()});
        manifest_.classes.push_back(r.at("class").get<std::uint32_t>());
    }
    if (manifest_.offsets.size() != manifest_.count || manifest_.tiles.size() != manifest_.count)
        throw FormatError("dataset: manifest count " + std::to_string(manifest_.count) +
                          " does not match record list size " +
                          std::to_string(manifest_.offsets.size()));
    for (std::size_t i = 1; i < manifest_.offsets.size(); ++i)
        if (manifest_.offsets[i] <= manifest_.offsets[i - 1])
            throw FormatError("dataset: offsets not strictly increasing at index " +
                              std::to_string(i));

    const auto record = triplet_record_bytes(manifest_.size);
    std::error_code ec;
    const auto actual = std::filesystem::file_size(dir / "samples.bin", ec);
    if (ec) throw FormatError("dataset: missing samples.bin in " + dir.string());
    if (actual != manifest_.count * record)
        throw FormatError("dataset: samples.bin has " + std::to_string(actual) +
                          " bytes, expected " + std::to_string(manifest_.count * record));
}

AlignedTriplet DatasetReader::read(std::size_t index) const {
    if (index >= manifest_.count)
        throw std::out_of_range("dataset: sample index " + std::to_string(index) +
                                " out of range (count " + std::to_string(manifest_.count) + ")");
    const std::size_t S = manifest_.size;
    std::ifstream bin(dir_ / "samples.bin", std::ios::binary);
    if (!bin) throw FormatError("dataset: cannot open samples.bin");
    bin.seekg(static_cast<std::streamoff>(manifest_.offsets[index]));

    AlignedTriplet t;
    t.tile.z = read_u32(bin);
    t.tile.x = read_u32(bin);
    t.tile.y = read_u32(bin);
    t.class_id = read_u32(bin);
    t.radar = Raster::zeros(2, S, S);
    t.lores = Raster::zeros(3, S, S);
    t.hires = Raster::zeros(3, 2 * S, 2 * S);
    read_f32s(bin, t.radar.data);
    read_f32s(bin, t.lores.data);
    read_f32s(bin, t.hires.data);
    if (!bin)
        throw FormatError("dataset: truncated record at index " + std::to_string(index));
    return t;
}

} // namespace salibi
