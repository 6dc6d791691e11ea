#pragma once

#include "salibi/tiles.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace salibi {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Channel-first float raster, values in [0,1] for stored samples.
struct Raster {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    static Raster zeros(std::size_t c, std::size_t h, std::size_t w) {
        return Raster{c, h, w, std::vector<float>(c * h * w, 0.0f)};
    }
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
};

struct Raster8 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;
};

// One training sample: co-registered radar, low-res optical and 2x high-res
// optical rasters over the same ground tile.
struct AlignedTriplet {
    TileId tile;
    std::uint32_t class_id = 0;
    Raster radar; // 2 x S x S   (VV-derived green, VH-derived blue, rescaled to [0,1])
    Raster lores; // 3 x S x S
    Raster hires; // 3 x 2S x 2S

    std::size_t size() const { return lores.height; }
    void validate() const;
};

// SAR band packing: red empty, green = clamp(round(vv*256/1000)),
// blue = clamp(round(vh*256/1000)).
Raster8 pack_radar(const Raster& vv, const Raster& vh);

// Deterministic synthetic triplet; pure function of (tile, class_id, seed, size).
// Avoids transcendental libm calls so the output is bit-stable across platforms.
AlignedTriplet synth_triplet(const TileId& tile, std::uint32_t class_id, std::uint64_t seed,
                             std::size_t size);

struct DatasetManifest {
    std::uint32_t version = 1;
    std::uint64_t count = 0;
    std::size_t size = 0; // S
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> offsets; // byte offset of each record in samples.bin
    std::vector<TileId> tiles;
    std::vector<std::uint32_t> classes;
};

std::size_t triplet_record_bytes(std::size_t size);

// Container: <dir>/manifest.json + <dir>/samples.bin (raw records, little-endian).
DatasetManifest write_dataset(const std::vector<AlignedTriplet>& samples,
                              const std::filesystem::path& dir, std::uint64_t seed);

class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& dir);
    const DatasetManifest& manifest() const { return manifest_; }
    std::size_t count() const { return manifest_.count; }
    AlignedTriplet read(std::size_t index) const;

private:
    std::filesystem::path dir_;
    DatasetManifest manifest_;
};

} // namespace salibi
