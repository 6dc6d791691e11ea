#pragma once

#include <array>
#include <cstdint>

namespace salibi {

// Slippy-map XYZ tile address.
struct TileId {
    std::uint32_t z = 0;
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    bool operator==(const TileId&) const = default;
};

struct LonLatBBox {
    double west, south, east, north; // degrees
};

inline constexpr double kMercatorLatLimit = 85.0511287798066;

TileId lonlat_to_tile(double lon_deg, double lat_deg, std::uint32_t zoom);
std::array<TileId, 4> tile_children(const TileId& t); // at z+1
TileId tile_parent(const TileId& t);
LonLatBBox tile_to_bbox(const TileId& t);

} // namespace salibi
