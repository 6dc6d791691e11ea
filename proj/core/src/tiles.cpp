#include "salibi/tiles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace salibi {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TileId lonlat_to_tile(double lon_deg, double lat_deg, std::uint32_t zoom) {
    if (lon_deg < -180.0 || lon_deg >= 180.0)
        throw std::range_error("lonlat_to_tile: longitude " + std::to_string(lon_deg) +
                                " outside [-180, 180)");
    if (std::abs(lat_deg) > kMercatorLatLimit)
        throw std::range_error("lonlat_to_tile: latitude " + std::to_string(lat_deg) +
                                " beyond Web-Mercator limit " + std::to_string(kMercatorLatLimit));
    const double n = std::exp2(static_cast<double>(zoom));
    const double phi = lat_deg * kPi / 180.0;
    double xf = (lon_deg + 180.0) / 360.0 * n;
    double yf = (1.0 - std::log(std::tan(phi) + 1.0 / std::cos(phi)) / kPi) / 2.0 * n;
    const double max_idx = n - 1.0;
    xf = std::clamp(std::floor(xf), 0.0, max_idx);
    yf = std::clamp(std::floor(yf), 0.0, max_idx);
    return TileId{zoom, static_cast<std::uint32_t>(xf), static_cast<std::uint32_t>(yf)};
}

std::array<TileId, 4> tile_children(const TileId& t) {
    if (t.z >= 30) throw std::range_error("tile_children: zoom overflow at z=30");
    const std::uint32_t z = t.z + 1, x = t.x * 2, y = t.y * 2;
    return {TileId{z, x, y}, TileId{z, x + 1, y}, TileId{z, x, y + 1}, TileId{z, x + 1, y + 1}};
}

TileId tile_parent(const TileId& t) {
    if (t.z == 0) throw std::range_error("tile_parent: z=0 tile has no parent");
    return TileId{t.z - 1, t.x / 2, t.y / 2};
}

LonLatBBox tile_to_bbox(const TileId& t) {
    const double n = std::exp2(static_cast<double>(t.z));
    auto lon = [&](double x) { return x / n * 360.0 - 180.0; };
    auto lat = [&](double y) {
        const double merc = kPi * (1.0 - 2.0 * y / n);
        return std::atan(std::sinh(merc)) * 180.0 / kPi;
    };
    return LonLatBBox{lon(static_cast<double>(t.x)), lat(static_cast<double>(t.y + 1)),
                      lon(static_cast<double>(t.x + 1)), lat(static_cast<double>(t.y))};
}

} // namespace salibi
