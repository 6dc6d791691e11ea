#include "salibi/bias.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace salibi {

void validate_grid(const PatchGrid& g) {
    if (g.rows < 1 || g.cols < 1 || g.patch_px < 1)
        throw std::invalid_argument("PatchGrid: rows, cols and patch_px must be >= 1");
    if (!(g.gsd > 0.0)) throw std::invalid_argument("PatchGrid: gsd must be positive");
}

SlopeSchedule slope_schedule(std::size_t heads) {
    if (heads == 0) throw std::invalid_argument("slope_schedule: heads must be >= 1");
    SlopeSchedule s;
    s.slopes.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h)
        s.slopes.push_back(std::exp2(-8.0 * static_cast<double>(h + 1) / static_cast<double>(heads)));
    return s;
}

std::vector<std::pair<double, double>> patch_centers(const PatchGrid& grid) {
    validate_grid(grid);
    std::vector<std::pair<double, double>> centers;
    centers.reserve(grid.tokens());
    const double step = static_cast<double>(grid.patch_px) * grid.gsd;
    for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t c = 0; c < grid.cols; ++c)
            centers.emplace_back((static_cast<double>(c) + 0.5) * step,
                                 (static_cast<double>(r) + 0.5) * step);
    return centers;
}

BiasTensor self_bias(const PatchGrid& grid, const SlopeSchedule& slopes) {
    validate_grid(grid);
    const std::size_t L = grid.tokens();
    const std::size_t H = slopes.heads();
    BiasTensor bias{H, L, L, std::vector<double>(H * L * L)};

    // pixel-frame distances multiplied by gsd once, so the whole tensor is
    // exactly linear in gsd
    const double px = static_cast<double>(grid.patch_px);
    std::vector<double> dist_px(L * L);
    for (std::size_t i = 0; i < L; ++i) {
        const double xi = (static_cast<double>(i % grid.cols) + 0.5) * px;
        const double yi = (static_cast<double>(i / grid.cols) + 0.5) * px;
        for (std::size_t j = 0; j < L; ++j) {
            const double dx = xi - (static_cast<double>(j % grid.cols) + 0.5) * px;
            const double dy = yi - (static_cast<double>(j / grid.cols) + 0.5) * px;
            dist_px[i * L + j] = std::sqrt(dx * dx + dy * dy);
        }
    }
    for (std::size_t h = 0; h < H; ++h) {
        const double neg_slope = -slopes.slopes[h];
        double* out = bias.values.data() + h * L * L;
        for (std::size_t e = 0; e < L * L; ++e) out[e] = (neg_slope * dist_px[e]) * grid.gsd;
    }
    return bias;
}

BiasTensor cross_bias(const PatchGrid& query_grid, const PatchGrid& key_grid,
                      const SlopeSchedule& slopes) {
    validate_grid(query_grid);
    validate_grid(key_grid);
    if (query_grid == key_grid) return self_bias(query_grid, slopes);

    const double dx_fp = std::abs(query_grid.footprint_x() - key_grid.footprint_x());
    const double dy_fp = std::abs(query_grid.footprint_y() - key_grid.footprint_y());
    if (dx_fp > 1e-9 || dy_fp > 1e-9)
        throw std::invalid_argument(
            "cross_bias: grids cover different footprints, query " +
            std::to_string(query_grid.footprint_x()) + "x" + std::to_string(query_grid.footprint_y()) +
            " vs key " + std::to_string(key_grid.footprint_x()) + "x" +
            std::to_string(key_grid.footprint_y()));

    const auto qc = patch_centers(query_grid);
    const auto kc = patch_centers(key_grid);
    const std::size_t Lq = qc.size(), Lk = kc.size(), H = slopes.heads();
    BiasTensor bias{H, Lq, Lk, std::vector<double>(H * Lq * Lk)};
    std::vector<double> dist(Lq * Lk);
    for (std::size_t i = 0; i < Lq; ++i)
        for (std::size_t j = 0; j < Lk; ++j) {
            const double dx = qc[i].first - kc[j].first;
            const double dy = qc[i].second - kc[j].second;
            dist[i * Lk + j] = std::sqrt(dx * dx + dy * dy);
        }
    for (std::size_t h = 0; h < H; ++h) {
        const double neg_slope = -slopes.slopes[h];
        double* out = bias.values.data() + h * Lq * Lk;
        for (std::size_t e = 0; e < Lq * Lk; ++e) out[e] = neg_slope * dist[e];
    }
    return bias;
}

void write_bias_csv(const BiasTensor& bias, const SlopeSchedule& slopes, std::ostream& out) {
    out.precision(17);
    for (std::size_t h = 0; h < bias.heads; ++h) {
        out << "# head=" << h << " slope=" << slopes.slopes[h] << "\n";
        for (std::size_t i = 0; i < bias.lq; ++i) {
            for (std::size_t j = 0; j < bias.lk; ++j) {
                if (j) out << ",";
                const double v = bias.at(h, i, j);
                out << (v == 0.0 ? 0.0 : v); // avoid printing -0
            }
            out << "\n";
        }
    }
}

} // namespace salibi
