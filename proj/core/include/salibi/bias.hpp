#pragma once

#include <cstddef>
#include <ostream>
#include <utility>
#include <vector>

namespace salibi {

// Geometry of a tokenized image. Token order is row-major: token(r,c) = r*cols + c.
struct PatchGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t patch_px = 0;
    double gsd = 0.0; // physical units per pixel

    std::size_t tokens() const { return rows * cols; }
    double footprint_x() const { return static_cast<double>(cols * patch_px) * gsd; }
    double footprint_y() const { return static_cast<double>(rows * patch_px) * gsd; }
    bool operator==(const PatchGrid&) const = default;
};

void validate_grid(const PatchGrid& g);

// Head slopes, 2^(-8(h+1)/H) as in the original ALiBi recipe.
struct SlopeSchedule {
    std::vector<double> slopes;
    std::size_t heads() const { return slopes.size(); }
};

SlopeSchedule slope_schedule(std::size_t heads);

// Per-head additive attention bias, entries -slope(h) * physical distance(i,j).
// All entries are <= 0; self-attention biases have an exactly-zero diagonal.
struct BiasTensor {
    std::size_t heads = 0;
    std::size_t lq = 0;
    std::size_t lk = 0;
    std::vector<double> values; // heads * lq * lk, head-major

    double at(std::size_t h, std::size_t i, std::size_t j) const {
        return values[(h * lq + i) * lk + j];
    }
    const double* head(std::size_t h) const { return values.data() + h * lq * lk; }
};

// Patch center (x, y) in physical units, token order row-major.
std::vector<std::pair<double, double>> patch_centers(const PatchGrid& grid);

BiasTensor self_bias(const PatchGrid& grid, const SlopeSchedule& slopes);

// Bias between two grids covering the same physical footprint. Throws if the
// footprints disagree beyond 1e-9.
BiasTensor cross_bias(const PatchGrid& query_grid, const PatchGrid& key_grid,
                      const SlopeSchedule& slopes);

// CSV dump, one matrix per head preceded by a `# head=h slope=s` line.
void write_bias_csv(const BiasTensor& bias, const SlopeSchedule& slopes, std::ostream& out);

} // namespace salibi
