#pragma once

#include "salibi/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace salibi {

// Per-parameter Adam moment buffers, indexed parallel to the param list
// handed to adam_step. Serialized into checkpoints.
struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// One Adam update over `params`. Every param must carry a populated grad.
// State buffers are created lazily on the first call.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
               std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8);

} // namespace salibi
