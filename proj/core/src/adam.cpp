#include "salibi/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace salibi {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
               std::pair<double, double> betas, double eps) {
    const auto [b1, b2] = betas;
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].numel(), 0.0);
            state.v[i].assign(params[i].numel(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::logic_error("adam_step: state was created for a different param list");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.requires_grad())
            throw std::logic_error("adam_step: param " + std::to_string(i) + " has no grad buffer");
        auto& g = p.grad();
        auto& d = p.data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < d.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            d[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

} // namespace salibi
