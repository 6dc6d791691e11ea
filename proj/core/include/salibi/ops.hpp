#pragma once

#include "salibi/tensor.hpp"

namespace salibi {

// Closed primitive set. Everything else in the model is composed from
// these, so a finite-difference check per primitive covers all gradients.

Tensor matmul(const Tensor& a, const Tensor& b);      // [m×k]·[k×n]
Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);         // elementwise
Tensor mul_scalar(const Tensor& a, double c);
Tensor add_rows(const Tensor& x, const Tensor& b);    // [r×c] + [c], broadcast over rows
Tensor softmax_rows(const Tensor& x);                 // softmax over last axis
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-6);                  // normalize over last axis
Tensor gelu(const Tensor& x);                         // exact erf form
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);                          // -> scalar
Tensor mean(const Tensor& x);                         // -> scalar
Tensor sum_last(const Tensor& x);                     // reduce last axis
Tensor mean_axis0(const Tensor& x);                   // [r×c] -> [c]
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);                    // 2D
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis); // 2D, axis 0 or 1
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len);                        // 2D
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows); // 2D

// Rearranges [C×H×W] image data (flat, channel-first) into a patch matrix
// [L × C·p²] in row-major patch order; pure index permutation, differentiable.
Tensor patchify(const Tensor& image, std::size_t channels, std::size_t height,
                std::size_t width, std::size_t patch_px);

} // namespace salibi
