#pragma once

#include "salibi/attention.hpp"
#include "salibi/ops.hpp"

#include <optional>
#include <vector>

namespace salibi {

// Pooled, L2-normalized per-modality representations. One [N x P] matrix per
// modality, all sharing N and P; rows must be unit norm.
struct ContrastiveBatch {
    std::vector<Tensor> z; // fixed modality order
    double temperature = 0.07;

    void validate() const;
};

// Symmetric InfoNCE over every 2-combination of modalities, normalized by
// |pairs| * N; both orderings of each pair averaged.
Tensor contrastive_loss(const ContrastiveBatch& batch);

// The printed form of the objective (no log, |pairs|^2 N normalizer, one
// direction). Evaluation-only: it is not decreasing in positive-pair
// similarity and is unsuitable for training.
double contrastive_loss_paper_literal(const ContrastiveBatch& batch);

enum class ReconError { squared, absolute };

struct ModeSlice {
    std::size_t offset; // column offset in the fused patch vector
    std::size_t len;
};

// Per-sample predictions/targets on the fused grid. Targets are already
// per-patch normalized (see normalize_patch_target); only masked patches
// contribute to the loss.
struct ReconBatch {
    std::vector<Tensor> predictions;     // each [L x N_ch*p^2]
    std::vector<Tensor> targets;         // same shapes, constant tensors
    std::vector<std::vector<bool>> mask; // per sample, length L
    std::vector<ModeSlice> modes;        // channel layout of the fused patch
    ReconError error = ReconError::squared;
};

Tensor reconstruction_loss(const ReconBatch& batch);

Tensor total_loss(const Tensor& con, const Tensor& recon);

// In-place per-patch normalization of each mode slice of a target row:
// mean 0, std 1, with a 1e-6 std floor for constant patches.
void normalize_patch_target(std::vector<double>& row, const std::vector<ModeSlice>& modes);

// Mean over tokens, optional linear projection, then L2 normalization.
// A pooled vector with norm below 1e-12 maps to the fixed unit vector e0
// (gradient-free), so the output always has unit norm.
Tensor pool_and_normalize(const TokenStream& stream, const std::optional<Tensor>& proj_w,
                          const std::optional<Tensor>& proj_b);

} // namespace salibi
