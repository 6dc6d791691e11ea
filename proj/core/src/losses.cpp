#include "salibi/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace salibi {

void ContrastiveBatch::validate() const {
    if (!(temperature > 0.0))
        throw std::invalid_argument("contrastive_loss: temperature must be positive");
    if (z.size() < 2)
        throw std::invalid_argument("contrastive_loss: need at least two modalities");
    const std::size_t n = z[0].dim(0), p = z[0].dim(1);
    if (n == 0) throw std::invalid_argument("contrastive_loss: empty batch");
    for (const auto& m : z) {
        if (m.dim(0) != n || m.dim(1) != p)
            throw std::invalid_argument("contrastive_loss: modalities disagree on N or P, " +
                                        shape_str(z[0].shape()) + " vs " + shape_str(m.shape()));
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double v = m.at(i * p + j);
                s += v * v;
            }
            if (std::abs(std::sqrt(s) - 1.0) > 1e-9)
                throw std::invalid_argument("contrastive_loss: row " + std::to_string(i) +
                                            " is not unit norm (|z|=" + std::to_string(std::sqrt(s)) +
                                            ")");
        }
    }
}

namespace {

Tensor identity_mask(std::size_t n) {
    Tensor eye = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.data()[i * n + i] = 1.0;
    return eye;
}

// -(1/N) sum_i log softmax_rows(S)[i,i]
Tensor nce_direction(const Tensor& scores, const Tensor& eye) {
    Tensor probs = softmax_rows(scores);
    Tensor diag = sum_last(mul(probs, eye)); // [N]
    return mul_scalar(sum(log(diag)), -1.0);
}

} // namespace

Tensor contrastive_loss(const ContrastiveBatch& batch) {
    batch.validate();
    const std::size_t n = batch.z[0].dim(0);
    const std::size_t m = batch.z.size();
    const Tensor eye = identity_mask(n);

    Tensor acc = Tensor::scalar(0.0);
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            ++pairs;
            Tensor scores = mul_scalar(matmul(batch.z[a], transpose(batch.z[b])),
                                       1.0 / batch.temperature);
            // symmetric form: both orderings, halved
            Tensor both = add(nce_direction(scores, eye), nce_direction(transpose(scores), eye));
            acc = add(acc, mul_scalar(both, 0.5));
        }
    return mul_scalar(acc, 1.0 / (static_cast<double>(pairs) * static_cast<double>(n)));
}

double contrastive_loss_paper_literal(const ContrastiveBatch& batch) {
    batch.validate();
    const std::size_t n = batch.z[0].dim(0);
    const std::size_t p = batch.z[0].dim(1);
    const std::size_t m = batch.z.size();
    std::size_t pairs = 0;
    double acc = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            ++pairs;
            for (std::size_t i = 0; i < n; ++i) {
                double denom = 0.0, num = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < p; ++k)
                        dot += batch.z[a].at(j * p + k) * batch.z[b].at(j * p + k);
                    // note: the printed denominator ranges over aligned j-j dots
                    denom += std::exp(dot / batch.temperature);
                    if (j == i) num = std::exp(dot / batch.temperature);
                }
                acc += num / denom;
            }
        }
    const double norm = static_cast<double>(pairs * pairs) * static_cast<double>(n);
    return -acc / norm;
}

Tensor reconstruction_loss(const ReconBatch& batch) {
    const std::size_t n = batch.predictions.size();
    if (n == 0 || batch.targets.size() != n || batch.mask.size() != n)
        throw std::invalid_argument("reconstruction_loss: inconsistent batch arrays");
    if (batch.modes.empty()) throw std::invalid_argument("reconstruction_loss: no mode slices");

    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& pred = batch.predictions[i];
        const Tensor& target = batch.targets[i];
        if (pred.shape() != target.shape())
            throw std::invalid_argument("reconstruction_loss: prediction " +
                                        shape_str(pred.shape()) + " vs target " +
                                        shape_str(target.shape()));
        const std::size_t L = pred.dim(0);
        if (batch.mask[i].size() != L)
            throw std::invalid_argument("reconstruction_loss: mask length mismatch at sample " +
                                        std::to_string(i));
        std::vector<std::size_t> masked;
        for (std::size_t j = 0; j < L; ++j)
            if (batch.mask[i][j]) masked.push_back(j);
        if (masked.empty())
            throw std::invalid_argument("reconstruction_loss: sample " + std::to_string(i) +
                                        " has no masked patches");

        Tensor diff = sub(pred, target);
        Tensor sq = mul(diff, diff);
        // absolute mode: smooth |d| = sqrt(d^2 + tiny), composed from primitives
        Tensor err = batch.error == ReconError::squared
                         ? sq
                         : exp(mul_scalar(log(add(sq, Tensor::full(sq.shape(), 1e-24))), 0.5));
        Tensor masked_err = gather_rows(err, masked);
        for (const auto& mode : batch.modes)
            acc = add(acc, mean(slice(masked_err, 1, mode.offset, mode.len)));
    }
    return mul_scalar(acc, 1.0 / static_cast<double>(n));
}

Tensor total_loss(const Tensor& con, const Tensor& recon) {
    if (!std::isfinite(con.value()) || !std::isfinite(recon.value()))
        throw std::invalid_argument("total_loss: non-finite component (l_con=" +
                                    std::to_string(con.value()) +
                                    ", l_recon=" + std::to_string(recon.value()) + ")");
    return add(con, recon);
}

void normalize_patch_target(std::vector<double>& row, const std::vector<ModeSlice>& modes) {
    for (const auto& mode : modes) {
        double mean = 0.0;
        for (std::size_t k = 0; k < mode.len; ++k) mean += row[mode.offset + k];
        mean /= static_cast<double>(mode.len);
        double var = 0.0;
        for (std::size_t k = 0; k < mode.len; ++k) {
            const double d = row[mode.offset + k] - mean;
            var += d * d;
        }
        var /= static_cast<double>(mode.len);
        const double std_floored = std::max(std::sqrt(var), 1e-6);
        for (std::size_t k = 0; k < mode.len; ++k)
            row[mode.offset + k] = (row[mode.offset + k] - mean) / std_floored;
    }
}

Tensor pool_and_normalize(const TokenStream& stream, const std::optional<Tensor>& proj_w,
                          const std::optional<Tensor>& proj_b) {
    if (stream.tokens.dim(0) == 0)
        throw std::invalid_argument("pool_and_normalize: empty token stream");
    Tensor pooled = reshape(mean_axis0(stream.tokens), {std::size_t{1}, stream.tokens.dim(1)});
    if (proj_w) {
        pooled = matmul(pooled, *proj_w);
        if (proj_b) pooled = add_rows(pooled, *proj_b);
    }
    const std::size_t p = pooled.dim(1);
    Tensor sumsq = sum(mul(pooled, pooled));
    if (sumsq.value() < 1e-24) {
        // epsilon floor: degenerate zero vector maps to a fixed unit vector
        Tensor e0 = Tensor::zeros({std::size_t{1}, p});
        e0.data()[0] = 1.0;
        return e0;
    }
    Tensor inv_norm = reshape(exp(mul_scalar(log(sumsq), -0.5)), {std::size_t{1}, std::size_t{1}});
    return matmul(inv_norm, pooled);
}

} // namespace salibi
