#pragma once

#include "salibi/bias.hpp"
#include "salibi/ops.hpp"
#include "salibi/params.hpp"

#include <string>

namespace salibi {

enum class ScaleMode {
    inv_sqrt_d,     // d^(-1/2), standard transformer scaling (default)
    sqrt_d_literal, // d^(+1/2)
};

ScaleMode scale_mode_from_string(const std::string& s);
std::string to_string(ScaleMode m);

struct AttentionConfig {
    std::size_t heads = 1;
    std::size_t model_dim = 1;
    ScaleMode scale_mode = ScaleMode::inv_sqrt_d;

    std::size_t head_dim() const { return model_dim / heads; }
    void validate() const;
};

struct EncoderConfig {
    std::size_t depth = 1;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    double mlp_ratio = 4.0;
    std::size_t patch_px = 8;
    std::size_t in_channels = 3;
    ScaleMode scale_mode = ScaleMode::inv_sqrt_d;

    AttentionConfig attention() const { return {heads, model_dim, scale_mode}; }
    void validate() const;
};

enum class Modality { radar, lores, hires, joint, fused };

struct TokenStream {
    Tensor tokens; // [L x D]
    PatchGrid grid;
    Modality modality = Modality::lores;
};

// ---- weights ----

struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockWeights {
    Tensor ln1_g, ln1_b;       // query-stream pre-norm
    Tensor ln_kv_g, ln_kv_b;   // key/value pre-norm (cross blocks only; undefined for self)
    AttentionWeights attn;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderWeights {
    Tensor patch_w, patch_b; // patch embedding (self encoders only)
    std::vector<BlockWeights> blocks;
};

struct DecoderWeights {
    Tensor proj_w, proj_b; // fused dim -> decoder dim
    Tensor mask_token;     // [1 x decoder dim]
    std::vector<BlockWeights> blocks;
    Tensor ln_f_g, ln_f_b;
    Tensor head_w, head_b; // decoder dim -> N_ch * patch_px^2
};

// weight construction; names are prefixed so checkpoints and gradcheck can
// group by component
AttentionWeights make_attention_weights(ParamStore& ps, const std::string& prefix,
                                        std::size_t q_dim, std::size_t kv_dim, Rng& rng);
BlockWeights make_block_weights(ParamStore& ps, const std::string& prefix, std::size_t q_dim,
                                std::size_t kv_dim, double mlp_ratio, bool cross, Rng& rng);
EncoderWeights make_encoder_weights(ParamStore& ps, const std::string& prefix,
                                    const EncoderConfig& cfg, Rng& rng);
EncoderWeights make_cross_encoder_weights(ParamStore& ps, const std::string& prefix,
                                          std::size_t depth, std::size_t q_dim, std::size_t kv_dim,
                                          double mlp_ratio, Rng& rng);
DecoderWeights make_decoder_weights(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
                                    std::size_t dec_dim, std::size_t depth, double mlp_ratio,
                                    std::size_t out_dim, Rng& rng);

// ---- forward passes ----

// Image is flat [C*H*W] channel-first. No positional embedding is added;
// position enters attention only through the bias.
TokenStream patch_embed(const Tensor& image, const EncoderConfig& cfg, double gsd,
                        const EncoderWeights& w, std::size_t height, std::size_t width,
                        Modality modality);

Tensor biased_attention(const Tensor& q_stream, const Tensor& kv_stream, const BiasTensor& bias,
                        const AttentionConfig& cfg, const AttentionWeights& w);

TokenStream encoder_forward(const TokenStream& stream, const EncoderConfig& cfg,
                            const SlopeSchedule& slopes, const EncoderWeights& w);

TokenStream cross_encoder_forward(const TokenStream& q, const TokenStream& kv,
                                  const AttentionConfig& cfg, const SlopeSchedule& slopes,
                                  const std::vector<BlockWeights>& blocks, Modality out_modality);

// 2D sinusoidal table for a rows x cols grid, [rows*cols x dim], dim % 4 == 0
Tensor sinusoidal_embedding_2d(std::size_t rows, std::size_t cols, std::size_t dim);

// Masked positions are replaced by the learned mask token; a 2D sinusoidal
// embedding is added (the decoder is the one place position is additive).
Tensor mae_decode(const TokenStream& fused, const std::vector<bool>& mask,
                  const AttentionConfig& dec_cfg, double mlp_ratio, const DecoderWeights& w);

} // namespace salibi
