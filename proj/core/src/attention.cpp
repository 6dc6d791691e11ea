#include "salibi/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace salibi {

ScaleMode scale_mode_from_string(const std::string& s) {
    if (s == "inv_sqrt_d") return ScaleMode::inv_sqrt_d;
    if (s == "sqrt_d_literal") return ScaleMode::sqrt_d_literal;
    throw std::invalid_argument("unknown scale_mode '" + s +
                                "' (expected inv_sqrt_d or sqrt_d_literal)");
}

std::string to_string(ScaleMode m) {
    return m == ScaleMode::inv_sqrt_d ? "inv_sqrt_d" : "sqrt_d_literal";
}

void AttentionConfig::validate() const {
    if (heads == 0) throw std::invalid_argument("AttentionConfig: heads must be >= 1");
    if (model_dim % heads != 0)
        throw std::invalid_argument("AttentionConfig: model_dim " + std::to_string(model_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    if (head_dim() < 1) throw std::invalid_argument("AttentionConfig: head_dim must be >= 1");
}

void EncoderConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("EncoderConfig: depth must be >= 1");
    if (!(mlp_ratio > 0)) throw std::invalid_argument("EncoderConfig: mlp_ratio must be positive");
    attention().validate();
}

AttentionWeights make_attention_weights(ParamStore& ps, const std::string& prefix,
                                        std::size_t q_dim, std::size_t kv_dim, Rng& rng) {
    AttentionWeights w;
    w.wq = ps.xavier(prefix + ".wq", q_dim, q_dim, rng);
    w.bq = ps.zeros(prefix + ".bq", {q_dim});
    w.wk = ps.xavier(prefix + ".wk", kv_dim, q_dim, rng);
    w.bk = ps.zeros(prefix + ".bk", {q_dim});
    w.wv = ps.xavier(prefix + ".wv", kv_dim, q_dim, rng);
    w.bv = ps.zeros(prefix + ".bv", {q_dim});
    w.wo = ps.xavier(prefix + ".wo", q_dim, q_dim, rng);
    w.bo = ps.zeros(prefix + ".bo", {q_dim});
    return w;
}

BlockWeights make_block_weights(ParamStore& ps, const std::string& prefix, std::size_t q_dim,
                                std::size_t kv_dim, double mlp_ratio, bool cross, Rng& rng) {
    BlockWeights b;
    b.ln1_g = ps.ones(prefix + ".ln1.g", {q_dim});
    b.ln1_b = ps.zeros(prefix + ".ln1.b", {q_dim});
    if (cross) {
        b.ln_kv_g = ps.ones(prefix + ".lnkv.g", {kv_dim});
        b.ln_kv_b = ps.zeros(prefix + ".lnkv.b", {kv_dim});
    }
    b.attn = make_attention_weights(ps, prefix + ".attn", q_dim, kv_dim, rng);
    b.ln2_g = ps.ones(prefix + ".ln2.g", {q_dim});
    b.ln2_b = ps.zeros(prefix + ".ln2.b", {q_dim});
    const auto hidden = static_cast<std::size_t>(mlp_ratio * static_cast<double>(q_dim));
    b.mlp_w1 = ps.xavier(prefix + ".mlp.w1", q_dim, hidden, rng);
    b.mlp_b1 = ps.zeros(prefix + ".mlp.b1", {hidden});
    b.mlp_w2 = ps.xavier(prefix + ".mlp.w2", hidden, q_dim, rng);
    b.mlp_b2 = ps.zeros(prefix + ".mlp.b2", {q_dim});
    return b;
}

EncoderWeights make_encoder_weights(ParamStore& ps, const std::string& prefix,
                                    const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderWeights w;
    const std::size_t patch_dim = cfg.in_channels * cfg.patch_px * cfg.patch_px;
    w.patch_w = ps.xavier(prefix + ".patch.w", patch_dim, cfg.model_dim, rng);
    w.patch_b = ps.zeros(prefix + ".patch.b", {cfg.model_dim});
    for (std::size_t i = 0; i < cfg.depth; ++i)
        w.blocks.push_back(make_block_weights(ps, prefix + ".block" + std::to_string(i),
                                              cfg.model_dim, cfg.model_dim, cfg.mlp_ratio,
                                              /*cross=*/false, rng));
    return w;
}

EncoderWeights make_cross_encoder_weights(ParamStore& ps, const std::string& prefix,
                                          std::size_t depth, std::size_t q_dim, std::size_t kv_dim,
                                          double mlp_ratio, Rng& rng) {
    if (depth < 1) throw std::invalid_argument("cross encoder: depth must be >= 1");
    EncoderWeights w;
    for (std::size_t i = 0; i < depth; ++i)
        w.blocks.push_back(make_block_weights(ps, prefix + ".block" + std::to_string(i), q_dim,
                                              kv_dim, mlp_ratio, /*cross=*/true, rng));
    return w;
}

DecoderWeights make_decoder_weights(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
                                    std::size_t dec_dim, std::size_t depth, double mlp_ratio,
                                    std::size_t out_dim, Rng& rng) {
    DecoderWeights w;
    w.proj_w = ps.xavier(prefix + ".proj.w", in_dim, dec_dim, rng);
    w.proj_b = ps.zeros(prefix + ".proj.b", {dec_dim});
    w.mask_token = ps.uniform(prefix + ".mask_token", {std::size_t{1}, dec_dim}, -0.02, 0.02, rng);
    for (std::size_t i = 0; i < depth; ++i)
        w.blocks.push_back(make_block_weights(ps, prefix + ".block" + std::to_string(i), dec_dim,
                                              dec_dim, mlp_ratio, /*cross=*/false, rng));
    w.ln_f_g = ps.ones(prefix + ".lnf.g", {dec_dim});
    w.ln_f_b = ps.zeros(prefix + ".lnf.b", {dec_dim});
    w.head_w = ps.xavier(prefix + ".head.w", dec_dim, out_dim, rng);
    w.head_b = ps.zeros(prefix + ".head.b", {out_dim});
    return w;
}

TokenStream patch_embed(const Tensor& image, const EncoderConfig& cfg, double gsd,
                        const EncoderWeights& w, std::size_t height, std::size_t width,
                        Modality modality) {
    if (height % cfg.patch_px != 0 || width % cfg.patch_px != 0)
        throw std::invalid_argument("patch_embed: image " + std::to_string(height) + "x" +
                                    std::to_string(width) + " not divisible by patch size " +
                                    std::to_string(cfg.patch_px));
    Tensor patches = patchify(image, cfg.in_channels, height, width, cfg.patch_px);
    Tensor tokens = add_rows(matmul(patches, w.patch_w), w.patch_b);
    PatchGrid grid{height / cfg.patch_px, width / cfg.patch_px, cfg.patch_px, gsd};
    return TokenStream{tokens, grid, modality};
}

namespace {

double attention_scale(const AttentionConfig& cfg) {
    const double d = static_cast<double>(cfg.head_dim());
    return cfg.scale_mode == ScaleMode::inv_sqrt_d ? 1.0 / std::sqrt(d) : std::sqrt(d);
}

Tensor bias_head_tensor(const BiasTensor& bias, std::size_t h) {
    return Tensor::from({bias.lq, bias.lk},
                        std::vector<double>(bias.head(h), bias.head(h) + bias.lq * bias.lk));
}

Tensor mlp_forward(const Tensor& x, const BlockWeights& b) {
    Tensor h = gelu(add_rows(matmul(x, b.mlp_w1), b.mlp_b1));
    return add_rows(matmul(h, b.mlp_w2), b.mlp_b2);
}

Tensor block_forward(const Tensor& q, const Tensor& kv, const BiasTensor& bias,
                     const AttentionConfig& cfg, const BlockWeights& b, bool cross) {
    Tensor qn = layernorm(q, b.ln1_g, b.ln1_b);
    Tensor kvn = cross ? layernorm(kv, b.ln_kv_g, b.ln_kv_b) : qn;
    Tensor x = add(q, biased_attention(qn, kvn, bias, cfg, b.attn));
    return add(x, mlp_forward(layernorm(x, b.ln2_g, b.ln2_b), b));
}

} // namespace

Tensor biased_attention(const Tensor& q_stream, const Tensor& kv_stream, const BiasTensor& bias,
                        const AttentionConfig& cfg, const AttentionWeights& w) {
    cfg.validate();
    const std::size_t lq = q_stream.dim(0), lk = kv_stream.dim(0);
    if (bias.heads != cfg.heads || bias.lq != lq || bias.lk != lk)
        throw std::invalid_argument("biased_attention: bias shape [" + std::to_string(bias.heads) +
                                    "x" + std::to_string(bias.lq) + "x" + std::to_string(bias.lk) +
                                    "] does not match heads=" + std::to_string(cfg.heads) +
                                    " Lq=" + std::to_string(lq) + " Lk=" + std::to_string(lk));
    const std::size_t d = cfg.head_dim();
    const double scale = attention_scale(cfg);

    Tensor q = add_rows(matmul(q_stream, w.wq), w.bq);
    Tensor k = add_rows(matmul(kv_stream, w.wk), w.bk);
    Tensor v = add_rows(matmul(kv_stream, w.wv), w.bv);

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Tensor qh = slice(q, 1, h * d, d);
        Tensor kh = slice(k, 1, h * d, d);
        Tensor vh = slice(v, 1, h * d, d);
        Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
        scores = add(scores, bias_head_tensor(bias, h));
        Tensor probs = softmax_rows(scores);
        head_outputs.push_back(matmul(probs, vh));
    }
    Tensor out = cfg.heads == 1 ? head_outputs[0] : concat(head_outputs, 1);
    return add_rows(matmul(out, w.wo), w.bo);
}

TokenStream encoder_forward(const TokenStream& stream, const EncoderConfig& cfg,
                            const SlopeSchedule& slopes, const EncoderWeights& w) {
    cfg.validate();
    if (stream.tokens.dim(0) != stream.grid.tokens())
        throw std::invalid_argument("encoder_forward: token count does not match grid");
    const BiasTensor bias = self_bias(stream.grid, slopes);
    const AttentionConfig acfg = cfg.attention();
    Tensor x = stream.tokens;
    for (const auto& b : w.blocks) x = block_forward(x, x, bias, acfg, b, /*cross=*/false);
    return TokenStream{x, stream.grid, stream.modality};
}

TokenStream cross_encoder_forward(const TokenStream& q, const TokenStream& kv,
                                  const AttentionConfig& cfg, const SlopeSchedule& slopes,
                                  const std::vector<BlockWeights>& blocks, Modality out_modality) {
    const BiasTensor bias = cross_bias(q.grid, kv.grid, slopes);
    Tensor x = q.tokens;
    for (const auto& b : blocks) x = block_forward(x, kv.tokens, bias, cfg, b, /*cross=*/true);
    return TokenStream{x, q.grid, out_modality};
}

Tensor sinusoidal_embedding_2d(std::size_t rows, std::size_t cols, std::size_t dim) {
    if (dim % 4 != 0)
        throw std::invalid_argument("sinusoidal_embedding_2d: dim must be divisible by 4, got " +
                                    std::to_string(dim));
    const std::size_t quarter = dim / 4;
    Tensor emb = Tensor::zeros({rows * cols, dim});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double* row = emb.data().data() + (r * cols + c) * dim;
            for (std::size_t k = 0; k < quarter; ++k) {
                const double omega =
                    std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
                row[k] = std::sin(static_cast<double>(c) * omega);
                row[quarter + k] = std::cos(static_cast<double>(c) * omega);
                row[2 * quarter + k] = std::sin(static_cast<double>(r) * omega);
                row[3 * quarter + k] = std::cos(static_cast<double>(r) * omega);
            }
        }
    return emb;
}

Tensor mae_decode(const TokenStream& fused, const std::vector<bool>& mask,
                  const AttentionConfig& dec_cfg, double mlp_ratio, const DecoderWeights& w) {
    if (fused.modality != Modality::fused)
        throw std::logic_error("mae_decode: input stream must be the fused stream");
    const std::size_t L = fused.tokens.dim(0);
    if (mask.size() != L)
        throw std::invalid_argument("mae_decode: mask length " + std::to_string(mask.size()) +
                                    " does not match token count " + std::to_string(L));
    const std::size_t dd = dec_cfg.model_dim;

    Tensor x = add_rows(matmul(fused.tokens, w.proj_w), w.proj_b);

    // masked rows -> mask token, via constant 0/1 selectors
    Tensor keep = Tensor::zeros({L, dd});
    Tensor masked_col = Tensor::zeros({L, 1});
    for (std::size_t i = 0; i < L; ++i) {
        if (mask[i]) {
            masked_col.data()[i] = 1.0;
        } else {
            for (std::size_t j = 0; j < dd; ++j) keep.data()[i * dd + j] = 1.0;
        }
    }
    x = add(mul(x, keep), matmul(masked_col, w.mask_token));
    x = add(x, sinusoidal_embedding_2d(fused.grid.rows, fused.grid.cols, dd));

    // unbiased shallow transformer
    BiasTensor zero_bias{dec_cfg.heads, L, L, std::vector<double>(dec_cfg.heads * L * L, 0.0)};
    for (const auto& b : w.blocks) x = block_forward(x, x, zero_bias, dec_cfg, b, /*cross=*/false);
    x = layernorm(x, w.ln_f_g, w.ln_f_b);
    return add_rows(matmul(x, w.head_w), w.head_b);
}

} // namespace salibi
