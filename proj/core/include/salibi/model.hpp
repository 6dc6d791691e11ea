#pragma once

#include "salibi/adam.hpp"
#include "salibi/attention.hpp"
#include "salibi/dataset.hpp"
#include "salibi/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace salibi {

// All architecture and training hyperparameters. Serialized as flat JSON;
// unknown keys are rejected.
struct ModelConfig {
    std::size_t lores_px = 32; // hires_px is always 2*lores_px
    std::size_t patch_px = 8;
    double lores_gsd = 1.0;
    std::size_t radar_channels = 2;
    std::size_t lores_channels = 3;
    std::size_t hires_channels = 3;

    std::size_t radar_depth = 2, radar_dim = 64, radar_heads = 4;
    std::size_t lores_depth = 2, lores_dim = 64, lores_heads = 4;
    std::size_t hires_depth = 2, hires_dim = 64, hires_heads = 4;
    std::size_t cross1_depth = 1, cross2_depth = 1;
    std::size_t cross_heads = 4;
    std::size_t decoder_depth = 1, decoder_dim = 64, decoder_heads = 4;
    double mlp_ratio = 4.0;
    std::size_t proj_dim = 0; // 0: pool encoder tokens directly (dims must agree)

    double mask_ratio = 0.75;
    double temperature = 0.07;
    std::string scale_mode = "inv_sqrt_d";
    std::string recon_error = "squared";

    std::uint64_t seed = 42;
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::size_t warmup_steps = 10;

    std::size_t hires_px() const { return 2 * lores_px; }
    std::size_t contrastive_dim() const { return proj_dim ? proj_dim : lores_dim; }
    std::size_t fused_channels() const {
        return radar_channels + lores_channels + 4 * hires_channels;
    }
    std::size_t decoder_out_dim() const { return fused_channels() * patch_px * patch_px; }

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    static ModelConfig load(const std::filesystem::path& path);
    std::uint64_t digest() const;
};

struct ForwardResult {
    Tensor z_radar, z_lores, z_hires; // [1 x P], unit norm
    TokenStream fused;
    Tensor decoder_out; // [L x N_ch*p^2]
    Tensor target;      // same shape, constant, per-patch normalized
    std::vector<bool> mask;
};

struct StepMetrics {
    std::uint64_t step = 0;
    double l_con = 0.0, l_recon = 0.0, l_total = 0.0, lr = 0.0;
};

enum class ProbeEncoder { lores_encoder, hires_encoder };

// Fig.-1 wiring: three self encoders, cross encoder 1 (queries = lores
// optical, kv = radar), cross encoder 2 (queries = joint, kv = hires), masked
// decoder on the fused (lores-grid) stream.
class ScaleAlibiModel {
public:
    explicit ScaleAlibiModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::uint64_t step() const { return step_; }

    // forced_mask overrides the RNG-drawn mask (tests and gradcheck)
    ForwardResult forward(const AlignedTriplet& triplet,
                          const std::vector<bool>* forced_mask = nullptr);

    StepMetrics train_step(const std::vector<AlignedTriplet>& batch);

    // losses for a batch without an optimizer update (gradcheck)
    Tensor batch_loss(const std::vector<AlignedTriplet>& batch,
                      const std::vector<std::vector<bool>>& masks);

    std::vector<double> encode_for_probe(const Raster& image, ProbeEncoder which);

    std::vector<ModeSlice> mode_slices() const;
    Tensor build_target(const AlignedTriplet& triplet) const;

    void save(const std::filesystem::path& path) const;
    static ScaleAlibiModel load(const std::filesystem::path& path);
    // config text as stored in a checkpoint, without constructing the model
    static ModelConfig peek_config(const std::filesystem::path& path);

    std::vector<bool> draw_mask(std::size_t tokens);
    double current_lr() const;

private:
    ModelConfig cfg_;
    ParamStore params_;
    AdamState opt_;
    Rng rng_;
    std::uint64_t step_ = 0;

    EncoderConfig radar_cfg_, lores_cfg_, hires_cfg_;
    SlopeSchedule radar_slopes_, lores_slopes_, hires_slopes_, cross_slopes_;
    EncoderWeights radar_w_, lores_w_, hires_w_;
    EncoderWeights cross1_w_, cross2_w_;
    DecoderWeights decoder_w_;
    std::optional<Tensor> proj_radar_w_, proj_lores_w_, proj_hires_w_;

    TokenStream encode_modality(const Raster& image, Modality modality);
};

Tensor tensor_from_raster(const Raster& r, bool requires_grad = false);

} // namespace salibi
