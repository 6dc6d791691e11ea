#include "salibi/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace salibi {

using nlohmann::json;

void ModelConfig::validate() const {
    if (lores_px == 0 || patch_px == 0 || lores_px % patch_px != 0)
        throw std::invalid_argument("config: lores_px must be a positive multiple of patch_px");
    if (!(lores_gsd > 0)) throw std::invalid_argument("config: lores_gsd must be positive");
    if (radar_channels == 0 || lores_channels == 0 || hires_channels == 0)
        throw std::invalid_argument("config: channel counts must be >= 1");
    auto check_enc = [](const char* name, std::size_t depth, std::size_t dim, std::size_t heads) {
        if (depth < 1) throw std::invalid_argument(std::string("config: ") + name + "_depth must be >= 1");
        if (heads < 1 || dim % heads != 0)
            throw std::invalid_argument(std::string("config: ") + name +
                                        "_dim must be divisible by heads");
    };
    check_enc("radar", radar_depth, radar_dim, radar_heads);
    check_enc("lores", lores_depth, lores_dim, lores_heads);
    check_enc("hires", hires_depth, hires_dim, hires_heads);
    check_enc("decoder", decoder_depth, decoder_dim, decoder_heads);
    if (cross1_depth < 1 || cross2_depth < 1)
        throw std::invalid_argument("config: cross encoder depths must be >= 1");
    if (cross_heads < 1 || lores_dim % cross_heads != 0)
        throw std::invalid_argument("config: lores_dim must be divisible by cross_heads");
    if (decoder_dim % 4 != 0)
        throw std::invalid_argument("config: decoder_dim must be divisible by 4 (2D sinusoidal)");
    if (!(mlp_ratio > 0)) throw std::invalid_argument("config: mlp_ratio must be positive");
    if (!(mask_ratio > 0.0) || mask_ratio > 1.0)
        throw std::invalid_argument("config: mask_ratio must be in (0, 1]; 0 would leave the "
                                    "reconstruction loss undefined");
    if (!(temperature > 0)) throw std::invalid_argument("config: temperature must be positive");
    if (proj_dim == 0 && !(radar_dim == lores_dim && lores_dim == hires_dim))
        throw std::invalid_argument(
            "config: encoder dims differ; set proj_dim to project representations to a shared size");
    if (!(lr > 0)) throw std::invalid_argument("config: lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    scale_mode_from_string(scale_mode);
    if (recon_error != "squared" && recon_error != "absolute")
        throw std::invalid_argument("config: recon_error must be 'squared' or 'absolute'");
}

namespace {

json config_to_json_obj(const ModelConfig& c) {
    json j;
    j["lores_px"] = c.lores_px;
    j["patch_px"] = c.patch_px;
    j["lores_gsd"] = c.lores_gsd;
    j["radar_channels"] = c.radar_channels;
    j["lores_channels"] = c.lores_channels;
    j["hires_channels"] = c.hires_channels;
    j["radar_depth"] = c.radar_depth;
    j["radar_dim"] = c.radar_dim;
    j["radar_heads"] = c.radar_heads;
    j["lores_depth"] = c.lores_depth;
    j["lores_dim"] = c.lores_dim;
    j["lores_heads"] = c.lores_heads;
    j["hires_depth"] = c.hires_depth;
    j["hires_dim"] = c.hires_dim;
    j["hires_heads"] = c.hires_heads;
    j["cross1_depth"] = c.cross1_depth;
    j["cross2_depth"] = c.cross2_depth;
    j["cross_heads"] = c.cross_heads;
    j["decoder_depth"] = c.decoder_depth;
    j["decoder_dim"] = c.decoder_dim;
    j["decoder_heads"] = c.decoder_heads;
    j["mlp_ratio"] = c.mlp_ratio;
    j["proj_dim"] = c.proj_dim;
    j["mask_ratio"] = c.mask_ratio;
    j["temperature"] = c.temperature;
    j["scale_mode"] = c.scale_mode;
    j["recon_error"] = c.recon_error;
    j["seed"] = c.seed;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["warmup_steps"] = c.warmup_steps;
    return j;
}

} // namespace

std::string ModelConfig::to_json() const { return config_to_json_obj(*this).dump(2); }

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: invalid JSON: " + std::string(e.what()));
    }
    ModelConfig c;
    const json known = config_to_json_obj(c);
    for (const auto& [key, val] : j.items())
        if (!known.contains(key))
            throw std::invalid_argument("config: unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lores_px", c.lores_px);
    get("patch_px", c.patch_px);
    get("lores_gsd", c.lores_gsd);
    get("radar_channels", c.radar_channels);
    get("lores_channels", c.lores_channels);
    get("hires_channels", c.hires_channels);
    get("radar_depth", c.radar_depth);
    get("radar_dim", c.radar_dim);
    get("radar_heads", c.radar_heads);
    get("lores_depth", c.lores_depth);
    get("lores_dim", c.lores_dim);
    get("lores_heads", c.lores_heads);
    get("hires_depth", c.hires_depth);
    get("hires_dim", c.hires_dim);
    get("hires_heads", c.hires_heads);
    get("cross1_depth", c.cross1_depth);
    get("cross2_depth", c.cross2_depth);
    get("cross_heads", c.cross_heads);
    get("decoder_depth", c.decoder_depth);
    get("decoder_dim", c.decoder_dim);
    get("decoder_heads", c.decoder_heads);
    get("mlp_ratio", c.mlp_ratio);
    get("proj_dim", c.proj_dim);
    get("mask_ratio", c.mask_ratio);
    get("temperature", c.temperature);
    get("scale_mode", c.scale_mode);
    get("recon_error", c.recon_error);
    get("seed", c.seed);
    get("lr", c.lr);
    get("batch_size", c.batch_size);
    get("warmup_steps", c.warmup_steps);
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::uint64_t ModelConfig::digest() const {
    // nlohmann objects serialize with sorted keys, so the dump is canonical
    return fnv1a64(config_to_json_obj(*this).dump());
}

Tensor tensor_from_raster(const Raster& r, bool requires_grad) {
    const std::size_t n = r.data.size();
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(r.data[i]);
    return Tensor::from({n}, std::move(data), requires_grad);
}

ScaleAlibiModel::ScaleAlibiModel(const ModelConfig& cfg) : cfg_(cfg), rng_(cfg.seed ^ 0x5eed) {
    cfg_.validate();
    const ScaleMode sm = scale_mode_from_string(cfg_.scale_mode);
    radar_cfg_ = {cfg_.radar_depth, cfg_.radar_dim, cfg_.radar_heads, cfg_.mlp_ratio,
                  cfg_.patch_px, cfg_.radar_channels, sm};
    lores_cfg_ = {cfg_.lores_depth, cfg_.lores_dim, cfg_.lores_heads, cfg_.mlp_ratio,
                  cfg_.patch_px, cfg_.lores_channels, sm};
    hires_cfg_ = {cfg_.hires_depth, cfg_.hires_dim, cfg_.hires_heads, cfg_.mlp_ratio,
                  cfg_.patch_px, cfg_.hires_channels, sm};
    radar_slopes_ = slope_schedule(cfg_.radar_heads);
    lores_slopes_ = slope_schedule(cfg_.lores_heads);
    hires_slopes_ = slope_schedule(cfg_.hires_heads);
    cross_slopes_ = slope_schedule(cfg_.cross_heads);

    Rng init_rng(cfg_.seed);
    radar_w_ = make_encoder_weights(params_, "enc_radar", radar_cfg_, init_rng);
    lores_w_ = make_encoder_weights(params_, "enc_lores", lores_cfg_, init_rng);
    hires_w_ = make_encoder_weights(params_, "enc_hires", hires_cfg_, init_rng);
    cross1_w_ = make_cross_encoder_weights(params_, "cross_radar_optical", cfg_.cross1_depth,
                                           cfg_.lores_dim, cfg_.radar_dim, cfg_.mlp_ratio,
                                           init_rng);
    cross2_w_ = make_cross_encoder_weights(params_, "cross_hires", cfg_.cross2_depth,
                                           cfg_.lores_dim, cfg_.hires_dim, cfg_.mlp_ratio,
                                           init_rng);
    decoder_w_ = make_decoder_weights(params_, "decoder", cfg_.lores_dim, cfg_.decoder_dim,
                                      cfg_.decoder_depth, cfg_.mlp_ratio, cfg_.decoder_out_dim(),
                                      init_rng);
    if (cfg_.proj_dim > 0) {
        proj_radar_w_ = params_.xavier("proj_radar.w", cfg_.radar_dim, cfg_.proj_dim, init_rng);
        proj_lores_w_ = params_.xavier("proj_lores.w", cfg_.lores_dim, cfg_.proj_dim, init_rng);
        proj_hires_w_ = params_.xavier("proj_hires.w", cfg_.hires_dim, cfg_.proj_dim, init_rng);
    }
}

TokenStream ScaleAlibiModel::encode_modality(const Raster& image, Modality modality) {
    const Tensor img = tensor_from_raster(image);
    switch (modality) {
    case Modality::radar: {
        if (image.channels != cfg_.radar_channels)
            throw std::invalid_argument("forward: radar raster has wrong channel count");
        TokenStream s = patch_embed(img, radar_cfg_, cfg_.lores_gsd, radar_w_, image.height,
                                    image.width, Modality::radar);
        return encoder_forward(s, radar_cfg_, radar_slopes_, radar_w_);
    }
    case Modality::lores: {
        TokenStream s = patch_embed(img, lores_cfg_, cfg_.lores_gsd, lores_w_, image.height,
                                    image.width, Modality::lores);
        return encoder_forward(s, lores_cfg_, lores_slopes_, lores_w_);
    }
    case Modality::hires: {
        TokenStream s = patch_embed(img, hires_cfg_, cfg_.lores_gsd / 2.0, hires_w_, image.height,
                                    image.width, Modality::hires);
        return encoder_forward(s, hires_cfg_, hires_slopes_, hires_w_);
    }
    default:
        throw std::logic_error("encode_modality: not a sensor modality");
    }
}

std::vector<bool> ScaleAlibiModel::draw_mask(std::size_t tokens) {
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg_.mask_ratio * static_cast<double>(tokens))));
    std::vector<std::size_t> idx(tokens);
    for (std::size_t i = 0; i < tokens; ++i) idx[i] = i;
    for (std::size_t i = 0; i < want; ++i) { // partial Fisher-Yates
        const std::size_t j = i + static_cast<std::size_t>(rng_.below(tokens - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<bool> mask(tokens, false);
    for (std::size_t i = 0; i < want; ++i) mask[idx[i]] = true;
    return mask;
}

std::vector<ModeSlice> ScaleAlibiModel::mode_slices() const {
    const std::size_t p2 = cfg_.patch_px * cfg_.patch_px;
    const std::size_t r = cfg_.radar_channels * p2;
    const std::size_t l = cfg_.lores_channels * p2;
    const std::size_t h = 4 * cfg_.hires_channels * p2;
    return {ModeSlice{0, r}, ModeSlice{r, l}, ModeSlice{r + l, h}};
}

Tensor ScaleAlibiModel::build_target(const AlignedTriplet& t) const {
    const std::size_t p = cfg_.patch_px;
    const std::size_t rows = t.lores.height / p, cols = t.lores.width / p;
    const std::size_t L = rows * cols;
    const std::size_t out = cfg_.decoder_out_dim();
    const auto modes = mode_slices();
    std::vector<double> data(L * out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            std::vector<double> row(out);
            std::size_t o = 0;
            for (std::size_t ch = 0; ch < cfg_.radar_channels; ++ch)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        row[o++] = t.radar.at(ch, r * p + py, c * p + px);
            for (std::size_t ch = 0; ch < cfg_.lores_channels; ++ch)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        row[o++] = t.lores.at(ch, r * p + py, c * p + px);
            // hires folded space-to-depth: 2x2 pixel block -> 4 channels
            for (std::size_t ch = 0; ch < cfg_.hires_channels; ++ch)
                for (std::size_t sub = 0; sub < 4; ++sub)
                    for (std::size_t py = 0; py < p; ++py)
                        for (std::size_t px = 0; px < p; ++px)
                            row[o++] = t.hires.at(ch, 2 * (r * p + py) + sub / 2,
                                                  2 * (c * p + px) + sub % 2);
            normalize_patch_target(row, modes);
            std::copy(row.begin(), row.end(), data.begin() + (r * cols + c) * out);
        }
    return Tensor::from({L, out}, std::move(data));
}

ForwardResult ScaleAlibiModel::forward(const AlignedTriplet& triplet,
                                       const std::vector<bool>* forced_mask) {
    if (triplet.hires.height != 2 * triplet.lores.height ||
        triplet.hires.width != 2 * triplet.lores.width ||
        triplet.radar.height != triplet.lores.height)
        throw std::invalid_argument("forward: triplet rasters are not 1x/1x/2x aligned");
    if (triplet.lores.height % cfg_.patch_px != 0)
        throw std::invalid_argument("forward: lores size not divisible by patch size");

    TokenStream enc_radar = encode_modality(triplet.radar, Modality::radar);
    TokenStream enc_lores = encode_modality(triplet.lores, Modality::lores);
    TokenStream enc_hires = encode_modality(triplet.hires, Modality::hires);

    ForwardResult res;
    std::optional<Tensor> no_bias;
    res.z_radar = pool_and_normalize(enc_radar, proj_radar_w_, no_bias);
    res.z_lores = pool_and_normalize(enc_lores, proj_lores_w_, no_bias);
    res.z_hires = pool_and_normalize(enc_hires, proj_hires_w_, no_bias);

    const AttentionConfig cross_cfg{cfg_.cross_heads, cfg_.lores_dim,
                                    scale_mode_from_string(cfg_.scale_mode)};
    TokenStream joint = cross_encoder_forward(enc_lores, enc_radar, cross_cfg, cross_slopes_,
                                              cross1_w_.blocks, Modality::joint);
    res.fused = cross_encoder_forward(joint, enc_hires, cross_cfg, cross_slopes_,
                                      cross2_w_.blocks, Modality::fused);

    const std::size_t L = res.fused.tokens.dim(0);
    res.mask = forced_mask ? *forced_mask : draw_mask(L);
    const AttentionConfig dec_cfg{cfg_.decoder_heads, cfg_.decoder_dim,
                                  scale_mode_from_string(cfg_.scale_mode)};
    res.decoder_out = mae_decode(res.fused, res.mask, dec_cfg, cfg_.mlp_ratio, decoder_w_);
    res.target = build_target(triplet);
    return res;
}

Tensor ScaleAlibiModel::batch_loss(const std::vector<AlignedTriplet>& batch,
                                   const std::vector<std::vector<bool>>& masks) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<Tensor> zr, zl, zh;
    ReconBatch recon;
    recon.modes = mode_slices();
    recon.error = cfg_.recon_error == "squared" ? ReconError::squared : ReconError::absolute;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ForwardResult r = forward(batch[i], masks.empty() ? nullptr : &masks[i]);
        zr.push_back(r.z_radar);
        zl.push_back(r.z_lores);
        zh.push_back(r.z_hires);
        recon.predictions.push_back(r.decoder_out);
        recon.targets.push_back(r.target);
        recon.mask.push_back(r.mask);
    }
    ContrastiveBatch cb;
    cb.temperature = cfg_.temperature;
    cb.z = {concat(zr, 0), concat(zl, 0), concat(zh, 0)};
    Tensor l_con = contrastive_loss(cb);
    Tensor l_recon = reconstruction_loss(recon);
    return total_loss(l_con, l_recon);
}

double ScaleAlibiModel::current_lr() const {
    if (cfg_.warmup_steps == 0 || step_ >= cfg_.warmup_steps) return cfg_.lr;
    return cfg_.lr * static_cast<double>(step_ + 1) / static_cast<double>(cfg_.warmup_steps);
}

StepMetrics ScaleAlibiModel::train_step(const std::vector<AlignedTriplet>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    params_.zero_grads();

    std::vector<Tensor> zr, zl, zh;
    ReconBatch recon;
    recon.modes = mode_slices();
    recon.error = cfg_.recon_error == "squared" ? ReconError::squared : ReconError::absolute;
    for (const auto& sample : batch) {
        ForwardResult r = forward(sample);
        zr.push_back(r.z_radar);
        zl.push_back(r.z_lores);
        zh.push_back(r.z_hires);
        recon.predictions.push_back(r.decoder_out);
        recon.targets.push_back(r.target);
        recon.mask.push_back(r.mask);
    }
    ContrastiveBatch cb;
    cb.temperature = cfg_.temperature;
    cb.z = {concat(zr, 0), concat(zl, 0), concat(zh, 0)};
    Tensor l_con = contrastive_loss(cb);
    Tensor l_recon = reconstruction_loss(recon);
    Tensor l_total;
    try {
        l_total = total_loss(l_con, l_recon);
    } catch (const std::invalid_argument&) {
        std::string bad;
        for (const auto& [name, t] : params_.items())
            for (double v : t.data())
                if (!std::isfinite(v)) {
                    bad += (bad.empty() ? "" : ", ") + name;
                    break;
                }
        throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step_) +
                                 (bad.empty() ? " (all params finite; check inputs)"
                                              : "; non-finite params: " + bad));
    }
    backward(l_total);

    const double lr = current_lr();
    auto tensors = params_.tensors();
    adam_step(tensors, opt_, lr);
    ++step_;
    return StepMetrics{step_, l_con.value(), l_recon.value(), l_total.value(), lr};
}

std::vector<double> ScaleAlibiModel::encode_for_probe(const Raster& image, ProbeEncoder which) {
    const std::size_t want = which == ProbeEncoder::lores_encoder ? cfg_.lores_px : cfg_.hires_px();
    if (image.height != want || image.width != want)
        throw std::invalid_argument("encode_for_probe: expected " + std::to_string(want) + "x" +
                                    std::to_string(want) + " image, got " +
                                    std::to_string(image.height) + "x" +
                                    std::to_string(image.width));
    TokenStream enc = encode_modality(
        image, which == ProbeEncoder::lores_encoder ? Modality::lores : Modality::hires);
    const auto& proj = which == ProbeEncoder::lores_encoder ? proj_lores_w_ : proj_hires_w_;
    Tensor z = pool_and_normalize(enc, proj, std::nullopt);
    return z.detach().data();
}

namespace {

std::vector<double> string_to_f64(const std::string& s) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<unsigned char>(s[i]);
    return out;
}

std::string f64_to_string(const std::vector<double>& v) {
    std::string out(v.size(), '\0');
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<char>(static_cast<int>(v[i]));
    return out;
}

double bits_to_f64(std::uint64_t u) {
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

std::uint64_t f64_to_bits(double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    return u;
}

} // namespace

void ScaleAlibiModel::save(const std::filesystem::path& path) const {
    CheckpointData ckpt;
    ckpt.config_digest = cfg_.digest();
    const std::string cfg_text = cfg_.to_json();
    ckpt.arrays.push_back({"config_json", {cfg_text.size()}, string_to_f64(cfg_text)});
    ckpt.arrays.push_back({"step", {}, {static_cast<double>(step_)}});
    const auto rs = rng_.state();
    ckpt.arrays.push_back({"rng_state",
                           {4},
                           {bits_to_f64(rs[0]), bits_to_f64(rs[1]), bits_to_f64(rs[2]),
                            bits_to_f64(rs[3])}});
    for (const auto& [name, t] : params_.items())
        ckpt.arrays.push_back({"param/" + name, t.shape(), t.data()});
    ckpt.arrays.push_back({"opt/step", {}, {static_cast<double>(opt_.step)}});
    if (!opt_.m.empty()) {
        std::size_t i = 0;
        for (const auto& [name, t] : params_.items()) {
            ckpt.arrays.push_back({"opt/m/" + name, t.shape(), opt_.m[i]});
            ckpt.arrays.push_back({"opt/v/" + name, t.shape(), opt_.v[i]});
            ++i;
        }
    }
    save_checkpoint(path, ckpt);
}

ModelConfig ScaleAlibiModel::peek_config(const std::filesystem::path& path) {
    const CheckpointData ckpt = load_checkpoint(path);
    return ModelConfig::from_json(f64_to_string(ckpt.find("config_json").data));
}

ScaleAlibiModel ScaleAlibiModel::load(const std::filesystem::path& path) {
    const CheckpointData ckpt = load_checkpoint(path);
    const ModelConfig cfg = ModelConfig::from_json(f64_to_string(ckpt.find("config_json").data));
    if (ckpt.config_digest != cfg.digest())
        throw FormatError("checkpoint: config digest mismatch in " + path.string());
    ScaleAlibiModel model(cfg);
    model.step_ = static_cast<std::uint64_t>(ckpt.find("step").data[0]);
    const auto& rs = ckpt.find("rng_state").data;
    model.rng_.set_state({f64_to_bits(rs[0]), f64_to_bits(rs[1]), f64_to_bits(rs[2]),
                          f64_to_bits(rs[3])});
    for (const auto& [name, t] : model.params_.items()) {
        const NamedArray& a = ckpt.find("param/" + name);
        if (a.shape != t.shape())
            throw FormatError("checkpoint: shape mismatch for " + name);
        Tensor target = t; // shares storage with the registered param
        target.data() = a.data;
    }
    model.opt_.step = static_cast<std::uint64_t>(ckpt.find("opt/step").data[0]);
    if (ckpt.has("opt/m/" + model.params_.items().front().first)) {
        for (const auto& [name, t] : model.params_.items()) {
            model.opt_.m.push_back(ckpt.find("opt/m/" + name).data);
            model.opt_.v.push_back(ckpt.find("opt/v/" + name).data);
        }
    }
    return model;
}

} // namespace salibi
