#include <CLI11.hpp>

#include "salibi/dataset.hpp"
#include "salibi/model.hpp"
#include "salibi/probes.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace salibi;

// stable exit contract: 0 success, 1 verification failure, 2 usage, 3 IO/format
constexpr int kOk = 0;
constexpr int kVerifyFail = 1;
constexpr int kUsage = 2;
constexpr int kIoError = 3;

void print_config(const ModelConfig& cfg) {
    std::cout << "config: " << cfg.to_json() << "\n";
    std::cout << "seed: " << cfg.seed << "\n";
}

std::vector<AlignedTriplet> generate_samples(std::uint64_t n, std::uint32_t classes,
                                             std::size_t size, std::uint64_t seed) {
    Rng tile_rng(seed);
    std::vector<AlignedTriplet> samples;
    samples.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        TileId tile{10, static_cast<std::uint32_t>(tile_rng.below(1024)),
                    static_cast<std::uint32_t>(tile_rng.below(1024))};
        const auto cls = static_cast<std::uint32_t>(i % classes);
        samples.push_back(synth_triplet(tile, cls, seed, size));
    }
    return samples;
}

int cmd_gen_data(const std::string& out, std::uint64_t samples, std::uint32_t classes,
                 std::size_t size, std::uint64_t seed) {
    std::cout << "gen-data: samples=" << samples << " classes=" << classes << " size=" << size
              << "\n";
    std::cout << "seed: " << seed << "\n";
    if (classes == 0) {
        std::cerr << "gen-data: --classes must be >= 1\n";
        return kUsage;
    }
    auto set = generate_samples(samples, classes, size, seed);
    write_dataset(set, out, seed);
    std::cout << "wrote " << samples << " samples to " << out << "\n";
    return kOk;
}

int cmd_verify_dataset(const std::string& dir) {
    DatasetReader reader(dir);
    const auto& m = reader.manifest();
    std::cout << "dataset: count=" << m.count << " size=" << m.size << " seed=" << m.seed << "\n";
    for (std::size_t i = 0; i < reader.count(); ++i) {
        AlignedTriplet t = reader.read(i);
        t.validate();
        if (t.tile != m.tiles[i] || t.class_id != m.classes[i])
            throw FormatError("verify-dataset: record " + std::to_string(i) +
                              " disagrees with manifest");
    }
    std::cout << "ok: all " << reader.count() << " records readable and consistent\n";
    return kOk;
}

std::vector<AlignedTriplet> load_all(const DatasetReader& reader) {
    std::vector<AlignedTriplet> all;
    all.reserve(reader.count());
    for (std::size_t i = 0; i < reader.count(); ++i) all.push_back(reader.read(i));
    return all;
}

void write_metrics_line(std::ostream& os, const StepMetrics& m, std::uint64_t seed) {
    os << "{\"step\":" << m.step << ",\"l_con\":" << m.l_con << ",\"l_recon\":" << m.l_recon
       << ",\"l_total\":" << m.l_total << ",\"lr\":" << m.lr << ",\"seed\":" << seed << "}\n";
}

int cmd_train(const std::string& config_path, const std::string& data_dir, std::uint64_t steps,
              const std::string& out_path, const std::string& log_path,
              const std::string& resume_path) {
    std::optional<ScaleAlibiModel> model;
    if (!resume_path.empty()) {
        model.emplace(ScaleAlibiModel::load(resume_path));
        if (!config_path.empty() &&
            ModelConfig::load(config_path).digest() != model->config().digest()) {
            std::cerr << "train: --config disagrees with the checkpoint's config\n";
            return kVerifyFail;
        }
    } else {
        ModelConfig cfg = config_path.empty() ? ModelConfig{} : ModelConfig::load(config_path);
        model.emplace(cfg);
    }
    const ModelConfig& cfg = model->config();
    print_config(cfg);

    DatasetReader reader(data_dir);
    if (reader.count() == 0) {
        std::cerr << "train: dataset is empty\n";
        return kVerifyFail;
    }
    if (reader.manifest().size != cfg.lores_px) {
        std::cerr << "train: dataset sample size " << reader.manifest().size
                  << " does not match config lores_px " << cfg.lores_px << "\n";
        return kVerifyFail;
    }
    auto samples = load_all(reader);

    std::ofstream log_file;
    if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw FormatError("train: cannot open log file " + log_path);
    }
    std::ostream& log = log_path.empty() ? std::cout : log_file;

    const std::size_t B = cfg.batch_size;
    for (std::uint64_t s = 0; s < steps; ++s) {
        std::vector<AlignedTriplet> batch;
        const std::uint64_t base = model->step() * B;
        for (std::size_t i = 0; i < B; ++i)
            batch.push_back(samples[(base + i) % samples.size()]);
        StepMetrics m = model->train_step(batch);
        write_metrics_line(log, m, cfg.seed);
    }
    if (!out_path.empty()) {
        model->save(out_path);
        std::cout << "checkpoint: " << out_path << " (step " << model->step() << ")\n";
    }
    return kOk;
}

ModelConfig micro_config(std::uint64_t seed) {
    ModelConfig c;
    c.lores_px = 8;
    c.patch_px = 4;
    c.radar_depth = c.lores_depth = c.hires_depth = 1;
    c.radar_dim = c.lores_dim = c.hires_dim = 8;
    c.radar_heads = c.lores_heads = c.hires_heads = 1;
    c.cross_heads = 1;
    c.decoder_depth = 1;
    c.decoder_dim = 8;
    c.decoder_heads = 1;
    c.mlp_ratio = 2.0;
    c.mask_ratio = 0.5;
    c.seed = seed;
    return c;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& config_path, bool sabotage) {
    ModelConfig cfg = config_path.empty() ? micro_config(seed) : ModelConfig::load(config_path);
    if (!config_path.empty()) cfg.seed = seed;
    print_config(cfg);
    ScaleAlibiModel model(cfg);

    std::vector<AlignedTriplet> batch;
    Rng data_rng(seed);
    for (int i = 0; i < 2; ++i)
        batch.push_back(synth_triplet(TileId{8, static_cast<std::uint32_t>(data_rng.below(256)),
                                             static_cast<std::uint32_t>(data_rng.below(256))},
                                      static_cast<std::uint32_t>(i % 4), seed, cfg.lores_px));
    const std::size_t tokens = (cfg.lores_px / cfg.patch_px) * (cfg.lores_px / cfg.patch_px);
    std::vector<std::vector<bool>> masks;
    Rng mask_rng(seed ^ 1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<bool> mk(tokens, false);
        mk[mask_rng.below(tokens)] = true;
        mk[(mask_rng.below(tokens - 1) + 1) % tokens] = true;
        masks.push_back(mk);
    }

    // losses rebuilt from scratch on every call so finite differences see a
    // fresh graph; contrastive and reconstruction branches kept separable
    auto branch_losses = [&]() -> std::pair<Tensor, Tensor> {
        std::vector<Tensor> zr, zl, zh;
        ReconBatch rb;
        rb.modes = model.mode_slices();
        rb.error = ReconError::squared;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            ForwardResult r = model.forward(batch[i], &masks[i]);
            zr.push_back(r.z_radar);
            zl.push_back(r.z_lores);
            zh.push_back(r.z_hires);
            rb.predictions.push_back(r.decoder_out);
            rb.targets.push_back(r.target);
            rb.mask.push_back(r.mask);
        }
        ContrastiveBatch cb{{concat(zr, 0), concat(zl, 0), concat(zh, 0)}, cfg.temperature};
        return {contrastive_loss(cb), reconstruction_loss(rb)};
    };
    auto total_fn = [&] {
        auto [con, recon] = branch_losses();
        return total_loss(con, recon);
    };
    auto con_fn = [&] { return branch_losses().first; };
    auto recon_fn = [&] { return branch_losses().second; };

    // central finite differences; 1e-4 step keeps f64 cancellation noise well
    // below the 1e-4 acceptance threshold
    const double step = 1e-4;
    auto max_rel_err = [&](Tensor leaf, const std::function<Tensor()>& loss_fn) {
        leaf.zero_grad();
        backward(loss_fn());
        std::vector<double> analytic = leaf.grad();
        if (sabotage && !analytic.empty()) analytic[0] = -analytic[0] - 1.0;
        double worst = 0.0;
        for (std::size_t i = 0; i < leaf.numel(); ++i) {
            const double saved = leaf.data()[i];
            leaf.data()[i] = saved + step;
            const double fp = loss_fn().value();
            leaf.data()[i] = saved - step;
            const double fm = loss_fn().value();
            leaf.data()[i] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
            worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
        }
        return worst;
    };

    std::map<std::string, double> group_err;
    for (const auto& [name, tensor] : model.params().items()) {
        const std::string group = name.substr(0, name.find('.'));
        Tensor leaf = tensor;
        group_err[group] = std::max(group_err[group], max_rel_err(leaf, total_fn));
    }
    group_err["loss_contrastive"] = max_rel_err(model.params().get("enc_lores.patch.w"), con_fn);
    group_err["loss_reconstruction"] = max_rel_err(model.params().get("decoder.head.w"), recon_fn);

    const double tol = 1e-4;
    bool ok = true;
    std::string worst_name;
    double worst_val = -1.0;
    for (const auto& [group, err] : group_err) {
        std::cout << "group " << group << ": max rel err " << err << "\n";
        if (err > worst_val) {
            worst_val = err;
            worst_name = group;
        }
        if (!(err < tol)) ok = false;
    }
    if (!ok) {
        std::cerr << "gradcheck FAILED: worst group " << worst_name << " at " << worst_val
                  << " (tolerance " << tol << ")\n";
        return kVerifyFail;
    }
    std::cout << "gradcheck passed: all groups below " << tol << "\n";
    return kOk;
}

int cmd_bias_dump(std::size_t rows, std::size_t cols, std::size_t patch, double gsd,
                  std::size_t key_rows, std::size_t key_cols, double key_gsd, std::size_t heads,
                  const std::string& out) {
    std::cout << "bias-dump: query " << rows << "x" << cols << " patch " << patch << " gsd " << gsd
              << " heads " << heads << "\n";
    auto slopes = slope_schedule(heads);
    PatchGrid query{rows, cols, patch, gsd};
    BiasTensor bias;
    if (key_rows > 0) {
        PatchGrid key{key_rows, key_cols, patch, key_gsd};
        std::cout << "key grid " << key_rows << "x" << key_cols << " gsd " << key_gsd << "\n";
        bias = cross_bias(query, key, slopes);
    } else {
        bias = self_bias(query, slopes);
    }
    if (out.empty()) {
        write_bias_csv(bias, slopes, std::cout);
    } else {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw FormatError("bias-dump: cannot open " + out);
        write_bias_csv(bias, slopes, f);
        std::cout << "wrote " << out << "\n";
    }
    return kOk;
}

int cmd_probe(const std::string& ckpt, const std::string& data_dir, const std::string& method,
              const std::string& encoder, std::size_t k, std::size_t hidden, std::size_t epochs,
              std::uint64_t seed) {
    ScaleAlibiModel model = ScaleAlibiModel::load(ckpt);
    print_config(model.config());

    DatasetReader reader(data_dir);
    if (reader.manifest().size != model.config().lores_px)
        throw FormatError("probe: dataset sample size does not match checkpoint config");
    const ProbeEncoder which =
        encoder == "lores" ? ProbeEncoder::lores_encoder : ProbeEncoder::hires_encoder;

    FeatureMatrix features;
    std::vector<int> labels;
    for (std::size_t i = 0; i < reader.count(); ++i) {
        AlignedTriplet t = reader.read(i);
        const Raster& img = which == ProbeEncoder::lores_encoder ? t.lores : t.hires;
        features.push_back(model.encode_for_probe(img, which));
        labels.push_back(static_cast<int>(t.class_id));
    }
    if (features.empty()) {
        std::cerr << "probe: dataset is empty\n";
        return kVerifyFail;
    }

    // deterministic 80/20 split by index: every 5th sample is held out
    FeatureMatrix train_f, test_f;
    std::vector<int> train_l, test_l;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (i % 5 == 4) {
            test_f.push_back(features[i]);
            test_l.push_back(labels[i]);
        } else {
            train_f.push_back(features[i]);
            train_l.push_back(labels[i]);
        }
    }

    double acc = 0.0;
    if (method == "knn") {
        const std::size_t kk = std::min(k, train_f.size());
        acc = knn_probe(train_f, train_l, test_f, test_l, kk);
        std::cout << "method: knn k=" << kk << " encoder=" << encoder << "\n";
    } else if (method == "kmeans") {
        int classes = 0;
        for (int l : labels) classes = std::max(classes, l + 1);
        KMeansResult r = kmeans_probe(features, labels, static_cast<std::size_t>(classes), seed);
        acc = r.matched_accuracy;
        std::cout << "method: kmeans k=" << classes << " seed=" << seed << " encoder=" << encoder
                  << "\n";
    } else { // mlp, validated by CLI11
        MlpProbeOptions opts;
        opts.hidden = hidden;
        opts.epochs = epochs;
        opts.seed = seed;
        acc = mlp_probe(train_f, train_l, test_f, test_l, opts);
        std::cout << "method: mlp hidden=" << hidden << " epochs=" << epochs << " seed=" << seed
                  << " encoder=" << encoder << "\n";
    }
    std::cout << "accuracy: " << acc << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-biased multi-modal encoder toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic aligned-triplet dataset");
    std::string gen_out;
    std::uint64_t gen_samples = 64, gen_seed = 42;
    std::uint32_t gen_classes = 4;
    std::size_t gen_size = 32;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--samples", gen_samples, "sample count");
    gen->add_option("--classes", gen_classes, "number of classes");
    gen->add_option("--size", gen_size, "lores pixel size");
    gen->add_option("--seed", gen_seed, "generator seed");

    // verify-dataset
    auto* verify = app.add_subcommand("verify-dataset", "validate a dataset container");
    std::string verify_dir;
    verify->add_option("--data", verify_dir, "dataset directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train a model");
    std::string train_config, train_data, train_out, train_log, train_resume;
    std::uint64_t train_steps = 200;
    train->add_option("--config", train_config, "model config JSON");
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--steps", train_steps, "training steps");
    train->add_option("--out", train_out, "checkpoint output path");
    train->add_option("--log", train_log, "metrics JSON-lines file (default stdout)");
    train->add_option("--resume", train_resume, "resume from checkpoint");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "verify gradients against finite differences");
    std::uint64_t grad_seed = 42;
    std::string grad_config;
    bool grad_sabotage = false;
    grad->add_option("--seed", grad_seed, "seed");
    grad->add_option("--config", grad_config, "model config JSON (default: built-in micro)");
    grad->add_flag("--sabotage", grad_sabotage, "negative control: corrupt one gradient");

    // bias-dump
    auto* bias = app.add_subcommand("bias-dump", "dump an attention bias tensor as CSV");
    std::size_t b_rows = 2, b_cols = 2, b_patch = 2, b_krows = 0, b_kcols = 0, b_heads = 1;
    double b_gsd = 1.0, b_kgsd = 1.0;
    bias->add_option("--rows", b_rows, "query grid rows");
    bias->add_option("--cols", b_cols, "query grid cols");
    bias->add_option("--patch", b_patch, "patch size in pixels");
    bias->add_option("--gsd", b_gsd, "query ground sample distance");
    bias->add_option("--key-rows", b_krows, "key grid rows (enables cross mode)");
    bias->add_option("--key-cols", b_kcols, "key grid cols");
    bias->add_option("--key-gsd", b_kgsd, "key ground sample distance");
    bias->add_option("--heads", b_heads, "head count");
    std::string bias_out;
    bias->add_option("--out", bias_out, "CSV path (default stdout)");

    // probe
    auto* probe = app.add_subcommand("probe", "evaluate encoder representations");
    std::string p_ckpt, p_data, p_method, p_encoder = "lores";
    std::size_t p_k = 20, p_hidden = 2048, p_epochs = 50;
    std::uint64_t p_seed = 42;
    probe->add_option("--ckpt", p_ckpt, "checkpoint path")->required();
    probe->add_option("--data", p_data, "dataset directory")->required();
    probe->add_option("--method", p_method, "probe method")
        ->required()
        ->check(CLI::IsMember({"knn", "kmeans", "mlp"}));
    probe->add_option("--encoder", p_encoder, "which encoder to probe")
        ->check(CLI::IsMember({"lores", "hires"}));
    probe->add_option("--k", p_k, "kNN neighbor count");
    probe->add_option("--hidden", p_hidden, "MLP hidden size");
    probe->add_option("--epochs", p_epochs, "MLP training epochs");
    probe->add_option("--seed", p_seed, "probe seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_samples, gen_classes, gen_size, gen_seed);
        if (verify->parsed()) return cmd_verify_dataset(verify_dir);
        if (train->parsed())
            return cmd_train(train_config, train_data, train_steps, train_out, train_log,
                             train_resume);
        if (grad->parsed()) return cmd_gradcheck(grad_seed, grad_config, grad_sabotage);
        if (bias->parsed())
            return cmd_bias_dump(b_rows, b_cols, b_patch, b_gsd, b_krows, b_kcols, b_kgsd, b_heads,
                                 bias_out);
        if (probe->parsed())
            return cmd_probe(p_ckpt, p_data, p_method, p_encoder, p_k, p_hidden, p_epochs, p_seed);
    } catch (const salibi::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kVerifyFail;
    }
    return kUsage;
}
