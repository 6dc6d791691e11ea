#include "salibi/attention.hpp"
#include "salibi/bias.hpp"
#include "salibi/dataset.hpp"
#include "salibi/model.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace salibi;

namespace {

void bm_self_bias(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const SlopeSchedule slopes = slope_schedule(8);
    for (auto _ : state) {
        BiasTensor b = self_bias({side, side, 8, 1.0}, slopes);
        benchmark::DoNotOptimize(b.values.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_self_bias)->Arg(4)->Arg(8)->Arg(16)->Arg(32)->Complexity();

void bm_biased_attention(benchmark::State& state) {
    const auto tokens = static_cast<std::size_t>(state.range(0));
    const std::size_t dim = 64, heads = 4;
    const std::size_t side = static_cast<std::size_t>(std::sqrt(static_cast<double>(tokens)));
    Rng rng(1);
    std::vector<double> xd(tokens * dim);
    for (auto& v : xd) v = rng.uniform(-1, 1);
    TokenStream x{Tensor::from({tokens, dim}, xd), {side, side, 8, 1.0}};

    ParamStore params;
    AttentionConfig cfg{heads, dim, ScaleMode::inv_sqrt_d};
    AttentionWeights w = make_attention_weights(params, "bench", dim, dim, rng);
    BiasTensor bias = self_bias(x.grid, slope_schedule(heads));
    for (auto _ : state) {
        Tensor out = biased_attention(x.tokens, x.tokens, bias, cfg, w);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_biased_attention)->Arg(16)->Arg(64)->Arg(256)->Complexity();

void bm_synth_triplet(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    std::uint32_t i = 0;
    for (auto _ : state) {
        AlignedTriplet t = synth_triplet(TileId{10, 511, 340}, i++ % 4, 42, size);
        benchmark::DoNotOptimize(t.hires.data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_synth_triplet)->Arg(16)->Arg(32)->Arg(64)->Complexity();

void bm_train_step(benchmark::State& state) {
    ModelConfig cfg;
    cfg.lores_px = 16;
    cfg.patch_px = 4;
    cfg.radar_depth = cfg.lores_depth = cfg.hires_depth = 1;
    cfg.radar_dim = cfg.lores_dim = cfg.hires_dim = 32;
    cfg.radar_heads = cfg.lores_heads = cfg.hires_heads = 2;
    cfg.cross_heads = 2;
    cfg.decoder_dim = 32;
    cfg.decoder_heads = 2;
    cfg.mlp_ratio = 2.0;
    cfg.batch_size = 2;
    ScaleAlibiModel model(cfg);
    std::vector<AlignedTriplet> batch;
    for (std::uint32_t i = 0; i < 2; ++i)
        batch.push_back(synth_triplet(TileId{10, 100 + i, 200}, i, 42, cfg.lores_px));
    for (auto _ : state) {
        StepMetrics m = model.train_step(batch);
        benchmark::DoNotOptimize(m.l_total);
    }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
