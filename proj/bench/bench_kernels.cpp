// Microbenchmarks pairing each parallel kernel with its serial reference.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <vector>

#include "frfens/dst.hpp"
#include "frfens/frf_data.hpp"
#include "frfens/nn.hpp"
#include "frfens/pipeline.hpp"
#include "frfens/reference.hpp"
#include "frfens/rng.hpp"
#include "frfens/run_config.hpp"

using namespace frfens;

namespace {

nn::NnDataset random_set(int channels, int length, int n, std::uint64_t seed) {
    nn::NnDataset ds;
    ds.in_channels = channels;
    ds.input_length = length;
    Rng rng(seed);
    ds.x.resize(static_cast<std::size_t>(n) * channels * length);
    for (double& v : ds.x) v = rng.normal();
    for (int i = 0; i < n; ++i) ds.y.push_back(i % 2);
    return ds;
}

std::vector<std::vector<double>> random_probs(int members, int samples,
                                              std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> probs(static_cast<std::size_t>(members));
    for (auto& rows : probs) {
        rows.resize(static_cast<std::size_t>(samples) * 2);
        for (int i = 0; i < samples; ++i) {
            const double p = rng.uniform(0.05, 0.95);
            rows[2 * static_cast<std::size_t>(i)] = p;
            rows[2 * static_cast<std::size_t>(i) + 1] = 1.0 - p;
        }
    }
    return probs;
}

} // namespace

static void BM_synth_reference(benchmark::State& state) {
    const data::ModalModel model = default_modal_model(0.02);
    const data::FrequencyGrid grid;
    for (auto _ : state)
        benchmark::DoNotOptimize(ref::synth_frf(model, grid, 7));
    state.SetItemsProcessed(state.iterations() * grid.n_bins * data::kSensors);
}
BENCHMARK(BM_synth_reference)->Unit(benchmark::kMillisecond);

static void BM_synth_parallel(benchmark::State& state) {
    const data::ModalModel model = default_modal_model(0.02);
    const data::FrequencyGrid grid;
    for (auto _ : state)
        benchmark::DoNotOptimize(data::synth_frf(model, grid, 7));
    state.SetItemsProcessed(state.iterations() * grid.n_bins * data::kSensors);
}
BENCHMARK(BM_synth_parallel)->Unit(benchmark::kMillisecond);

static void BM_predict_reference(benchmark::State& state) {
    nn::CnnConfig cfg;
    const nn::CnnModel model = nn::init_model(cfg, 3);
    const nn::NnDataset ds = random_set(cfg.in_channels, cfg.input_length, 64, 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(ref::predict(model, ds));
    state.SetItemsProcessed(state.iterations() * ds.n());
}
BENCHMARK(BM_predict_reference)->Unit(benchmark::kMillisecond);

static void BM_predict_parallel(benchmark::State& state) {
    nn::CnnConfig cfg;
    const nn::CnnModel model = nn::init_model(cfg, 3);
    const nn::NnDataset ds = random_set(cfg.in_channels, cfg.input_length, 64, 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(nn::predict(model, ds));
    state.SetItemsProcessed(state.iterations() * ds.n());
}
BENCHMARK(BM_predict_parallel)->Unit(benchmark::kMillisecond);

static void BM_train_epoch_reference(benchmark::State& state) {
    nn::CnnConfig cfg;
    const nn::CnnModel init = nn::init_model(cfg, 3);
    const nn::NnDataset ds = random_set(cfg.in_channels, cfg.input_length, 64, 5);
    nn::TrainConfig tc;
    tc.batch_size = 16;
    std::vector<int> idx(static_cast<std::size_t>(ds.n()));
    std::iota(idx.begin(), idx.end(), 0);
    for (auto _ : state) {
        nn::CnnModel model = init;
        nn::AdamState adam = nn::AdamState::for_model(model);
        for (int b = 0; b < ds.n(); b += tc.batch_size) {
            const int take = std::min(tc.batch_size, ds.n() - b);
            std::vector<Tensor> grads = ref::batch_gradients(
                model, ds, std::span<const int>(idx.data() + b,
                                                static_cast<std::size_t>(take)));
            for (Tensor& g : grads)
                for (double& v : g.data) v /= static_cast<double>(take);
            ref::adam_step(model, grads, adam, tc.lr0, tc);
        }
        benchmark::DoNotOptimize(model);
    }
    state.SetItemsProcessed(state.iterations() * ds.n());
}
BENCHMARK(BM_train_epoch_reference)->Unit(benchmark::kMillisecond);

static void BM_train_epoch_parallel(benchmark::State& state) {
    nn::CnnConfig cfg;
    const nn::CnnModel init = nn::init_model(cfg, 3);
    const nn::NnDataset ds = random_set(cfg.in_channels, cfg.input_length, 64, 5);
    nn::TrainConfig tc;
    tc.batch_size = 16;
    tc.max_epochs = 1;
    for (auto _ : state) {
        nn::CnnModel model = init;
        benchmark::DoNotOptimize(nn::train(model, ds, tc));
        benchmark::DoNotOptimize(model);
    }
    state.SetItemsProcessed(state.iterations() * ds.n());
}
BENCHMARK(BM_train_epoch_parallel)->Unit(benchmark::kMillisecond);

static void BM_fusion_reference(benchmark::State& state) {
    const int samples = 200;
    const auto probs = random_probs(8, samples, 11);
    const dst::Frame frame{{"healthy", "defect"}};
    for (auto _ : state) {
        std::vector<int> out;
        for (int i = 0; i < samples; ++i) {
            dst::EvidenceSet ev;
            for (const auto& rows : probs) {
                const double* row = rows.data() + 2 * static_cast<std::size_t>(i);
                ev.push_back(dst::bba_from_probs(
                    frame, std::span<const double>(row, 2), 1e-6));
            }
            out.push_back(dst::decide(dst::improved_fuse(ev).fused).cls);
        }
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * samples);
}
BENCHMARK(BM_fusion_reference)->Unit(benchmark::kMillisecond);

static void BM_fusion_parallel(benchmark::State& state) {
    const int samples = 200;
    const auto probs = random_probs(8, samples, 11);
    std::vector<int> members(probs.size());
    std::iota(members.begin(), members.end(), 0);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            pipeline::fuse_decide(probs, members, samples, 1e-6));
    state.SetItemsProcessed(state.iterations() * samples);
}
BENCHMARK(BM_fusion_parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
