// Hot-path micro-benchmarks: the two encoders, the fused train step, and
// ranking evaluation. Batch sizes bracket the defaults the CLI actually uses.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "sdm/evaluation.hpp"
#include "sdm/hashgrid_encoder.hpp"
#include "sdm/hybrid_model.hpp"
#include "sdm/implicit_encoder.hpp"
#include "sdm/rng.hpp"
#include "sdm/tensor.hpp"
#include "sdm/training.hpp"

namespace {

sdm::Tensor random_coords(sdm::Index n, std::uint64_t seed) {
    sdm::Rng rng(seed);
    sdm::Tensor coords(n, 2);
    for (double& v : coords.values()) v = rng.uniform(-1.0, 1.0);
    return coords;
}

void BM_HashGridEncode(benchmark::State& state) {
    sdm::HashGridConfig config;  // 16..512 over 8 levels, 2^14-row tables
    config.r_min = 16.0;
    config.r_max = 512.0;
    sdm::Rng init(1);
    sdm::HashGridEncoder encoder(config, 8, 8, init);
    sdm::Tensor coords = random_coords(state.range(0), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encoder.encode(coords));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HashGridEncode)->Arg(256)->Arg(2048)->Arg(16384);

void BM_ImplicitForward(benchmark::State& state) {
    sdm::Rng init(1);
    sdm::ImplicitEncoder encoder(64, 0.0, init);
    sdm::Tensor coords = random_coords(state.range(0), 2);
    for (auto _ : state) {
        sdm::Graph g(false);
        benchmark::DoNotOptimize(encoder.forward(g, coords, false, nullptr));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ImplicitForward)->Arg(256)->Arg(2048)->Arg(16384);

void BM_HybridPredict(benchmark::State& state) {
    sdm::CapacityPlan plan =
        sdm::plan_capacity(0.5, 64, sdm::default_features_per_level(0.5));
    sdm::HashGridConfig grid;
    sdm::Rng init(1);
    sdm::HybridModel model(plan, 20, grid, 0.0, init);
    sdm::Tensor coords = random_coords(state.range(0), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.predict(coords));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HybridPredict)->Arg(256)->Arg(2048)->Arg(16384);

// One optimizer step at the default batch size: recorded forward for a batch
// and its paired pseudo-absences, loss, full backward, Adam update.
void BM_HybridTrainStep(benchmark::State& state) {
    sdm::CapacityPlan plan =
        sdm::plan_capacity(0.5, 64, sdm::default_features_per_level(0.5));
    sdm::HashGridConfig grid;
    sdm::Rng init(1);
    sdm::HybridModel model(plan, 20, grid, 0.25, init);
    std::vector<sdm::NamedParam> params = model.parameters();
    sdm::AdamState adam(params);

    const sdm::Index batch = 2048;
    sdm::Tensor coords = random_coords(batch, 2);
    sdm::Tensor pseudo = random_coords(batch, 3);
    sdm::Rng data(4);
    std::vector<int> species(batch);
    for (int& s : species) s = static_cast<int>(data.below(20));
    sdm::Rng dropout(5);

    for (auto _ : state) {
        for (sdm::NamedParam& p : params) p.value.zero_grad();
        sdm::Graph g;
        sdm::Tensor p_obs = model.forward_probabilities(g, coords, true, &dropout);
        sdm::Tensor p_pseudo = model.forward_probabilities(g, pseudo, true, &dropout);
        sdm::Tensor loss = sdm::an_full_loss(g, p_obs, species, p_pseudo, 2048.0);
        g.backward(loss);
        sdm::adam_step(params, adam, 1e-3);
        benchmark::DoNotOptimize(loss(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_HybridTrainStep);

void BM_AveragePrecision(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    sdm::Rng rng(9);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (auto& s : scores) s = rng.uniform();
    for (auto& l : labels) l = rng.below(4) == 0 ? 1 : 0;
    labels[0] = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sdm::average_precision(scores, labels));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
