#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdm/checkpoint.hpp"
#include "sdm/data.hpp"
#include "sdm/hybrid_model.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

// Presence-only multi-label objective. Every observed row i carries one
// confirmed species s_i; all other species at x_i and all species at the
// paired background point z_i are treated as absent:
//
//   loss = -(1/(N*S)) * sum_i sum_j [ (j == s_i) * lambda_pos * log p_obs(i,j)
//                                   + (j != s_i) * log(1 - p_obs(i,j))
//                                   + log(1 - p_pseudo(i,j)) ]
//
// lambda_pos up-weights the lone positive term per row so the O(S) assumed
// negatives cannot drown it out. Differentiable w.r.t. both prediction
// tensors; returns a [1 x 1] tensor.
Tensor an_full_loss(Graph& g, const Tensor& pred_obs, std::span<const int> species,
                    const Tensor& pred_pseudo, double lambda_pos);

// n background points drawn i.i.d. uniform over [-1,1]^2, one (lat, lon) row
// each. Deterministic for a fixed rng stream.
Tensor sample_pseudoabsences(Index n, Rng& rng);

// Per-species uniform subsample without replacement: each species keeps
// min(cap, available) of its rows. Surviving rows stay in their original
// order; the vocab is unchanged. Appends ";cap=<cap>" to the provenance.
ObservationSet apply_observation_cap(const ObservationSet& data, Index cap, Rng& rng);

// Adam moment buffers, one pair per parameter block, shaped at construction.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamState(std::span<const NamedParam> params);
};

// One bias-corrected Adam update from the gradients currently sitting in each
// parameter's grad buffer. Grads are consumed, not cleared.
void adam_step(std::span<NamedParam> params, AdamState& state, double lr);

// Everything one training run needs. Capacity fields mirror plan_capacity;
// features_per_level == 0 means "pick the default for this implicitness".
struct TrainConfig {
    Index epochs = 10;
    double learning_rate = 1e-3;
    double lambda_pos = 2048.0;
    Index batch_size = 2048;
    double dropout_p = 0.5;
    std::uint64_t seed = 0;

    double implicitness = 0.5;
    Index total_dim = 64;
    Index features_per_level = 0;
    HashGridConfig grid;

    std::optional<Index> obs_cap;
};

// The config as a canonical JSON object, suitable for checkpoint echoes and
// result-table metadata.
std::string train_config_json(const TrainConfig& config);

struct EpochRecord {
    Index epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double seconds = 0.0;
};

using MetricsSink = std::function<void(const EpochRecord&)>;

struct TrainResult {
    HybridModel model;
    CheckpointMeta meta;  // vocab + seed + config echo, ready for save_checkpoint
    std::vector<EpochRecord> epochs;
    Index rows_trained = 0;  // dataset size after any observation cap
};

// Full run: optional observation cap, seeded model init, per-epoch shuffle,
// per-batch fresh pseudoabsences, Adam steps. Each randomness consumer (cap,
// init, data order, dropout, pseudoabsences) draws from its own substream of
// config.seed, so runs are bit-reproducible. Emits one EpochRecord per epoch
// to `sink` (row-weighted mean batch loss plus wall-clock seconds).
TrainResult train(const TrainConfig& config, const ObservationSet& data,
                  const MetricsSink& sink = {});

// ---- sweep harness ------------------------------------------------------

struct SweepEvalSpec {
    std::vector<RangeRaster> rasters;
    // Also emit one "ap:<species>" row per evaluated species and run.
    bool per_species_rows = false;
};

struct SweepRow {
    double implicitness = 0.0;
    double learning_rate = 0.0;
    Index obs_cap = -1;  // -1 when uncapped
    std::uint64_t seed = 0;
    std::string metric;  // "map" or "ap:<species>"
    double value = 0.0;
};

// Per (implicitness, obs_cap) group: the learning rate whose median-over-seeds
// mAP is highest.
struct SweepBest {
    double implicitness = 0.0;
    Index obs_cap = -1;
    double learning_rate = 0.0;
    double median_map = 0.0;
};

struct SweepFailure {
    std::size_t config_index = 0;
    std::string message;
};

struct SweepOutcome {
    std::vector<SweepRow> rows;
    std::vector<SweepBest> best;
    std::vector<SweepFailure> failures;
};

// Trains and evaluates every config. A run that throws is recorded in
// `failures` and the sweep moves on; it never aborts the remaining runs.
// `jobs` > 1 runs configs on that many worker threads (each run owns its rng
// and model, so the outcome is identical to the sequential order).
SweepOutcome sweep(std::span<const TrainConfig> configs, const ObservationSet& data,
                   const SweepEvalSpec& eval, Index jobs = 1);

// CSV serialization: header "implicitness,learning_rate,obs_cap,seed,metric,value",
// one line per row, empty obs_cap field when uncapped.
std::string sweep_csv(const SweepOutcome& outcome);

}  // namespace sdm
