#include "sdm/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"
#include "sdm/errors.hpp"
#include "sdm/evaluation.hpp"

namespace sdm {
namespace {

std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + "]";
}

// Probabilities must stay strictly inside (0,1) or the log terms blow up;
// the sigmoid head guarantees this, so hitting the wall means a caller fed
// raw scores in by mistake.
void check_open_unit(double p, const char* which, Index row, Index col) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw DomainError(std::string(which) + " prediction at (" + std::to_string(row) +
                          ", " + std::to_string(col) + ") is " + std::to_string(p) +
                          "; probabilities must lie strictly in (0, 1)");
    }
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

Tensor an_full_loss(Graph& g, const Tensor& pred_obs, std::span<const int> species,
                    const Tensor& pred_pseudo, double lambda_pos) {
    const Index n = pred_obs.rows();
    const Index s = pred_obs.cols();
    if (n < 1 || s < 1) {
        throw DimensionError("an_full_loss needs at least one row and one species, got " +
                             shape_str(pred_obs));
    }
    if (!pred_obs.same_shape(pred_pseudo)) {
        throw DimensionError("observed and pseudoabsence predictions differ in shape: " +
                             shape_str(pred_obs) + " vs " + shape_str(pred_pseudo));
    }
    if (static_cast<Index>(species.size()) != n) {
        throw DimensionError("species index count " + std::to_string(species.size()) +
                             " does not match " + std::to_string(n) + " observation rows");
    }
    if (!(lambda_pos > 0.0)) {
        throw ParameterError("lambda_pos must be positive, got " + std::to_string(lambda_pos));
    }
    for (Index i = 0; i < n; ++i) {
        if (species[i] < 0 || species[i] >= s) {
            throw ParameterError("species index " + std::to_string(species[i]) + " at row " +
                                 std::to_string(i) + " is outside [0, " + std::to_string(s) +
                                 ")");
        }
    }

    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        const int si = species[i];
        for (Index j = 0; j < s; ++j) {
            const double po = pred_obs(i, j);
            const double pz = pred_pseudo(i, j);
            check_open_unit(po, "observed", i, j);
            check_open_unit(pz, "pseudoabsence", i, j);
            total += (j == si) ? lambda_pos * std::log(po) : std::log(1.0 - po);
            total += std::log(1.0 - pz);
        }
    }
    const double norm = 1.0 / static_cast<double>(n * s);
    Tensor out(1, 1);
    out(0, 0) = -total * norm;

    const bool any_grad = pred_obs.requires_grad() || pred_pseudo.requires_grad();
    if (any_grad) out.set_requires_grad(true);
    if (any_grad && g.recording()) {
        g.record([pred_obs = pred_obs, pred_pseudo = pred_pseudo, out = out,
                  owned = std::vector<int>(species.begin(), species.end()), lambda_pos,
                  norm]() mutable {
            const double dout = out.grad()[0];
            const Index rows = pred_obs.rows();
            const Index cols = pred_obs.cols();
            if (pred_obs.requires_grad()) {
                auto dp = pred_obs.grad();
                for (Index i = 0; i < rows; ++i) {
                    for (Index j = 0; j < cols; ++j) {
                        const double p = pred_obs(i, j);
                        const double term = (j == owned[i]) ? -lambda_pos / p
                                                            : 1.0 / (1.0 - p);
                        dp[i * cols + j] += dout * norm * term;
                    }
                }
            }
            if (pred_pseudo.requires_grad()) {
                auto dz = pred_pseudo.grad();
                for (Index i = 0; i < rows; ++i) {
                    for (Index j = 0; j < cols; ++j) {
                        dz[i * cols + j] += dout * norm / (1.0 - pred_pseudo(i, j));
                    }
                }
            }
        });
    }
    return out;
}

Tensor sample_pseudoabsences(Index n, Rng& rng) {
    if (n < 1) {
        throw ParameterError("pseudoabsence count must be at least 1, got " +
                             std::to_string(n));
    }
    Tensor out(n, 2);
    for (Index i = 0; i < n; ++i) {
        out(i, 0) = rng.uniform(-1.0, 1.0);
        out(i, 1) = rng.uniform(-1.0, 1.0);
    }
    return out;
}

ObservationSet apply_observation_cap(const ObservationSet& data, Index cap, Rng& rng) {
    if (cap < 1) {
        throw ParameterError("observation cap must be at least 1, got " +
                             std::to_string(cap));
    }
    std::vector<std::vector<Index>> by_species(data.vocab.size());
    for (Index i = 0; i < data.size(); ++i) {
        by_species[data.species[i]].push_back(i);
    }

    std::vector<Index> kept;
    kept.reserve(data.size());
    for (auto& rows : by_species) {
        if (static_cast<Index>(rows.size()) > cap) {
            rng.shuffle(rows);
            rows.resize(static_cast<std::size_t>(cap));
        }
        kept.insert(kept.end(), rows.begin(), rows.end());
    }
    // Survivors keep their original interleaving, so cap >= every species
    // count returns the input verbatim.
    std::sort(kept.begin(), kept.end());

    ObservationSet out;
    out.coords = Tensor(static_cast<Index>(kept.size()), 2);
    out.species.reserve(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        out.coords(static_cast<Index>(k), 0) = data.coords(kept[k], 0);
        out.coords(static_cast<Index>(k), 1) = data.coords(kept[k], 1);
        out.species.push_back(data.species[kept[k]]);
    }
    out.vocab = data.vocab;
    out.provenance = data.provenance + ";cap=" + std::to_string(cap);
    return out;
}

AdamState::AdamState(std::span<const NamedParam> params) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const NamedParam& p : params) {
        m.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
        v.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
    }
}

void adam_step(std::span<NamedParam> params, AdamState& state, double lr) {
    if (!(lr > 0.0)) {
        throw ParameterError("learning rate must be positive, got " + std::to_string(lr));
    }
    if (params.size() != state.m.size()) {
        throw DimensionError("optimizer state holds " + std::to_string(state.m.size()) +
                             " blocks but " + std::to_string(params.size()) +
                             " parameters were passed");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& p = params[b].value;
        auto vals = p.values();
        auto grads = p.grad();
        if (vals.size() != state.m[b].size()) {
            throw DimensionError("parameter '" + params[b].name + "' has " +
                                 std::to_string(vals.size()) + " entries but its moment " +
                                 "buffers hold " + std::to_string(state.m[b].size()));
        }
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double grad = grads[i];
            state.m[b][i] = state.beta1 * state.m[b][i] + (1.0 - state.beta1) * grad;
            state.v[b][i] = state.beta2 * state.v[b][i] + (1.0 - state.beta2) * grad * grad;
            const double m_hat = state.m[b][i] / bc1;
            const double v_hat = state.v[b][i] / bc2;
            vals[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

std::string train_config_json(const TrainConfig& config) {
    nlohmann::json j;
    j["epochs"] = config.epochs;
    j["learning_rate"] = config.learning_rate;
    j["lambda_pos"] = config.lambda_pos;
    j["batch_size"] = config.batch_size;
    j["dropout_p"] = config.dropout_p;
    j["seed"] = config.seed;
    j["implicitness"] = config.implicitness;
    j["total_dim"] = config.total_dim;
    j["features_per_level"] = config.features_per_level > 0
                                  ? config.features_per_level
                                  : default_features_per_level(config.implicitness);
    j["grid"] = {{"r_min", config.grid.r_min},
                 {"r_max", config.grid.r_max},
                 {"table_size", config.grid.table_size},
                 {"wrap_lon", config.grid.wrap_lon}};
    if (config.obs_cap) {
        j["obs_cap"] = *config.obs_cap;
    } else {
        j["obs_cap"] = nullptr;
    }
    return j.dump();
}

TrainResult train(const TrainConfig& config, const ObservationSet& data,
                  const MetricsSink& sink) {
    if (config.epochs < 1) {
        throw ParameterError("epochs must be at least 1, got " +
                             std::to_string(config.epochs));
    }
    if (!(config.learning_rate > 0.0)) {
        throw ParameterError("learning rate must be positive, got " +
                             std::to_string(config.learning_rate));
    }
    if (!(config.lambda_pos > 0.0)) {
        throw ParameterError("lambda_pos must be positive, got " +
                             std::to_string(config.lambda_pos));
    }
    if (config.batch_size < 1) {
        throw ParameterError("batch size must be at least 1, got " +
                             std::to_string(config.batch_size));
    }
    if (data.size() == 0) {
        throw ParameterError("training data is empty");
    }

    const Rng master(config.seed);
    ObservationSet working;
    const ObservationSet* active = &data;
    if (config.obs_cap) {
        Rng cap_rng = master.stream("cap");
        working = apply_observation_cap(data, *config.obs_cap, cap_rng);
        active = &working;
    }

    const Index features = config.features_per_level > 0
                               ? config.features_per_level
                               : default_features_per_level(config.implicitness);
    const CapacityPlan plan = plan_capacity(config.implicitness, config.total_dim, features);
    Rng init_rng = master.stream("init");
    HybridModel model(plan, active->vocab.size(), config.grid, config.dropout_p, init_rng);

    std::vector<NamedParam> params = model.parameters();
    AdamState opt(params);
    Rng data_rng = master.stream("data");
    Rng dropout_rng = master.stream("dropout");
    Rng pseudo_rng = master.stream("pseudoabsence");

    const Index total_rows = active->size();
    std::vector<Index> order(static_cast<std::size_t>(total_rows));
    std::iota(order.begin(), order.end(), Index{0});

    std::vector<EpochRecord> records;
    records.reserve(static_cast<std::size_t>(config.epochs));
    for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        data_rng.shuffle(order);

        double loss_sum = 0.0;
        Index batch_index = 0;
        for (Index start = 0; start < total_rows; start += config.batch_size) {
            const Index count = std::min(config.batch_size, total_rows - start);
            Tensor coords(count, 2);
            std::vector<int> species(static_cast<std::size_t>(count));
            for (Index k = 0; k < count; ++k) {
                const Index row = order[static_cast<std::size_t>(start + k)];
                coords(k, 0) = active->coords(row, 0);
                coords(k, 1) = active->coords(row, 1);
                species[static_cast<std::size_t>(k)] = active->species[row];
            }
            Tensor pseudo = sample_pseudoabsences(count, pseudo_rng);

            Graph g;
            Tensor pred_obs = model.forward_probabilities(g, coords, true, &dropout_rng);
            Tensor pred_pseudo = model.forward_probabilities(g, pseudo, true, &dropout_rng);
            Tensor loss = an_full_loss(g, pred_obs, species, pred_pseudo, config.lambda_pos);
            const double value = loss(0, 0);
            if (!std::isfinite(value)) {
                throw TrainingError("loss is not finite at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_index + 1));
            }
            for (NamedParam& p : params) p.value.zero_grad();
            g.backward(loss);
            adam_step(params, opt, config.learning_rate);

            loss_sum += value * static_cast<double>(count);
            ++batch_index;
        }

        const std::chrono::duration<double> elapsed =
            std::chrono::steady_clock::now() - started;
        EpochRecord record{epoch, loss_sum / static_cast<double>(total_rows),
                           elapsed.count()};
        records.push_back(record);
        if (sink) sink(record);
    }

    CheckpointMeta meta;
    meta.vocab = active->vocab.ids();
    meta.seed = config.seed;
    meta.config_echo = train_config_json(config);
    return TrainResult{std::move(model), std::move(meta), std::move(records), total_rows};
}

SweepOutcome sweep(std::span<const TrainConfig> configs, const ObservationSet& data,
                   const SweepEvalSpec& eval, Index jobs) {
    if (configs.empty()) {
        throw ParameterError("sweep needs at least one config");
    }
    if (jobs < 1) {
        throw ParameterError("jobs must be at least 1, got " + std::to_string(jobs));
    }

    // One slot per config, filled independently and merged in config order, so
    // the outcome is byte-identical no matter how many workers ran.
    struct RunSlot {
        std::vector<SweepRow> rows;
        std::string error;
        bool failed = false;
    };
    std::vector<RunSlot> slots(configs.size());
    auto run_one = [&](std::size_t c) {
        const TrainConfig& config = configs[c];
        const Index cap = config.obs_cap ? *config.obs_cap : Index{-1};
        RunSlot& slot = slots[c];
        try {
            TrainResult result = train(config, data);
            EvalReport report = evaluate_map(result.model, eval.rasters, result.meta.vocab);
            slot.rows.push_back({config.implicitness, config.learning_rate, cap,
                                 config.seed, "map", report.map});
            if (eval.per_species_rows) {
                for (std::size_t k = 0; k < report.species_ids.size(); ++k) {
                    slot.rows.push_back({config.implicitness, config.learning_rate, cap,
                                         config.seed, "ap:" + report.species_ids[k],
                                         report.per_species_ap[k]});
                }
            }
        } catch (const std::exception& error) {
            slot.failed = true;
            slot.error = error.what();
        }
    };

    const std::size_t workers =
        std::min(static_cast<std::size_t>(jobs), configs.size());
    if (workers <= 1) {
        for (std::size_t c = 0; c < configs.size(); ++c) run_one(c);
    } else {
        std::atomic<std::size_t> cursor{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (std::size_t c = cursor.fetch_add(1); c < configs.size();
                     c = cursor.fetch_add(1)) {
                    run_one(c);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    SweepOutcome outcome;
    for (std::size_t c = 0; c < slots.size(); ++c) {
        if (slots[c].failed) {
            outcome.failures.push_back({c, slots[c].error});
        } else {
            outcome.rows.insert(outcome.rows.end(), slots[c].rows.begin(),
                                slots[c].rows.end());
        }
    }

    // Group mAP rows by (implicitness, cap), pool seeds per learning rate,
    // and pick each group's best rate by median mAP (first rate wins ties).
    std::map<std::pair<double, Index>, std::map<double, std::vector<double>>> groups;
    for (const SweepRow& row : outcome.rows) {
        if (row.metric != "map") continue;
        groups[{row.implicitness, row.obs_cap}][row.learning_rate].push_back(row.value);
    }
    for (const auto& [key, by_rate] : groups) {
        SweepBest best{key.first, key.second, 0.0, -1.0};
        for (const auto& [rate, values] : by_rate) {
            const double med = median_of(values);
            if (med > best.median_map) {
                best.learning_rate = rate;
                best.median_map = med;
            }
        }
        outcome.best.push_back(best);
    }
    return outcome;
}

std::string sweep_csv(const SweepOutcome& outcome) {
    std::ostringstream out;
    out << "implicitness,learning_rate,obs_cap,seed,metric,value\n";
    for (const SweepRow& row : outcome.rows) {
        out << fmt_double(row.implicitness) << ',' << fmt_double(row.learning_rate) << ',';
        if (row.obs_cap >= 0) out << row.obs_cap;
        out << ',' << row.seed << ',' << row.metric << ',' << fmt_double(row.value) << '\n';
    }
    return out.str();
}

}  // namespace sdm
