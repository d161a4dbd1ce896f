#pragma once

#include <optional>
#include <vector>

#include "sdm/hashgrid_encoder.hpp"
#include "sdm/implicit_encoder.hpp"
#include "sdm/linear.hpp"

namespace sdm {

// How a total embedding budget of `total_dim` features is split between the
// implicit network (implicit_dim outputs) and the explicit grid (levels *
// features_per_level outputs). implicitness = implicit_dim / total_dim.
struct CapacityPlan {
    Index total_dim = 0;
    double implicitness = 0.0;
    Index implicit_dim = 0;
    Index levels = 0;
    Index features_per_level = 0;
};

// Splits the budget. The explicit share must be an exact multiple of
// features_per_level; otherwise this throws a ParameterError that names the
// nearest implicitness value that does divide evenly.
CapacityPlan plan_capacity(double implicitness, Index total_dim,
                           Index features_per_level);

// Grid features per level used when a config does not pin one: 16 for
// explicit-leaning models (implicitness < 0.5), 8 otherwise. At exactly 0.5
// both produce valid plans; we default to 8.
Index default_features_per_level(double implicitness);

// Location encoder with a sigmoid multi-label head: per-species presence
// probabilities from (lat, lon) alone. Either branch of the embedding may be
// absent (implicitness 0 or 1); the predictor always consumes `total_dim`
// features, implicit columns first.
class HybridModel {
  public:
    HybridModel(const CapacityPlan& plan, Index species_count,
                const HashGridConfig& grid, double dropout_p, Rng& init_rng);

    // Concatenated embedding, [n x total_dim].
    Tensor embed(Graph& g, const Tensor& coords, bool training,
                 Rng* dropout_rng) const;

    // sigmoid(embed @ W + b), [n x species_count]; values strictly in (0, 1).
    Tensor forward_probabilities(Graph& g, const Tensor& coords, bool training,
                                 Rng* dropout_rng) const;

    // Inference-mode probabilities with no tape.
    Tensor predict(const Tensor& coords) const;

    const CapacityPlan& plan() const { return plan_; }
    Index species_count() const { return species_count_; }
    const HashGridConfig& grid_config() const { return grid_config_; }
    double dropout_p() const { return dropout_p_; }

    const ImplicitEncoder* implicit_encoder() const {
        return implicit_ ? &*implicit_ : nullptr;
    }
    const HashGridEncoder* explicit_encoder() const {
        return explicit_ ? &*explicit_ : nullptr;
    }
    const LinearLayer& predictor() const { return predictor_; }

    std::vector<NamedParam> parameters() const;
    Index parameter_count() const;

  private:
    CapacityPlan plan_;
    Index species_count_ = 0;
    HashGridConfig grid_config_;
    double dropout_p_ = 0.0;
    std::optional<ImplicitEncoder> implicit_;
    std::optional<HashGridEncoder> explicit_;
    LinearLayer predictor_;
};

}  // namespace sdm
