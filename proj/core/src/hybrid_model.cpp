#include "sdm/hybrid_model.hpp"

#include <cmath>

#include "sdm/errors.hpp"

namespace sdm {

CapacityPlan plan_capacity(double implicitness, Index total_dim,
                           Index features_per_level) {
    if (total_dim <= 0) {
        throw ParameterError("total embedding dim must be positive, got " +
                             std::to_string(total_dim));
    }
    if (features_per_level <= 0) {
        throw ParameterError("features per level must be positive, got " +
                             std::to_string(features_per_level));
    }
    if (implicitness < 0.0 || implicitness > 1.0) {
        throw ParameterError("implicitness must lie in [0, 1], got " +
                             std::to_string(implicitness));
    }
    CapacityPlan plan;
    plan.total_dim = total_dim;
    plan.implicitness = implicitness;
    plan.features_per_level = features_per_level;
    plan.implicit_dim =
        static_cast<Index>(std::llround(implicitness * static_cast<double>(total_dim)));
    const Index explicit_dim = total_dim - plan.implicit_dim;
    if (explicit_dim % features_per_level != 0) {
        // Suggest the closest implicit_dim whose remainder divides evenly.
        Index best = -1;
        for (Index k = 0; k * features_per_level <= total_dim; ++k) {
            const Index candidate = total_dim - k * features_per_level;
            if (best < 0 || std::llabs(candidate - plan.implicit_dim) <
                                std::llabs(best - plan.implicit_dim)) {
                best = candidate;
            }
        }
        const double suggestion =
            static_cast<double>(best) / static_cast<double>(total_dim);
        throw ParameterError(
            "explicit budget " + std::to_string(explicit_dim) +
            " is not a multiple of " + std::to_string(features_per_level) +
            " grid features per level; nearest valid implicitness is " +
            std::to_string(suggestion));
    }
    plan.levels = explicit_dim / features_per_level;
    return plan;
}

Index default_features_per_level(double implicitness) {
    return implicitness < 0.5 ? 16 : 8;
}

HybridModel::HybridModel(const CapacityPlan& plan, Index species_count,
                         const HashGridConfig& grid, double dropout_p, Rng& init_rng)
    : plan_(plan), species_count_(species_count), grid_config_(grid),
      dropout_p_(dropout_p) {
    if (species_count <= 0) {
        throw ParameterError("species count must be positive, got " +
                             std::to_string(species_count));
    }
    if (plan.implicit_dim + plan.levels * plan.features_per_level != plan.total_dim) {
        throw ParameterError("capacity plan does not add up to its total dim");
    }
    // Branch init order is fixed (implicit, then explicit) so one seed pins
    // every parameter regardless of which branches exist.
    if (plan.implicit_dim > 0) {
        implicit_.emplace(plan.implicit_dim, dropout_p, init_rng);
    }
    if (plan.levels > 0) {
        explicit_.emplace(grid, plan.levels, plan.features_per_level, init_rng);
    }
    predictor_ = LinearLayer::zeros(plan.total_dim, species_count);
}

Tensor HybridModel::embed(Graph& g, const Tensor& coords, bool training,
                          Rng* dropout_rng) const {
    if (implicit_ && explicit_) {
        Tensor gi = implicit_->forward(g, coords, training, dropout_rng);
        Tensor ge = explicit_->encode(g, coords);
        return concat_cols(g, gi, ge);
    }
    if (implicit_) {
        return implicit_->forward(g, coords, training, dropout_rng);
    }
    return explicit_->encode(g, coords);
}

Tensor HybridModel::forward_probabilities(Graph& g, const Tensor& coords,
                                          bool training, Rng* dropout_rng) const {
    return sigmoid(g, predictor_.apply(g, embed(g, coords, training, dropout_rng)));
}

Tensor HybridModel::predict(const Tensor& coords) const {
    Graph g(false);
    return forward_probabilities(g, coords, false, nullptr);
}

std::vector<NamedParam> HybridModel::parameters() const {
    std::vector<NamedParam> out;
    if (implicit_) implicit_->collect_parameters("implicit", out);
    if (explicit_) explicit_->collect_parameters("explicit", out);
    out.push_back({"predictor.weight", predictor_.weight});
    out.push_back({"predictor.bias", predictor_.bias});
    return out;
}

Index HybridModel::parameter_count() const {
    Index n = predictor_.parameter_count();
    if (implicit_) n += implicit_->parameter_count();
    if (explicit_) n += explicit_->parameter_count();
    return n;
}

}  // namespace sdm
