#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdm/data.hpp"
#include "sdm/hybrid_model.hpp"

namespace sdm {

// Mean of precision-at-k over the ranks k of the positive items, with items
// sorted by descending score and ties kept in original order. Lengths must
// match; at least one positive label is required (MetricError otherwise).
double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels);

// A raster that evaluation had to leave out, and why (species missing from
// the model vocab, or no positive cells so AP is undefined).
struct SkippedSpecies {
    std::string species_id;
    std::string reason;
};

struct EvalReport {
    std::vector<std::string> species_ids;  // evaluated rasters, input order
    std::vector<double> per_species_ap;    // aligned with species_ids
    double map = 0.0;                      // mean of per_species_ap
    std::vector<SkippedSpecies> skipped;
};

// Scores every valid cell of every raster with predict() at the cell centers
// and reports per-species AP plus their mean. Rasters sharing a geometry are
// scored with a single model pass. `vocab` maps species ids to the model's
// output columns; rasters whose species is absent are skipped, not fatal.
EvalReport evaluate_map(const HybridModel& model,
                        const std::vector<RangeRaster>& rasters,
                        const std::vector<std::string>& vocab);

struct PrecisionRecallCurve {
    std::vector<double> recall;          // fixed grid, 0 to 1 inclusive
    std::vector<double> mean_precision;  // across evaluated species
    std::vector<SkippedSpecies> skipped;
};

// Per species, precision is interpolated onto the fixed recall grid with the
// monotone envelope max{precision at recall >= r}, then averaged across
// species. The envelope makes each species' curve non-increasing in recall,
// which the mean inherits.
PrecisionRecallCurve precision_recall_curve(
    const HybridModel& model, const std::vector<RangeRaster>& rasters,
    const std::vector<std::string>& vocab, Index grid_points = 101);

struct ProbeFit {
    double r2 = 0.0;
    // Too few training rows for the feature count; the fit is reported anyway.
    bool degenerate_fit = false;
    // Held-out target had no variance; r2 is defined as 0.
    bool zero_variance_target = false;
};

// How well a linear readout recovers `target` from the embedding columns:
// ridge regression (damping = ridge_scale * trace(X^T X)/F) with intercept,
// fit on a seeded half of the rows and scored as R^2 on the other half,
// clamped to [-1, 1].
ProbeFit probe_r2(const Tensor& embeddings, std::span<const double> target,
                  Rng& rng, double ridge_scale = 1e-6);

struct EmbeddingGrid {
    Index rows = 0;
    Index cols = 0;
    Index features = 0;
    std::vector<float> values;  // (row * cols + col) * features + f
};

// Evaluates embed() at the cell centers of a rows x cols grid over [-1,1]^2
// and writes a small binary file: text header (dims, feature count), then
// row-major little-endian 32-bit floats. Row 0 is the lowest latitude.
void export_embedding_grid(const HybridModel& model, Index rows, Index cols,
                           const std::string& path);
EmbeddingGrid load_embedding_grid(const std::string& path);

}  // namespace sdm
