#include "sdm/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "sdm/errors.hpp"

namespace sdm {
namespace {

// Descending-score order with ties in original position (stable).
std::vector<size_t> ranking(std::span<const double> scores) {
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("average_precision: " + std::to_string(scores.size()) +
                             " scores vs " + std::to_string(labels.size()) +
                             " labels");
    }
    long positives = 0;
    for (std::uint8_t l : labels) positives += (l != 0);
    if (positives == 0) {
        throw MetricError("average_precision undefined: no positive labels");
    }
    std::vector<size_t> order = ranking(scores);
    double sum = 0.0;
    long hits = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(positives);
}

namespace {

// predict() in bounded row blocks so huge grids don't hold the whole
// activation chain alive at once.
Tensor predict_chunked(const HybridModel& model, const Tensor& coords,
                       Index chunk = 8192) {
    Index n = coords.rows();
    if (n <= chunk) return model.predict(coords);
    Tensor out(n, model.species_count());
    for (Index start = 0; start < n; start += chunk) {
        Index count = std::min(chunk, n - start);
        Tensor block(count, 2);
        for (Index i = 0; i < count; ++i) {
            block(i, 0) = coords(start + i, 0);
            block(i, 1) = coords(start + i, 1);
        }
        Tensor probs = model.predict(block);
        for (Index i = 0; i < count; ++i) {
            for (Index s = 0; s < probs.cols(); ++s) {
                out(start + i, s) = probs(i, s);
            }
        }
    }
    return out;
}

bool same_geometry(const RangeRaster& a, const RangeRaster& b) {
    return a.rows == b.rows && a.cols == b.cols && a.lat_lo == b.lat_lo &&
           a.lat_hi == b.lat_hi && a.lon_lo == b.lon_lo && a.lon_hi == b.lon_hi;
}

// Scores the valid cells of every usable raster, one model pass per distinct
// grid geometry. Rasters that cannot be evaluated land in `skipped`.
struct ScoredSet {
    std::vector<size_t> raster_pos;  // original index per scored entry
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<std::uint8_t>> labels;
    std::vector<SkippedSpecies> skipped;
};

ScoredSet score_rasters(const HybridModel& model,
                        const std::vector<RangeRaster>& rasters,
                        const std::vector<std::string>& vocab) {
    if (rasters.empty()) throw ParameterError("no rasters to evaluate");
    if (static_cast<Index>(vocab.size()) != model.species_count()) {
        throw ParameterError("vocab lists " + std::to_string(vocab.size()) +
                             " species, model predicts " +
                             std::to_string(model.species_count()));
    }
    std::unordered_map<std::string, int> column;
    for (size_t i = 0; i < vocab.size(); ++i) {
        column.emplace(vocab[i], static_cast<int>(i));
    }

    // Group raster indices by geometry, first occurrence defining the group.
    std::vector<std::vector<size_t>> groups;
    for (size_t i = 0; i < rasters.size(); ++i) {
        bool placed = false;
        for (std::vector<size_t>& group : groups) {
            if (same_geometry(rasters[group[0]], rasters[i])) {
                group.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) groups.push_back({i});
    }

    ScoredSet out;
    out.raster_pos.reserve(rasters.size());
    std::vector<SkippedSpecies> skipped_unordered;
    for (const std::vector<size_t>& group : groups) {
        const RangeRaster& rep = rasters[group[0]];
        Index cells = rep.rows * rep.cols;
        Tensor coords(cells, 2);
        for (Index r = 0; r < rep.rows; ++r) {
            double lat = rep.cell_center_lat(r);
            for (Index c = 0; c < rep.cols; ++c) {
                coords(r * rep.cols + c, 0) = lat;
                coords(r * rep.cols + c, 1) = rep.cell_center_lon(c);
            }
        }
        Tensor probs = predict_chunked(model, coords);

        for (size_t pos : group) {
            const RangeRaster& raster = rasters[pos];
            auto it = column.find(raster.species_id);
            if (it == column.end()) {
                skipped_unordered.push_back(
                    {raster.species_id, "species not in model vocab"});
                continue;
            }
            std::vector<double> scores;
            std::vector<std::uint8_t> labels;
            scores.reserve(static_cast<size_t>(raster.valid_count()));
            bool any_positive = false;
            for (Index cell = 0; cell < cells; ++cell) {
                if (raster.mask[static_cast<size_t>(cell)] == 0) continue;
                scores.push_back(probs(cell, it->second));
                std::uint8_t label = raster.labels[static_cast<size_t>(cell)] != 0;
                labels.push_back(label);
                any_positive |= (label != 0);
            }
            if (!any_positive) {
                skipped_unordered.push_back(
                    {raster.species_id, "no positive cells, AP undefined"});
                continue;
            }
            out.raster_pos.push_back(pos);
            out.scores.push_back(std::move(scores));
            out.labels.push_back(std::move(labels));
        }
    }
    out.skipped = std::move(skipped_unordered);
    return out;
}

}  // namespace

EvalReport evaluate_map(const HybridModel& model,
                        const std::vector<RangeRaster>& rasters,
                        const std::vector<std::string>& vocab) {
    ScoredSet scored = score_rasters(model, rasters, vocab);
    if (scored.raster_pos.empty()) {
        throw MetricError("evaluate_map: every raster was skipped");
    }

    // Report in input order regardless of the grouping above.
    std::vector<size_t> by_input(scored.raster_pos.size());
    std::iota(by_input.begin(), by_input.end(), size_t{0});
    std::sort(by_input.begin(), by_input.end(), [&](size_t a, size_t b) {
        return scored.raster_pos[a] < scored.raster_pos[b];
    });

    EvalReport report;
    double total = 0.0;
    for (size_t entry : by_input) {
        double ap = average_precision(scored.scores[entry], scored.labels[entry]);
        report.species_ids.push_back(rasters[scored.raster_pos[entry]].species_id);
        report.per_species_ap.push_back(ap);
        total += ap;
    }
    report.map = total / static_cast<double>(report.per_species_ap.size());
    report.skipped = std::move(scored.skipped);
    return report;
}

PrecisionRecallCurve precision_recall_curve(
    const HybridModel& model, const std::vector<RangeRaster>& rasters,
    const std::vector<std::string>& vocab, Index grid_points) {
    if (grid_points < 2) {
        throw ParameterError("precision_recall_curve needs at least 2 grid points");
    }
    ScoredSet scored = score_rasters(model, rasters, vocab);
    if (scored.raster_pos.empty()) {
        throw MetricError("precision_recall_curve: every raster was skipped");
    }

    PrecisionRecallCurve curve;
    curve.recall.resize(static_cast<size_t>(grid_points));
    curve.mean_precision.assign(static_cast<size_t>(grid_points), 0.0);
    for (Index i = 0; i < grid_points; ++i) {
        curve.recall[static_cast<size_t>(i)] =
            static_cast<double>(i) / static_cast<double>(grid_points - 1);
    }

    for (size_t entry = 0; entry < scored.raster_pos.size(); ++entry) {
        const std::vector<double>& scores = scored.scores[entry];
        const std::vector<std::uint8_t>& labels = scored.labels[entry];
        std::vector<size_t> order = ranking(scores);
        long positives = 0;
        for (std::uint8_t l : labels) positives += (l != 0);

        // (recall, precision) at each positive rank, then the monotone
        // envelope from the right so precision is a function of recall.
        std::vector<double> recall_at, precision_at;
        recall_at.reserve(static_cast<size_t>(positives));
        precision_at.reserve(static_cast<size_t>(positives));
        long hits = 0;
        for (size_t k = 0; k < order.size(); ++k) {
            if (labels[order[k]] == 0) continue;
            ++hits;
            recall_at.push_back(static_cast<double>(hits) /
                                static_cast<double>(positives));
            precision_at.push_back(static_cast<double>(hits) /
                                   static_cast<double>(k + 1));
        }
        for (size_t i = precision_at.size() - 1; i-- > 0;) {
            precision_at[i] = std::max(precision_at[i], precision_at[i + 1]);
        }

        // recall_at is increasing and ends at 1, so every grid level finds a
        // covering point.
        size_t at = 0;
        for (size_t g = 0; g < curve.recall.size(); ++g) {
            while (recall_at[at] < curve.recall[g]) ++at;
            curve.mean_precision[g] += precision_at[at];
        }
    }
    double count = static_cast<double>(scored.raster_pos.size());
    for (double& p : curve.mean_precision) p /= count;
    curve.skipped = std::move(scored.skipped);
    return curve;
}

ProbeFit probe_r2(const Tensor& embeddings, std::span<const double> target,
                  Rng& rng, double ridge_scale) {
    Index n = embeddings.rows();
    Index f = embeddings.cols();
    if (static_cast<Index>(target.size()) != n) {
        throw DimensionError("probe_r2: " + std::to_string(n) +
                             " embedding rows vs " + std::to_string(target.size()) +
                             " targets");
    }
    if (n < 4) throw ParameterError("probe_r2 needs at least 4 rows to split");
    if (ridge_scale <= 0.0) throw ParameterError("ridge_scale must be positive");

    std::vector<Index> rows(static_cast<size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    rng.shuffle(rows);
    Index n_train = n / 2;
    Index n_test = n - n_train;

    ProbeFit fit;
    fit.degenerate_fit = n_train <= f + 1;

    Eigen::MatrixXd x_train(n_train, f);
    Eigen::VectorXd y_train(n_train);
    for (Index i = 0; i < n_train; ++i) {
        Index row = rows[static_cast<size_t>(i)];
        for (Index j = 0; j < f; ++j) x_train(i, j) = embeddings(row, j);
        y_train(i) = target[static_cast<size_t>(row)];
    }
    Eigen::RowVectorXd x_mean = x_train.colwise().mean();
    double y_mean = y_train.mean();
    x_train.rowwise() -= x_mean;
    y_train.array() -= y_mean;

    Eigen::MatrixXd gram = x_train.transpose() * x_train;
    double trace = gram.trace();
    double delta = trace > 0.0 ? ridge_scale * trace / static_cast<double>(f)
                               : ridge_scale;
    gram.diagonal().array() += delta;
    Eigen::VectorXd weights = gram.ldlt().solve(x_train.transpose() * y_train);

    double sse = 0.0, sst = 0.0;
    double test_mean = 0.0;
    for (Index i = 0; i < n_test; ++i) {
        test_mean += target[static_cast<size_t>(rows[static_cast<size_t>(n_train + i)])];
    }
    test_mean /= static_cast<double>(n_test);
    for (Index i = 0; i < n_test; ++i) {
        Index row = rows[static_cast<size_t>(n_train + i)];
        double predicted = y_mean;
        for (Index j = 0; j < f; ++j) {
            predicted += (embeddings(row, j) - x_mean(j)) * weights(j);
        }
        double y = target[static_cast<size_t>(row)];
        sse += (y - predicted) * (y - predicted);
        sst += (y - test_mean) * (y - test_mean);
    }
    if (sst <= 0.0) {
        fit.zero_variance_target = true;
        fit.r2 = 0.0;
        return fit;
    }
    fit.r2 = std::clamp(1.0 - sse / sst, -1.0, 1.0);
    return fit;
}

void export_embedding_grid(const HybridModel& model, Index rows, Index cols,
                           const std::string& path) {
    if (rows < 1 || cols < 1) {
        throw ParameterError("embedding grid dims must be >= 1");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open embedding grid for writing: " + path);
    Index features = model.plan().total_dim;
    out << "SDMGRID 1\n"
        << "dims " << rows << " " << cols << "\n"
        << "features " << features << "\n"
        << "data\n";

    // Chunk over grid rows so large exports stay within a bounded footprint.
    Index rows_per_chunk = std::max<Index>(1, 8192 / cols);
    for (Index r0 = 0; r0 < rows; r0 += rows_per_chunk) {
        Index r_count = std::min(rows_per_chunk, rows - r0);
        Tensor coords(r_count * cols, 2);
        for (Index r = 0; r < r_count; ++r) {
            double lat = -1.0 + (static_cast<double>(r0 + r) + 0.5) * 2.0 /
                                    static_cast<double>(rows);
            for (Index c = 0; c < cols; ++c) {
                coords(r * cols + c, 0) = lat;
                coords(r * cols + c, 1) = -1.0 + (static_cast<double>(c) + 0.5) *
                                                     2.0 / static_cast<double>(cols);
            }
        }
        Graph g(false);
        Tensor embedded = model.embed(g, coords, false, nullptr);
        std::vector<char> bytes(static_cast<size_t>(embedded.rows()) *
                                static_cast<size_t>(features) * 4);
        size_t at = 0;
        for (Index i = 0; i < embedded.rows(); ++i) {
            for (Index j = 0; j < features; ++j) {
                float v = static_cast<float>(embedded(i, j));
                std::memcpy(bytes.data() + at, &v, 4);
                at += 4;
            }
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw IoError("write failed for embedding grid: " + path);
}

EmbeddingGrid load_embedding_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding grid: " + path);
    auto fail = [&](const std::string& what) -> IoError {
        return IoError(path + ": " + what);
    };
    std::string line;
    if (!std::getline(in, line) || line != "SDMGRID 1") {
        throw fail("expected magic line 'SDMGRID 1'");
    }
    EmbeddingGrid grid;
    if (!std::getline(in, line)) throw fail("missing dims line");
    {
        std::istringstream dims(line);
        std::string tag;
        if (!(dims >> tag >> grid.rows >> grid.cols) || tag != "dims" ||
            grid.rows < 1 || grid.cols < 1) {
            throw fail("expected 'dims <rows> <cols>'");
        }
    }
    if (!std::getline(in, line)) throw fail("missing features line");
    {
        std::istringstream feats(line);
        std::string tag;
        if (!(feats >> tag >> grid.features) || tag != "features" ||
            grid.features < 1) {
            throw fail("expected 'features <count>'");
        }
    }
    if (!std::getline(in, line) || line != "data") throw fail("missing data marker");

    size_t count = static_cast<size_t>(grid.rows) * static_cast<size_t>(grid.cols) *
                   static_cast<size_t>(grid.features);
    std::vector<char> bytes(count * 4);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size()) {
        throw fail("payload shorter than dims * features");
    }
    in.get();
    if (!in.eof()) throw fail("trailing bytes after payload");
    grid.values.resize(count);
    std::memcpy(grid.values.data(), bytes.data(), bytes.size());
    return grid;
}

}  // namespace sdm
