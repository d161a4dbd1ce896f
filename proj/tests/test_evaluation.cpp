#include "sdm/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdm/errors.hpp"
#include "test_util.hpp"

using namespace sdm;
using testutil::brute_force_average_precision;
using testutil::random_tensor;

namespace {

std::string scratch_path(const std::string& name) {
    static int counter = 0;
    namespace fs = std::filesystem;
    fs::path dir = fs::path(::testing::TempDir()) / "sdm_eval_test";
    fs::create_directories(dir);
    return (dir / (std::to_string(counter++) + "_" + name)).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in) << path;
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

// Pure-explicit model with a single dense level whose feature 0 holds a
// hand-set field over the (grid_res+1)^2 vertex lattice; species s scores
// sigmoid(weight[s] * bilinear(field)). Lets tests dictate the score surface.
HybridModel field_model(Index grid_res, const std::vector<double>& vertex_field,
                        const std::vector<double>& weights) {
    CapacityPlan plan = plan_capacity(0.0, 8, 8);
    HashGridConfig grid;
    grid.r_min = static_cast<double>(grid_res);
    grid.r_max = static_cast<double>(grid_res);
    Rng rng(123);
    HybridModel model(plan, static_cast<Index>(weights.size()), grid, 0.0, rng);

    Tensor table = model.explicit_encoder()->features(0);
    EXPECT_EQ(table.rows(), (grid_res + 1) * (grid_res + 1));
    for (Index row = 0; row < table.rows(); ++row) {
        table(row, 0) = vertex_field[static_cast<size_t>(row)];
        for (Index f = 1; f < table.cols(); ++f) table(row, f) = 0.0;
    }
    for (NamedParam& p : model.parameters()) {
        if (p.name == "predictor.weight") {
            for (size_t s = 0; s < weights.size(); ++s) {
                p.value(0, static_cast<Index>(s)) = weights[s];
            }
        }
    }
    return model;
}

// Signed indicator field of `lon >= threshold` on a grid_res=10 lattice.
std::vector<double> east_field(double threshold, double magnitude = 8.0) {
    std::vector<double> field(11 * 11);
    for (Index i = 0; i <= 10; ++i) {
        for (Index j = 0; j <= 10; ++j) {
            double lon = -1.0 + 0.2 * static_cast<double>(j);
            field[static_cast<size_t>(i * 11 + j)] =
                lon >= threshold ? magnitude : -magnitude;
        }
    }
    return field;
}

RangeRaster region_raster(const std::string& id, Index rows, Index cols,
                          const std::function<bool(double, double)>& inside) {
    RangeRaster raster;
    raster.species_id = id;
    raster.rows = rows;
    raster.cols = cols;
    raster.labels.resize(static_cast<size_t>(rows * cols));
    raster.mask.assign(static_cast<size_t>(rows * cols), 1);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            raster.labels[static_cast<size_t>(r * cols + c)] =
                inside(raster.cell_center_lat(r), raster.cell_center_lon(c));
        }
    }
    return raster;
}

}  // namespace

TEST(AveragePrecision, PerfectRankingScoresOne) {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
    std::vector<std::uint8_t> labels{1, 1, 1, 0, 0};
    EXPECT_DOUBLE_EQ(average_precision(scores, labels), 1.0);
}

TEST(AveragePrecision, WorkedExample) {
    std::vector<double> scores{0.9, 0.8, 0.7};
    std::vector<std::uint8_t> labels{1, 0, 1};
    // Positives at ranks 1 and 3: (1/1 + 2/3) / 2.
    EXPECT_NEAR(average_precision(scores, labels), 5.0 / 6.0, 1e-15);
}

TEST(AveragePrecision, TiesKeepOriginalOrder) {
    std::vector<double> tied{0.5, 0.5};
    std::vector<std::uint8_t> first_positive{1, 0};
    std::vector<std::uint8_t> second_positive{0, 1};
    EXPECT_DOUBLE_EQ(average_precision(tied, first_positive), 1.0);
    EXPECT_DOUBLE_EQ(average_precision(tied, second_positive), 0.5);
}

TEST(AveragePrecision, MatchesBruteForceOracleOnRandomInstances) {
    Rng rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        size_t n = 1 + rng.below(200);
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        // Every third trial quantizes scores so ties actually occur.
        bool quantize = trial % 3 == 0;
        bool any_positive = false;
        for (size_t i = 0; i < n; ++i) {
            double s = rng.uniform();
            scores[i] = quantize ? std::floor(s * 8.0) / 8.0 : s;
            labels[i] = rng.uniform() < 0.3;
            any_positive |= labels[i] != 0;
        }
        if (!any_positive) labels[rng.below(n)] = 1;
        double got = average_precision(scores, labels);
        double want = brute_force_average_precision(scores, labels);
        EXPECT_NEAR(got, want, 1e-12) << "trial " << trial << " n=" << n;
    }
}

TEST(AveragePrecision, RejectsDegenerateInputs) {
    std::vector<double> scores{0.1, 0.2};
    std::vector<std::uint8_t> all_negative{0, 0};
    std::vector<std::uint8_t> too_short{1};
    EXPECT_THROW(average_precision(scores, all_negative), MetricError);
    EXPECT_THROW(average_precision(scores, too_short), DimensionError);
    std::vector<double> no_scores;
    std::vector<std::uint8_t> no_labels;
    EXPECT_THROW(average_precision(no_scores, no_labels), MetricError);
}

TEST(EvaluateMap, NearOracleModelScoresNearlyPerfectly) {
    // Field = signed indicator of lon >= 0.1 with a little noise; both the
    // east species and its complement should be ranked almost perfectly.
    std::vector<double> field = east_field(0.1);
    Rng noise(7);
    for (double& v : field) v += noise.uniform(-1e-6, 1e-6);
    HybridModel model = field_model(10, field, {4.0, -4.0});

    std::vector<RangeRaster> rasters;
    rasters.push_back(region_raster(
        "east", 10, 10, [](double, double lon) { return lon >= 0.1; }));
    rasters.push_back(region_raster(
        "west", 10, 10, [](double, double lon) { return lon < 0.1; }));

    EvalReport report = evaluate_map(model, rasters, {"east", "west"});
    ASSERT_EQ(report.per_species_ap.size(), 2u);
    EXPECT_GT(report.per_species_ap[0], 0.99);
    EXPECT_GT(report.per_species_ap[1], 0.99);
    EXPECT_GT(report.map, 0.99);
    EXPECT_TRUE(report.skipped.empty());
}

TEST(EvaluateMap, ConstantPredictorEqualsBruteForceOnLabelOrder) {
    // Fresh model: zero predictor, so every cell scores exactly 0.5 and the
    // ranking degenerates to original cell order.
    CapacityPlan plan = plan_capacity(0.5, 16, 8);
    HashGridConfig grid;
    grid.r_min = 2;
    grid.r_max = 9;
    grid.table_size = 64;
    Rng rng(3);
    HybridModel model(plan, 1, grid, 0.0, rng);

    RangeRaster raster = region_raster("sp", 6, 6, [](double lat, double lon) {
        return lat * lon > 0.0;
    });
    EvalReport report = evaluate_map(model, {raster}, {"sp"});

    std::vector<double> constant(static_cast<size_t>(raster.valid_count()), 0.5);
    std::vector<std::uint8_t> labels(raster.labels.begin(), raster.labels.end());
    double expected = brute_force_average_precision(constant, labels);
    ASSERT_EQ(report.per_species_ap.size(), 1u);
    EXPECT_DOUBLE_EQ(report.per_species_ap[0], expected);
}

TEST(EvaluateMap, SkipsUnknownSpeciesAndAllNegativeRasters) {
    HybridModel model = field_model(10, east_field(0.1), {4.0});
    std::vector<RangeRaster> rasters;
    rasters.push_back(region_raster(
        "east", 10, 10, [](double, double lon) { return lon >= 0.1; }));
    rasters.push_back(region_raster(
        "stranger", 10, 10, [](double, double lon) { return lon < 0.0; }));
    rasters.push_back(region_raster("east", 4, 4, [](double, double) {
        return false;  // no positives anywhere
    }));

    EvalReport report = evaluate_map(model, rasters, {"east"});
    ASSERT_EQ(report.per_species_ap.size(), 1u);
    ASSERT_EQ(report.skipped.size(), 2u);
    EXPECT_EQ(report.skipped[0].species_id, "stranger");
    EXPECT_NE(report.skipped[0].reason.find("vocab"), std::string::npos);
    EXPECT_EQ(report.skipped[1].species_id, "east");
    EXPECT_NE(report.skipped[1].reason.find("positive"), std::string::npos);

    // Nothing evaluable at all.
    EXPECT_THROW(evaluate_map(model, {rasters[1]}, {"east"}), MetricError);
    EXPECT_THROW(evaluate_map(model, {}, {"east"}), ParameterError);
    EXPECT_THROW(evaluate_map(model, rasters, {"east", "extra"}), ParameterError);
}

TEST(EvaluateMap, MixedGeometriesReportInInputOrder) {
    HybridModel model = field_model(10, east_field(0.1), {4.0, -4.0, 1.0});
    std::vector<std::string> vocab{"east", "west", "third"};
    std::vector<RangeRaster> rasters;
    rasters.push_back(region_raster(
        "east", 10, 10, [](double, double lon) { return lon >= 0.1; }));
    rasters.push_back(region_raster(
        "west", 5, 7, [](double, double lon) { return lon < 0.1; }));
    rasters.push_back(region_raster(
        "third", 10, 10, [](double lat, double) { return lat > 0.0; }));

    EvalReport grouped = evaluate_map(model, rasters, vocab);
    ASSERT_EQ(grouped.species_ids.size(), 3u);
    EXPECT_EQ(grouped.species_ids[0], "east");
    EXPECT_EQ(grouped.species_ids[1], "west");
    EXPECT_EQ(grouped.species_ids[2], "third");

    // Grouping by geometry must not change any AP: evaluate one by one.
    for (size_t i = 0; i < rasters.size(); ++i) {
        EvalReport single = evaluate_map(model, {rasters[i]}, vocab);
        EXPECT_DOUBLE_EQ(single.per_species_ap[0], grouped.per_species_ap[i]) << i;
    }
}

TEST(PrecisionRecall, PerfectRankerIsFlatAtOne) {
    std::vector<double> field = east_field(0.1);
    HybridModel model = field_model(10, field, {4.0});
    std::vector<RangeRaster> rasters{region_raster(
        "east", 10, 10, [](double, double lon) { return lon >= 0.1; })};
    PrecisionRecallCurve curve = precision_recall_curve(model, rasters, {"east"});
    ASSERT_EQ(curve.recall.size(), 101u);
    EXPECT_DOUBLE_EQ(curve.recall.front(), 0.0);
    EXPECT_DOUBLE_EQ(curve.recall.back(), 1.0);
    for (double p : curve.mean_precision) EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(PrecisionRecall, WorkedThreeCellExample) {
    // 1x3 raster; a field linear in lon gives strictly decreasing scores, so
    // the cells play out as scores [high, mid, low] with labels [1, 0, 1].
    std::vector<double> field{8.0, -8.0, 8.0, -8.0};  // grid_res=1: 2x2 lattice
    HybridModel model = field_model(1, field, {1.0});
    RangeRaster raster;
    raster.species_id = "sp";
    raster.rows = 1;
    raster.cols = 3;
    raster.labels = {1, 0, 1};
    raster.mask = {1, 1, 1};

    PrecisionRecallCurve curve = precision_recall_curve(model, {raster}, {"sp"});
    // Positives at ranks 1 and 3: envelope precision 1 up to recall 0.5,
    // then 2/3 up to recall 1.
    EXPECT_NEAR(curve.mean_precision.front(), 1.0, 1e-12);
    EXPECT_NEAR(curve.mean_precision[50], 1.0, 1e-12);   // recall 0.5
    EXPECT_NEAR(curve.mean_precision[51], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(curve.mean_precision.back(), 2.0 / 3.0, 1e-12);

    // The same instance through AP for cross-checking: (1 + 2/3) / 2.
    EvalReport report = evaluate_map(model, {raster}, {"sp"});
    EXPECT_NEAR(report.per_species_ap[0], 5.0 / 6.0, 1e-12);
}

TEST(PrecisionRecall, MeanOfIdenticalCurvesIsTheCurve) {
    HybridModel model = field_model(10, east_field(0.1), {4.0, 4.0});
    auto inside = [](double, double lon) { return lon >= 0.1; };
    std::vector<RangeRaster> one{region_raster("a", 10, 10, inside)};
    std::vector<RangeRaster> two{region_raster("a", 10, 10, inside),
                                 region_raster("b", 10, 10, inside)};
    PrecisionRecallCurve single = precision_recall_curve(model, one, {"a", "b"});
    PrecisionRecallCurve pair = precision_recall_curve(model, two, {"a", "b"});
    ASSERT_EQ(single.mean_precision.size(), pair.mean_precision.size());
    for (size_t g = 0; g < pair.mean_precision.size(); ++g) {
        EXPECT_DOUBLE_EQ(pair.mean_precision[g], single.mean_precision[g]);
    }
}

TEST(PrecisionRecall, EnvelopeIsNonIncreasingOnNoisyScores) {
    std::vector<double> field = east_field(0.1, 2.0);
    Rng noise(11);
    for (double& v : field) v += noise.uniform(-1.5, 1.5);
    HybridModel model = field_model(10, field, {1.5});
    std::vector<RangeRaster> rasters{region_raster(
        "east", 10, 10, [](double, double lon) { return lon >= 0.1; })};
    PrecisionRecallCurve curve = precision_recall_curve(model, rasters, {"east"});
    for (size_t g = 1; g < curve.mean_precision.size(); ++g) {
        EXPECT_LE(curve.mean_precision[g], curve.mean_precision[g - 1] + 1e-15);
    }
    EXPECT_THROW(precision_recall_curve(model, rasters, {"east"}, 1),
                 ParameterError);
}

TEST(ProbeR2, RecoversRealizableLinearTarget) {
    Rng rng(5);
    Tensor embeddings = random_tensor(400, 10, rng);
    std::vector<double> target(400);
    for (Index i = 0; i < 400; ++i) {
        double y = 0.7;  // intercept
        for (Index j = 0; j < 10; ++j) {
            y += (0.3 * static_cast<double>(j) - 1.0) * embeddings(i, j);
        }
        target[static_cast<size_t>(i)] = y;
    }
    Rng split(99);
    ProbeFit fit = probe_r2(embeddings, target, split);
    EXPECT_GE(fit.r2, 0.999);
    EXPECT_FALSE(fit.degenerate_fit);
    EXPECT_FALSE(fit.zero_variance_target);
}

TEST(ProbeR2, PureNoiseTargetStaysNearZero) {
    Rng rng(6);
    Tensor embeddings = random_tensor(400, 10, rng);
    std::vector<double> target(400);
    for (double& y : target) y = rng.uniform(-1.0, 1.0);
    Rng split(100);
    ProbeFit fit = probe_r2(embeddings, target, split);
    EXPECT_LE(fit.r2, 0.05);
    EXPECT_GE(fit.r2, -1.0);
}

TEST(ProbeR2, NoiseColumnsDoNotInflateHeldOutFit) {
    Rng rng(7);
    Tensor base = random_tensor(400, 8, rng);
    std::vector<double> target(400);
    for (Index i = 0; i < 400; ++i) {
        double y = 0.0;
        for (Index j = 0; j < 8; ++j) {
            y += (0.5 + 0.25 * static_cast<double>(j)) * base(i, j);
        }
        target[static_cast<size_t>(i)] = y;
    }
    Tensor augmented(400, 32);
    for (Index i = 0; i < 400; ++i) {
        for (Index j = 0; j < 8; ++j) augmented(i, j) = base(i, j);
        for (Index j = 8; j < 32; ++j) augmented(i, j) = rng.uniform(-1.0, 1.0);
    }
    Rng split_a(55), split_b(55);
    ProbeFit plain = probe_r2(base, target, split_a);
    ProbeFit padded = probe_r2(augmented, target, split_b);
    EXPECT_LE(padded.r2, plain.r2 + 0.02);
    EXPECT_GE(plain.r2, 0.99);
}

TEST(ProbeR2, FlagsDegenerateAndZeroVarianceInputs) {
    Rng rng(8);
    Tensor wide = random_tensor(20, 30, rng);
    std::vector<double> target(20);
    for (double& y : target) y = rng.uniform(-1.0, 1.0);
    Rng split(1);
    ProbeFit fit = probe_r2(wide, target, split);
    EXPECT_TRUE(fit.degenerate_fit);

    Tensor emb = random_tensor(50, 4, rng);
    std::vector<double> constant(50, 3.25);
    Rng split2(2);
    ProbeFit flat = probe_r2(emb, constant, split2);
    EXPECT_TRUE(flat.zero_variance_target);
    EXPECT_DOUBLE_EQ(flat.r2, 0.0);

    std::vector<double> mismatched(49, 0.0);
    EXPECT_THROW(probe_r2(emb, mismatched, split2), DimensionError);
    Tensor tiny = random_tensor(3, 2, rng);
    std::vector<double> three(3, 0.0);
    EXPECT_THROW(probe_r2(tiny, three, split2), ParameterError);
}

TEST(ProbeR2, SeededSplitIsDeterministic) {
    Rng rng(9);
    Tensor embeddings = random_tensor(100, 6, rng);
    std::vector<double> target(100);
    for (Index i = 0; i < 100; ++i) {
        target[static_cast<size_t>(i)] = embeddings(i, 0) + 0.1 * embeddings(i, 3);
    }
    Rng split_a(77), split_b(77), split_c(78);
    double a = probe_r2(embeddings, target, split_a).r2;
    double b = probe_r2(embeddings, target, split_b).r2;
    double c = probe_r2(embeddings, target, split_c).r2;
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);  // different split, different held-out rows
}

TEST(EmbeddingGrid, ExportMatchesDirectEmbedCalls) {
    CapacityPlan plan = plan_capacity(0.5, 16, 8);
    HashGridConfig gridcfg;
    gridcfg.r_min = 2;
    gridcfg.r_max = 9;
    gridcfg.table_size = 64;
    Rng rng(21);
    HybridModel model(plan, 2, gridcfg, 0.0, rng);

    std::string path = scratch_path("embed.grid");
    export_embedding_grid(model, 2, 2, path);
    EmbeddingGrid grid = load_embedding_grid(path);
    EXPECT_EQ(grid.rows, 2);
    EXPECT_EQ(grid.cols, 2);
    EXPECT_EQ(grid.features, 16);
    ASSERT_EQ(grid.values.size(), 2u * 2u * 16u);

    Tensor coords(4, 2);
    for (Index r = 0; r < 2; ++r) {
        for (Index c = 0; c < 2; ++c) {
            coords(r * 2 + c, 0) = -1.0 + (r + 0.5);
            coords(r * 2 + c, 1) = -1.0 + (c + 0.5);
        }
    }
    Graph g(false);
    Tensor embedded = model.embed(g, coords, false, nullptr);
    for (Index i = 0; i < 4; ++i) {
        for (Index j = 0; j < 16; ++j) {
            EXPECT_EQ(grid.values[static_cast<size_t>(i * 16 + j)],
                      static_cast<float>(embedded(i, j)));
        }
    }

    // Re-export reproduces the file byte for byte.
    std::string again = scratch_path("embed2.grid");
    export_embedding_grid(model, 2, 2, again);
    EXPECT_EQ(read_file(path), read_file(again));
}

TEST(EmbeddingGrid, PureExplicitWidthAndSingleCellCenter) {
    CapacityPlan plan = plan_capacity(0.0, 16, 8);  // L*M = 16
    HashGridConfig gridcfg;
    gridcfg.r_min = 2;
    gridcfg.r_max = 9;
    gridcfg.table_size = 64;
    Rng rng(22);
    HybridModel model(plan, 1, gridcfg, 0.0, rng);

    std::string path = scratch_path("explicit.grid");
    export_embedding_grid(model, 1, 1, path);
    EmbeddingGrid grid = load_embedding_grid(path);
    EXPECT_EQ(grid.features, 16);
    ASSERT_EQ(grid.values.size(), 16u);

    // Single cell's center is the domain center.
    Tensor center(1, 2);
    center(0, 0) = 0.0;
    center(0, 1) = 0.0;
    Graph g(false);
    Tensor embedded = model.embed(g, center, false, nullptr);
    for (Index j = 0; j < 16; ++j) {
        EXPECT_EQ(grid.values[static_cast<size_t>(j)],
                  static_cast<float>(embedded(0, j)));
    }

    EXPECT_THROW(export_embedding_grid(model, 0, 4, scratch_path("bad.grid")),
                 ParameterError);
}

TEST(EmbeddingGrid, MalformedFilesAreRejected) {
    std::string truncated = scratch_path("trunc.grid");
    {
        std::ofstream out(truncated, std::ios::binary);
        out << "SDMGRID 1\ndims 2 2\nfeatures 4\ndata\nshort";
    }
    EXPECT_THROW(load_embedding_grid(truncated), IoError);

    std::string junk = scratch_path("junk.grid");
    {
        std::ofstream out(junk, std::ios::binary);
        out << "GRID?\n";
    }
    EXPECT_THROW(load_embedding_grid(junk), IoError);
    EXPECT_THROW(load_embedding_grid(scratch_path("missing.grid")), IoError);
}
