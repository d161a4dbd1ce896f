#include "sdm/hashgrid_encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"

using namespace sdm;
using testutil::fd_gradcheck;
using testutil::grid_oracle_point;
using testutil::GridOracleConfig;
using testutil::random_tensor;

namespace {

HashGridEncoder make_encoder(double r_min, double r_max, Index levels, Index m,
                             Index table_size, std::uint64_t seed = 1,
                             bool wrap_lon = false) {
    HashGridConfig cfg;
    cfg.r_min = r_min;
    cfg.r_max = r_max;
    cfg.table_size = table_size;
    cfg.wrap_lon = wrap_lon;
    Rng rng(seed);
    return HashGridEncoder(cfg, levels, m, rng);
}

// Overwrites the tiny init with O(1) values so comparisons have signal.
void randomize_tables(HashGridEncoder& enc, std::uint64_t seed) {
    Rng rng(seed);
    for (Index l = 0; l < enc.level_count(); ++l) {
        Tensor t = enc.features(l);
        for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    }
}

std::vector<std::vector<double>> raw_tables(const HashGridEncoder& enc) {
    std::vector<std::vector<double>> out;
    for (Index l = 0; l < enc.level_count(); ++l) {
        auto v = enc.features(l).values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

}  // namespace

TEST(ResolutionSchedule, EndpointsAreExact) {
    auto sched = resolution_schedule(16.0, 512.0, 8);
    ASSERT_EQ(sched.size(), 8u);
    EXPECT_EQ(sched.front(), 16.0);  // bitwise, not just near
    EXPECT_EQ(sched.back(), 512.0);
}

TEST(ResolutionSchedule, InteriorMatchesClosedForm) {
    auto sched = resolution_schedule(16.0, 512.0, 8);
    EXPECT_NEAR(sched[1], 16.0 * std::pow(32.0, 1.0 / 7.0), 1e-9);
    for (std::size_t l = 1; l < sched.size(); ++l) {
        const double t = static_cast<double>(l) / 7.0;
        EXPECT_NEAR(sched[l], 16.0 * std::pow(32.0, t), 1e-9 * sched[l]);
    }
}

TEST(ResolutionSchedule, GeometricSpacing) {
    auto sched = resolution_schedule(3.0, 777.0, 9);
    const double ratio = sched[1] / sched[0];
    for (std::size_t l = 1; l + 1 < sched.size(); ++l) {
        EXPECT_NEAR(sched[l + 1] / sched[l], ratio, 1e-12 * ratio);
    }
    for (std::size_t l = 0; l + 1 < sched.size(); ++l) {
        EXPECT_LT(sched[l], sched[l + 1]);
    }
}

TEST(ResolutionSchedule, DegenerateAndInvalidInputs) {
    auto single = resolution_schedule(7.5, 100.0, 1);
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0], 7.5);
    EXPECT_THROW(resolution_schedule(16.0, 512.0, 0), ParameterError);
    EXPECT_THROW(resolution_schedule(0.5, 512.0, 4), ParameterError);
    EXPECT_THROW(resolution_schedule(64.0, 16.0, 4), ParameterError);
}

TEST(HashGrid, DenseHashSplitFollowsLatticeSize) {
    // (16, 512, 8) with T=2^14: lattices up to 116^2 fit, the rest hash.
    HashGridEncoder enc = make_encoder(16, 512, 8, 2, 16384);
    const auto& levels = enc.levels();
    ASSERT_EQ(levels.size(), 8u);
    const Index expected_grid[] = {16, 26, 43, 70, 115, 190, 312, 512};
    const bool expected_dense[] = {true, true, true, true, true, false, false, false};
    for (std::size_t l = 0; l < 8; ++l) {
        EXPECT_EQ(levels[l].grid_res, expected_grid[l]) << "level " << l;
        EXPECT_EQ(levels[l].dense, expected_dense[l]) << "level " << l;
        const Index lattice = (levels[l].grid_res + 1) * (levels[l].grid_res + 1);
        EXPECT_EQ(levels[l].table_rows, levels[l].dense ? lattice : 16384);
    }
}

TEST(HashGrid, DenseVertexIndexIsRowMajor) {
    HashGridEncoder enc = make_encoder(4, 16, 2, 2, 4096);
    const GridLevelSpec& level = enc.levels()[0];  // grid 4, dense 25 rows
    ASSERT_TRUE(level.dense);
    EXPECT_EQ(enc.vertex_index(level, 0, 0), 0);
    EXPECT_EQ(enc.vertex_index(level, 2, 3), 2 * 5 + 3);
    EXPECT_EQ(enc.vertex_index(level, 4, 4), 24);
    EXPECT_THROW(enc.vertex_index(level, 5, 0), DomainError);
    EXPECT_THROW(enc.vertex_index(level, 0, -1), DomainError);
}

TEST(HashGrid, HashedVertexIndexMatchesXorFormula) {
    HashGridEncoder enc = make_encoder(64, 256, 2, 2, 1024);
    const GridLevelSpec& level = enc.levels()[1];  // 257^2 >> 1024
    ASSERT_FALSE(level.dense);
    ASSERT_EQ(level.table_rows, 1024);
    // Spot check including the documented constants.
    const std::uint64_t expect35 = (3ull * 1ull ^ 5ull * 2654435761ull) % 1024ull;
    EXPECT_EQ(enc.vertex_index(level, 3, 5), static_cast<Index>(expect35));
    Rng rng(5);
    for (int n = 0; n < 200; ++n) {
        const Index i = static_cast<Index>(rng.below(257));
        const Index j = static_cast<Index>(rng.below(257));
        const std::uint64_t h = static_cast<std::uint64_t>(i) ^
                                static_cast<std::uint64_t>(j) * 2654435761ull;
        const Index idx = enc.vertex_index(level, i, j);
        EXPECT_EQ(idx, static_cast<Index>(h % 1024ull));
        EXPECT_GE(idx, 0);
        EXPECT_LT(idx, 1024);
    }
}

TEST(HashGrid, EncodeMatchesScalarOracle) {
    struct Case {
        double r_min, r_max;
        Index levels, m, table;
    };
    // Dense-only, hash-heavy, and mixed storage.
    const Case cases[] = {
        {4, 16, 3, 4, 4096},
        {64, 256, 3, 2, 512},
        {16, 512, 8, 2, 16384},
    };
    Rng rng(7);
    for (const Case& c : cases) {
        HashGridEncoder enc = make_encoder(c.r_min, c.r_max, c.levels, c.m, c.table);
        randomize_tables(enc, 99);
        const auto tables = raw_tables(enc);
        GridOracleConfig ocfg{c.r_min, c.r_max, c.levels, c.m, c.table};

        Tensor coords(1000, 2);
        for (Index r = 0; r < coords.rows(); ++r) {
            coords(r, 0) = rng.uniform(-1.0, 1.0);
            coords(r, 1) = rng.uniform(-1.0, 1.0);
        }
        Tensor got = enc.encode(coords);
        double max_diff = 0.0;
        for (Index r = 0; r < coords.rows(); ++r) {
            const auto want = grid_oracle_point(ocfg, tables, coords(r, 0), coords(r, 1));
            for (Index f = 0; f < enc.output_dim(); ++f) {
                max_diff = std::max(max_diff,
                                    std::fabs(got(r, f) - want[static_cast<std::size_t>(f)]));
            }
        }
        EXPECT_LE(max_diff, 1e-12);
    }
}

TEST(HashGrid, LatticeVerticesReturnExactFeatureRows) {
    // Power-of-two grids so vertex coordinates are exactly representable.
    HashGridEncoder enc = make_encoder(4, 16, 2, 3, 4096);
    randomize_tables(enc, 3);
    for (const GridLevelSpec& level : enc.levels()) {
        const Index g = level.grid_res;
        Tensor table = enc.features(level.level);
        for (Index i = 0; i <= g; i += g / 2) {
            for (Index j = 0; j <= g; j += g / 2) {
                Tensor c(1, 2);
                c(0, 0) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g);
                c(0, 1) = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(g);
                Tensor out = enc.encode(c);
                const Index row = enc.vertex_index(level, i, j);
                for (Index f = 0; f < 3; ++f) {
                    EXPECT_EQ(out(0, level.level * 3 + f), table(row, f))
                        << "level " << level.level << " vertex " << i << "," << j;
                }
            }
        }
    }
}

TEST(HashGrid, CellCentersAverageTheFourCorners) {
    HashGridEncoder enc = make_encoder(4, 8, 2, 2, 4096);
    randomize_tables(enc, 4);
    const auto tables = raw_tables(enc);
    GridOracleConfig ocfg{4, 8, 2, 2, 4096};
    for (const GridLevelSpec& level : enc.levels()) {
        const Index g = level.grid_res;
        Tensor c(1, 2);  // center of cell (1, 2)
        c(0, 0) = (1.0 + 0.5) / static_cast<double>(g) * 2.0 - 1.0;
        c(0, 1) = (2.0 + 0.5) / static_cast<double>(g) * 2.0 - 1.0;
        Tensor out = enc.encode(c);
        auto want = grid_oracle_point(ocfg, tables, c(0, 0), c(0, 1));
        for (Index f = 0; f < enc.output_dim(); ++f) {
            EXPECT_EQ(out(0, f), want[static_cast<std::size_t>(f)]);  // exact
        }
    }
}

TEST(HashGrid, ContinuousAcrossInteriorCellBoundaries) {
    HashGridEncoder enc = make_encoder(5, 23, 3, 4, 4096);
    randomize_tables(enc, 5);
    Rng rng(6);
    for (int n = 0; n < 100; ++n) {
        // A boundary of the coarsest grid is a boundary candidate for all.
        const Index g = enc.levels()[0].grid_res;
        const Index i = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(g - 1)));
        const double boundary = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g);
        const double other = rng.uniform(-1.0, 1.0);
        Tensor lo(1, 2, {boundary - 1e-9, other});
        Tensor hi(1, 2, {boundary + 1e-9, other});
        Tensor a = enc.encode(lo);
        Tensor b = enc.encode(hi);
        for (Index f = 0; f < enc.output_dim(); ++f) {
            EXPECT_NEAR(a(0, f), b(0, f), 1e-6);
        }
    }
}

TEST(HashGrid, UpperBoundaryBelongsToLastCell) {
    HashGridEncoder enc = make_encoder(4, 16, 2, 2, 4096);
    randomize_tables(enc, 8);
    Tensor corner(1, 2, {1.0, 1.0});
    Tensor out = enc.encode(corner);
    for (const GridLevelSpec& level : enc.levels()) {
        const Index row = enc.vertex_index(level, level.grid_res, level.grid_res);
        Tensor table = enc.features(level.level);
        EXPECT_EQ(out(0, level.level * 2), table(row, 0));
        EXPECT_EQ(out(0, level.level * 2 + 1), table(row, 1));
    }
}

TEST(HashGrid, RejectsOutOfDomainNamingRow) {
    HashGridEncoder enc = make_encoder(4, 16, 2, 2, 4096);
    Tensor coords(2, 2, {0.0, 0.0, 0.0, 1.5});
    try {
        enc.encode(coords);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    }
}

TEST(HashGrid, AdjointDotProductIdentity) {
    // encode is linear in the tables, so <encode(x), U> must equal
    // <tables, encode_backward(x, U)> up to roundoff.
    HashGridEncoder enc = make_encoder(3, 17, 4, 3, 128);
    randomize_tables(enc, 9);
    Rng rng(10);
    Tensor coords = random_tensor(50, 2, rng, -1.0, 1.0);
    Tensor upstream = random_tensor(50, enc.output_dim(), rng, -1.0, 1.0);

    Tensor out = enc.encode(coords);
    double lhs = 0.0;
    for (Index i = 0; i < out.size(); ++i) {
        lhs += out.values()[i] * upstream.values()[i];
    }

    for (Index l = 0; l < enc.level_count(); ++l) enc.features(l).zero_grad();
    enc.encode_backward(coords, upstream);
    double rhs = 0.0;
    for (Index l = 0; l < enc.level_count(); ++l) {
        Tensor t = enc.features(l);
        auto v = t.values();
        auto gr = t.grad();
        for (std::size_t i = 0; i < v.size(); ++i) rhs += v[i] * gr[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(lhs)));
}

TEST(HashGrid, TableGradientsMatchFiniteDifferences) {
    HashGridEncoder enc = make_encoder(2, 9, 3, 2, 32);
    randomize_tables(enc, 11);
    Rng rng(12);
    Tensor coords = random_tensor(16, 2, rng, -1.0, 1.0);
    std::vector<Tensor> params;
    for (Index l = 0; l < enc.level_count(); ++l) params.push_back(enc.features(l));

    auto run = [&]() {
        for (Tensor& p : params) p.zero_grad();
        Graph g;
        Tensor out = enc.encode(g, coords);
        Tensor loss = mean(g, out);
        g.backward(loss);
        return loss(0, 0);
    };
    // encode is linear in the tables; h can be generous, which crushes the
    // cancellation noise and lets us assert the spec-level 1e-6.
    auto report = fd_gradcheck(params, run, /*h=*/1e-4);
    EXPECT_GT(report.checked, 50);
    EXPECT_LT(report.max_rel_err, 1e-6);
}

TEST(HashGrid, GraphBackwardMatchesDirectScatter) {
    HashGridEncoder enc = make_encoder(3, 12, 3, 2, 64);
    randomize_tables(enc, 13);
    Rng rng(14);
    Tensor coords = random_tensor(20, 2, rng, -1.0, 1.0);

    Graph g;
    Tensor out = enc.encode(g, coords);
    Tensor loss = mean(g, out);
    for (Index l = 0; l < enc.level_count(); ++l) enc.features(l).zero_grad();
    g.backward(loss);
    std::vector<std::vector<double>> via_graph;
    for (Index l = 0; l < enc.level_count(); ++l) {
        auto gr = enc.features(l).grad();
        via_graph.emplace_back(gr.begin(), gr.end());
        enc.features(l).zero_grad();
    }

    Tensor upstream(out.rows(), out.cols(), 1.0 / static_cast<double>(out.size()));
    enc.encode_backward(coords, upstream);
    for (Index l = 0; l < enc.level_count(); ++l) {
        auto gr = enc.features(l).grad();
        for (std::size_t i = 0; i < gr.size(); ++i) {
            EXPECT_NEAR(gr[i], via_graph[static_cast<std::size_t>(l)][i], 1e-15);
        }
    }
}

TEST(HashGrid, InitIsTinyAndSeedDeterministic) {
    HashGridEncoder a = make_encoder(4, 64, 4, 2, 1024, 77);
    HashGridEncoder b = make_encoder(4, 64, 4, 2, 1024, 77);
    HashGridEncoder c = make_encoder(4, 64, 4, 2, 1024, 78);
    bool any_diff = false;
    for (Index l = 0; l < a.level_count(); ++l) {
        auto va = a.features(l).values();
        auto vb = b.features(l).values();
        auto vc = c.features(l).values();
        for (std::size_t i = 0; i < va.size(); ++i) {
            EXPECT_LE(std::fabs(va[i]), 1e-4);
            EXPECT_EQ(va[i], vb[i]);
            any_diff = any_diff || va[i] != vc[i];
        }
    }
    EXPECT_TRUE(any_diff);
}

TEST(HashGrid, WrapLonStitchesTheSeam) {
    HashGridEncoder enc = make_encoder(4, 16, 2, 2, 4096, 1, /*wrap_lon=*/true);
    randomize_tables(enc, 15);
    for (const GridLevelSpec& level : enc.levels()) {
        EXPECT_EQ(enc.vertex_index(level, 2, level.grid_res),
                  enc.vertex_index(level, 2, 0));
    }
    Rng rng(16);
    for (int n = 0; n < 20; ++n) {
        const double lat = rng.uniform(-1.0, 1.0);
        Tensor west(1, 2, {lat, -1.0});
        Tensor east(1, 2, {lat, 1.0});
        Tensor w = enc.encode(west);
        Tensor e = enc.encode(east);
        for (Index f = 0; f < enc.output_dim(); ++f) {
            EXPECT_EQ(w(0, f), e(0, f));
        }
    }

    // Default (unwrapped) grids keep the seam distinct.
    HashGridEncoder plain = make_encoder(4, 16, 2, 2, 4096, 1, false);
    randomize_tables(plain, 15);
    const GridLevelSpec& lv = plain.levels()[0];
    EXPECT_NE(plain.vertex_index(lv, 2, lv.grid_res), plain.vertex_index(lv, 2, 0));
}

TEST(HashGrid, ParameterAccounting) {
    HashGridEncoder enc = make_encoder(16, 512, 8, 2, 16384);
    Index expect = 0;
    for (const GridLevelSpec& level : enc.levels()) expect += level.table_rows * 2;
    EXPECT_EQ(enc.parameter_count(), expect);
    std::vector<NamedParam> params;
    enc.collect_parameters("explicit", params);
    ASSERT_EQ(params.size(), 8u);
    EXPECT_EQ(params[0].name, "explicit.level0.features");
    EXPECT_EQ(params[7].name, "explicit.level7.features");
}
