#include "sdm/implicit_encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"

using namespace sdm;
using testutil::fd_gradcheck;
using testutil::random_tensor;

TEST(WrapEncode, KnownAngles) {
    // Rows: (lat, lon). Columns: sin(pi lon), cos(pi lon), sin(pi lat), cos(pi lat).
    Tensor coords(3, 2, {1.0, 1.0, 0.5, -0.5, 0.0, 0.0});
    Tensor enc = wrap_encode(coords);
    const double tol = 1e-15;
    EXPECT_NEAR(enc(0, 0), 0.0, tol);
    EXPECT_NEAR(enc(0, 1), -1.0, tol);
    EXPECT_NEAR(enc(0, 2), 0.0, tol);
    EXPECT_NEAR(enc(0, 3), -1.0, tol);

    EXPECT_NEAR(enc(1, 0), -1.0, tol);
    EXPECT_NEAR(enc(1, 1), 0.0, tol);
    EXPECT_NEAR(enc(1, 2), 1.0, tol);
    EXPECT_NEAR(enc(1, 3), 0.0, tol);

    EXPECT_DOUBLE_EQ(enc(2, 0), 0.0);
    EXPECT_DOUBLE_EQ(enc(2, 1), 1.0);
    EXPECT_DOUBLE_EQ(enc(2, 2), 0.0);
    EXPECT_DOUBLE_EQ(enc(2, 3), 1.0);
}

TEST(WrapEncode, AntimeridianSeamIsBitwiseExact) {
    Rng rng(11);
    for (int i = 0; i < 32; ++i) {
        const double lat = rng.uniform(-1.0, 1.0);
        Tensor west(1, 2, {lat, -1.0});
        Tensor east(1, 2, {lat, 1.0});
        Tensor we = wrap_encode(west);
        Tensor ee = wrap_encode(east);
        for (Index c = 0; c < 4; ++c) {
            EXPECT_EQ(we(0, c), ee(0, c));  // bitwise
        }
    }
}

TEST(WrapEncode, RejectsOutOfRangeNamingRow) {
    Tensor coords(2, 2, {0.0, 0.0, 1.2, 0.0});
    try {
        wrap_encode(coords);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
    }
    EXPECT_THROW(wrap_encode(Tensor(2, 3)), DimensionError);
}

TEST(ImplicitEncoder, ParameterCountMatchesClosedForm) {
    for (Index width : {8, 32, 64, 128, 256}) {
        Rng rng(1);
        ImplicitEncoder enc(width, 0.5, rng);
        EXPECT_EQ(enc.parameter_count(), ImplicitEncoder::expected_parameter_count(width));
    }
    // Spot value: width 128 -> 4*128 + 128 + 4*2*(128^2 + 128).
    EXPECT_EQ(ImplicitEncoder::expected_parameter_count(128), 132736);
}

TEST(ImplicitEncoder, InitBoundsAndZeroBiases) {
    Rng rng(2);
    ImplicitEncoder enc(16, 0.5, rng);
    std::vector<NamedParam> params;
    enc.collect_parameters("implicit", params);
    ASSERT_EQ(params.size(), 2u + 4u * 4u);
    for (const NamedParam& p : params) {
        if (p.name.ends_with(".bias")) {
            for (double v : p.value.values()) EXPECT_DOUBLE_EQ(v, 0.0);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
            for (double v : p.value.values()) {
                EXPECT_GE(v, -bound);
                EXPECT_LE(v, bound);
            }
        }
        EXPECT_TRUE(p.value.requires_grad());
    }
    // Input projection has fan-in 4 regardless of width.
    EXPECT_EQ(params[0].value.rows(), 4);
}

TEST(ImplicitEncoder, SameSeedSameParameters) {
    Rng a(42), b(42);
    ImplicitEncoder ea(24, 0.5, a), eb(24, 0.5, b);
    std::vector<NamedParam> pa, pb;
    ea.collect_parameters("x", pa);
    eb.collect_parameters("x", pb);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        auto va = pa[i].value.values();
        auto vb = pb[i].value.values();
        for (std::size_t j = 0; j < va.size(); ++j) EXPECT_EQ(va[j], vb[j]);
    }
}

TEST(ImplicitEncoder, InferenceForwardIsPure) {
    Rng rng(3);
    ImplicitEncoder enc(16, 0.5, rng);
    Tensor coords = random_tensor(6, 2, rng);
    Graph g(false);
    Tensor first = enc.forward(g, coords, false, nullptr);
    Tensor second = enc.forward(g, coords, false, nullptr);
    for (Index i = 0; i < first.size(); ++i) {
        EXPECT_EQ(first.values()[i], second.values()[i]);  // bitwise
    }
    EXPECT_EQ(first.cols(), 16);
}

TEST(ImplicitEncoder, TrainingDropoutIsSeeddeterministic) {
    Rng rng(4);
    ImplicitEncoder enc(16, 0.5, rng);
    Tensor coords = random_tensor(6, 2, rng);
    auto run = [&](std::uint64_t seed) {
        Graph g(false);
        Rng drop(seed);
        return enc.forward(g, coords, true, &drop);
    };
    Tensor a = run(7), b = run(7), c = run(8);
    bool differs = false;
    for (Index i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.values()[i], b.values()[i]);
        differs = differs || a.values()[i] != c.values()[i];
    }
    EXPECT_TRUE(differs);  // different mask stream actually changes something
}

TEST(ImplicitEncoder, TrainingForwardRequiresRng) {
    Rng rng(5);
    ImplicitEncoder enc(8, 0.5, rng);
    Tensor coords(1, 2);
    Graph g;
    EXPECT_THROW(enc.forward(g, coords, true, nullptr), ContractError);
}

TEST(ImplicitEncoder, GradientsMatchFiniteDifferences) {
    Rng rng(2024);
    ImplicitEncoder enc(8, 0.0, rng);  // p=0 keeps the check deterministic
    Tensor coords = random_tensor(4, 2, rng, -0.9, 0.9);
    std::vector<NamedParam> named;
    enc.collect_parameters("implicit", named);
    std::vector<Tensor> params;
    for (auto& p : named) params.push_back(p.value);

    auto run = [&]() {
        for (Tensor& p : params) p.zero_grad();
        Graph g;
        Tensor out = enc.forward(g, coords, false, nullptr);
        Tensor loss = mean(g, out);
        g.backward(loss);
        return loss(0, 0);
    };
    auto report = fd_gradcheck(params, run);
    EXPECT_GT(report.checked, 100);
    EXPECT_LT(report.max_rel_err, 1e-5) << "checked " << report.checked;
}

TEST(ImplicitEncoder, ResidualPerturbationScalesLinearly) {
    // Nudging one block's weights by delta moves the output by O(delta):
    // halving delta should roughly halve the response, with no jumps.
    Rng rng(6);
    ImplicitEncoder enc(16, 0.0, rng);
    Tensor coords = random_tensor(8, 2, rng, -0.9, 0.9);
    Graph g(false);
    Tensor base = enc.forward(g, coords, false, nullptr);

    std::vector<NamedParam> params;
    enc.collect_parameters("implicit", params);
    Tensor block2_weight = params[2 * 2 + 2].value;  // some mid-block weight

    auto response = [&](double delta) {
        for (double& w : block2_weight.values()) w += delta;
        Tensor shifted = enc.forward(g, coords, false, nullptr);
        for (double& w : block2_weight.values()) w -= delta;
        double norm = 0.0;
        for (Index i = 0; i < base.size(); ++i) {
            const double d = shifted.values()[i] - base.values()[i];
            norm += d * d;
        }
        return std::sqrt(norm);
    };

    const double r3 = response(1e-3);
    const double r4 = response(1e-4);
    const double r5 = response(1e-5);
    EXPECT_GT(r4, 0.0);
    EXPECT_NEAR(r3 / r4, 10.0, 2.0);
    EXPECT_NEAR(r4 / r5, 10.0, 2.0);
}
