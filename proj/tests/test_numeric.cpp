#include <gtest/gtest.h>

#include <cmath>

#include "curvstep/numeric.hpp"

using namespace curvstep;

namespace {

ParamVector random_vec(Rng& rng, std::size_t n) {
    ParamVector v(Layout::flat(n));
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

}  // namespace

TEST(Dot, HandSum) { EXPECT_DOUBLE_EQ(dot({1, 2, 3}, {1, 2, 3}), 14.0); }

TEST(Dot, ZeroVector) { EXPECT_EQ(dot({1.5, -2, 7}, {0, 0, 0}), 0.0); }

TEST(Dot, MatchesNaiveLoop) {
    Rng rng(11);
    auto a = random_vec(rng, 1000), b = random_vec(rng, 1000);
    long double acc = 0;
    for (std::size_t i = 0; i < 1000; ++i) acc += static_cast<long double>(a[i]) * b[i];
    EXPECT_NEAR(dot(a, b), static_cast<double>(acc), 1e-12 * std::abs(static_cast<double>(acc)) + 1e-12);
}

TEST(Dot, LayoutMismatchIsContractError) {
    ParamVector a{1, 2, 3};
    ParamVector b{1, 2};
    EXPECT_THROW(dot(a, b), ContractError);
    auto l1 = std::make_shared<const Layout>(std::vector<LayerShape>{{"a", {2}}, {"b", {1}}});
    ParamVector c(l1, {1, 2, 3});
    EXPECT_THROW(dot(a, c), ContractError);
}

TEST(Dot, SymmetricAndBilinear) {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        auto a = random_vec(rng, 50), b = random_vec(rng, 50), c = random_vec(rng, 50);
        const double al = rng.normal(), be = rng.normal();
        EXPECT_NEAR(dot(a, b), dot(b, a), 1e-12);
        ParamVector lin = al * a + be * b;
        EXPECT_NEAR(dot(lin, c), al * dot(a, c) + be * dot(b, c), 1e-10);
    }
}

TEST(GlobalNorm, Examples) {
    EXPECT_DOUBLE_EQ(global_norm({3, 4}), 5.0);
    EXPECT_EQ(global_norm({0, 0, 0}), 0.0);
    Rng rng(5);
    auto a = random_vec(rng, 77);
    EXPECT_NEAR(global_norm(a), std::sqrt(dot(a, a)), 1e-12);
}

TEST(GlobalNorm, TriangleInequality) {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
        auto a = random_vec(rng, 30), b = random_vec(rng, 30);
        EXPECT_LE(global_norm(a + b), global_norm(a) + global_norm(b) + 1e-12);
    }
}

TEST(ParamVectorTest, LayoutSumsToLength) {
    auto l = std::make_shared<const Layout>(std::vector<LayerShape>{{"w", {2, 3}}, {"b", {2}}});
    EXPECT_EQ(l->size(), 8u);
    EXPECT_EQ(l->offset(1), 6u);
    EXPECT_THROW(ParamVector(l, std::vector<double>(7)), ContractError);
    ParamVector v(l);
    EXPECT_EQ(v.block(1).size(), 2u);
}

TEST(ParamVectorTest, ArithmeticAndHadamard) {
    ParamVector a{1, 2}, b{3, 5};
    ParamVector s = a + b;
    EXPECT_EQ(s[0], 4);
    EXPECT_EQ(s[1], 7);
    ParamVector h = hadamard(a, b);
    EXPECT_EQ(h[1], 10);
    axpy(2.0, a, b);
    EXPECT_EQ(b[0], 5);
    EXPECT_TRUE(b.all_finite());
    b[0] = std::nan("");
    EXPECT_FALSE(b.all_finite());
}

TEST(RngTest, RademacherDeterministic) {
    Rng a(42), b(42);
    EXPECT_EQ(rademacher(a, 4), rademacher(b, 4));
    EXPECT_EQ(a, b);
}

TEST(RngTest, RademacherValuesAndAdvance) {
    Rng r(1);
    const auto c0 = r.counter();
    auto v = rademacher(r, 64);
    EXPECT_GT(r.counter(), c0);
    for (double x : v) EXPECT_TRUE(x == 1.0 || x == -1.0);
}

TEST(RngTest, RademacherZeroIsContractError) {
    Rng r(1);
    EXPECT_THROW(rademacher(r, 0), ContractError);
}

TEST(RngTest, RademacherMeanNearZero) {
    Rng r(9);
    const std::size_t n = 8, draws = 100000;
    std::vector<double> sum(n, 0.0);
    for (std::size_t k = 0; k < draws; ++k) {
        auto v = rademacher(r, n);
        for (std::size_t i = 0; i < n; ++i) sum[i] += v[i];
    }
    for (double s : sum) EXPECT_LE(std::abs(s / draws), 0.02);
}

TEST(RngTest, SplitStreamsDiffer) {
    Rng root(7);
    Rng c1 = root.split(), c2 = root.split();
    EXPECT_NE(rademacher(c1, 100), rademacher(c2, 100));
}

TEST(RngTest, StreamIsPureFunctionOfSeed) {
    auto run = [](std::uint64_t seed) {
        Rng r(seed);
        Rng child = r.split();
        std::vector<double> out;
        for (int i = 0; i < 20; ++i) out.push_back(r.uniform());
        for (int i = 0; i < 20; ++i) out.push_back(child.normal());
        return out;
    };
    EXPECT_EQ(run(123), run(123));
    EXPECT_NE(run(123), run(124));
}

TEST(RngTest, UniformRangeAndNormalMoments) {
    Rng r(17);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
