#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "curvstep/transforms.hpp"

using namespace curvstep;

namespace {

ChainOutput apply(const TransformChain& c, const ChainState& s, const ParamVector& x, std::size_t t = 0,
                  const ParamVector* h = nullptr) {
    return chain_apply(c, s, x, ParamVector::zeros_like(x), t, h);
}

ParamVector random_vec(Rng& r, std::size_t n) { return normal_like(r, ParamVector(Layout::flat(n))); }

}  // namespace

TEST(ChainInit, EmptyAndStatefulLinks) {
    ParamVector w{1, 2, 3};
    EXPECT_TRUE(chain_init({}, w).links.empty());
    ChainState s = chain_init({{Link::trace_momentum(0.9), Link::scale_by_adam(), Link::scale(2)}}, w);
    ASSERT_EQ(s.links.size(), 3u);
    ASSERT_TRUE(s.links[0].trace);
    EXPECT_EQ(global_norm(*s.links[0].trace), 0.0);
    EXPECT_TRUE(same_layout(s.links[0].trace->layout(), w.layout()));
    ASSERT_TRUE(s.links[1].mu && s.links[1].nu);
    EXPECT_EQ(global_norm(*s.links[1].mu) + global_norm(*s.links[1].nu), 0.0);
    EXPECT_EQ(s.links[1].count, 0u);
    EXPECT_FALSE(s.links[2].trace);
}

TEST(ChainApply, EmptyChainIsIdentity) {
    ParamVector x{1, -2};
    auto out = apply({}, chain_init({}, x), x);
    EXPECT_EQ(out.update.raw(), x.raw());
    EXPECT_TRUE(out.state.links.empty());
}

TEST(ChainApply, Scale) {
    TransformChain c{{Link::scale(-0.1)}};
    auto out = apply(c, chain_init(c, ParamVector{0, 0}), {1, 2});
    EXPECT_DOUBLE_EQ(out.update[0], -0.1);
    EXPECT_DOUBLE_EQ(out.update[1], -0.2);
}

TEST(ChainApply, ClipGlobalNorm) {
    TransformChain c{{Link::clip_global_norm(1.0)}};
    auto out = apply(c, chain_init(c, ParamVector{0, 0}), {3, 4});
    EXPECT_DOUBLE_EQ(out.update[0], 0.6);
    EXPECT_DOUBLE_EQ(out.update[1], 0.8);
    auto small = apply(c, chain_init(c, ParamVector{0, 0}), {0.3, 0.4});
    EXPECT_DOUBLE_EQ(small.update[0], 0.3);
}

TEST(ChainApply, ClipIdempotent) {
    Rng r(1);
    TransformChain c{{Link::clip_global_norm(0.7)}};
    for (int i = 0; i < 20; ++i) {
        ParamVector x = 3.0 * random_vec(r, 9);
        auto once = apply(c, chain_init(c, x), x).update;
        auto twice = apply(c, chain_init(c, x), once).update;
        EXPECT_LT(global_norm(once - twice), 1e-15);
    }
}

TEST(ChainApply, MomentumFirstCallPassesGradient) {
    TransformChain c{{Link::trace_momentum(0.9), Link::scale(-1)}};
    ParamVector g{0.5, -1.5};
    auto out = apply(c, chain_init(c, g), g);
    EXPECT_EQ(out.update[0], -0.5);
    EXPECT_EQ(out.update[1], 1.5);
    auto second = apply(c, out.state, g, 1);
    EXPECT_DOUBLE_EQ(second.update[0], -0.5 * 1.9);
}

TEST(ChainApply, AdamOnConstantStream) {
    const double alpha = 1e-3;
    TransformChain c{{Link::scale_by_adam(0.9, 0.999, 1e-8), Link::scale(-alpha)}};
    ParamVector g{2.0, -0.5, 1e-3};
    ChainState s = chain_init(c, g);
    for (std::size_t t = 0; t < 50; ++t) {
        auto out = apply(c, s, g, t);
        s = out.state;
        for (std::size_t i = 0; i < 3; ++i) {
            const double expect = -alpha * g[i] / (std::abs(g[i]) + 1e-8);
            ASSERT_NEAR(out.update[i], expect, 1e-9);
        }
    }
    EXPECT_EQ(s.links[0].count, 50u);
}

TEST(ChainApply, AddDecayedWeights) {
    TransformChain c{{Link::add_decayed_weights(0.1)}};
    ParamVector w{10, 20};
    auto out = chain_apply(c, chain_init(c, w), ParamVector{1, 1}, w, 0);
    EXPECT_DOUBLE_EQ(out.update[0], 2.0);
    EXPECT_DOUBLE_EQ(out.update[1], 3.0);
}

TEST(ChainApply, ScaleComposition) {
    Rng r(2);
    for (int i = 0; i < 10; ++i) {
        const double a = r.normal(), b = r.normal();
        ParamVector x = random_vec(r, 7);
        TransformChain two{{Link::scale(a), Link::scale(b)}};
        TransformChain one{{Link::scale(a * b)}};
        EXPECT_LT(global_norm(apply(two, chain_init(two, x), x).update - apply(one, chain_init(one, x), x).update),
                  1e-14);
    }
}

TEST(ChainApply, ScheduleUsesStepCounter) {
    TransformChain c{{Link::scale_by_schedule(Schedule::step(1.0, 0.5, 10))}};
    ParamVector x{1};
    EXPECT_DOUBLE_EQ(apply(c, chain_init(c, x), x, 0).update[0], 1.0);
    EXPECT_DOUBLE_EQ(apply(c, chain_init(c, x), x, 25).update[0], 0.25);
}

TEST(ChainApply, SophiaClipBoundsAndSignInvariance) {
    TransformChain c{{Link::sophia_clip(0.05, 1e-12)}};
    Rng r(3);
    for (int i = 0; i < 50; ++i) {
        ParamVector x = random_vec(r, 12);
        ParamVector h = random_vec(r, 12);
        for (auto& v : h.raw()) v = std::abs(v);
        auto a = apply(c, chain_init(c, x), x, 0, &h).update;
        const double k = std::exp(r.normal() * 3);
        ParamVector xk = k * x, hk = k * h;
        auto b = apply(c, chain_init(c, x), xk, 0, &hk).update;
        for (std::size_t j = 0; j < 12; ++j) {
            ASSERT_LE(std::abs(a[j]), 1.0);
            ASSERT_EQ(std::signbit(a[j]), std::signbit(b[j]));
        }
    }
    ParamVector x{1.0, -1.0, 0.001};
    ParamVector h{1.0, 100.0, 1.0};
    auto out = apply(c, chain_init(c, x), x, 0, &h).update;
    EXPECT_DOUBLE_EQ(out[0], 1.0);    // 1 / 0.05 clipped
    EXPECT_DOUBLE_EQ(out[1], -0.2);   // -1 / 5
    EXPECT_DOUBLE_EQ(out[2], 0.02);
}

TEST(ChainApply, SophiaClipNeedsDiagonal) {
    TransformChain c{{Link::sophia_clip(0.05)}};
    ParamVector x{1, 2};
    EXPECT_TRUE(c.uses_preconditioner());
    EXPECT_THROW(apply(c, chain_init(c, x), x), ContractError);
}

TEST(ChainApply, LayoutMismatchIsContractError) {
    TransformChain c{{Link::trace_momentum(0.9)}};
    ChainState s = chain_init(c, ParamVector{0, 0});
    EXPECT_THROW(apply(c, s, ParamVector{1, 2, 3}), ContractError);
}

TEST(ChainApply, DescentOnQuadratic) {
    // L = 0.5 w^2, direction = grad = w.
    TransformChain c{{Link::scale_by_schedule(Schedule::constant(0.05)), Link::scale(-1)}};
    ParamVector w{4.0};
    ChainState s = chain_init(c, w);
    double prev = 0.5 * w[0] * w[0];
    for (std::size_t t = 0; t < 100; ++t) {
        auto out = chain_apply(c, s, w, w, t);
        s = out.state;
        w += out.update;
        const double l = 0.5 * w[0] * w[0];
        ASSERT_LT(l, prev);
        prev = l;
    }
}

TEST(Schedule, CosineWarmup) {
    Schedule s = Schedule::cosine_warmup(0.3, 2000, 10000);
    EXPECT_EQ(schedule_value(s, 0), 0.0);
    EXPECT_DOUBLE_EQ(schedule_value(s, 1000), 0.15);
    EXPECT_DOUBLE_EQ(schedule_value(s, 2000), 0.3);
    EXPECT_NEAR(schedule_value(s, 6000), 0.15, 1e-15);
    EXPECT_NEAR(schedule_value(s, 10000), 0.0, 1e-12);
    EXPECT_NEAR(schedule_value(s, 20000), 0.0, 1e-12);
}

TEST(Schedule, ConstantAndStep) {
    EXPECT_EQ(schedule_value(Schedule::constant(0.7), 123456), 0.7);
    Schedule st = Schedule::step(1.0, 0.1, 100);
    EXPECT_DOUBLE_EQ(schedule_value(st, 99), 1.0);
    EXPECT_NEAR(schedule_value(st, 100), 0.1, 1e-15);
    EXPECT_NEAR(schedule_value(st, 250), 0.01, 1e-15);
}

TEST(LinkNames, RoundTrip) {
    for (LinkKind k : {LinkKind::scale, LinkKind::scale_by_schedule, LinkKind::trace_momentum,
                       LinkKind::clip_global_norm, LinkKind::add_decayed_weights, LinkKind::scale_by_adam,
                       LinkKind::sophia_clip})
        EXPECT_EQ(link_kind_from_string(to_string(k)), k);
    EXPECT_FALSE(link_kind_from_string("bogus"));
}
