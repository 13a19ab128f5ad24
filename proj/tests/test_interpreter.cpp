#include <gtest/gtest.h>

#include "sci/interpreter.hpp"
#include "sci/sigsim.hpp"

using namespace sci;
using namespace sci::interp;

namespace {

Arch toy_arch() {
    Arch a;
    a.inputs = 1;
    a.hidden = 1;
    a.classes = 2;
    a.markers = 2;
    return a;
}

Arch small_arch() {
    Arch a;
    a.inputs = 3;
    a.hidden = 4;
    a.classes = 3;
    a.markers = 4;
    return a;
}

double max_rel_err(const Vec& analytic, const Vec& numeric) {
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

template <class F>
Vec central_diff(Theta th, F f, double h = 1e-4) {
    Vec g(th.params.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double keep = th.params[i];
        th.params[i] = keep + h;
        const double up = f(th);
        th.params[i] = keep - h;
        const double dn = f(th);
        th.params[i] = keep;
        g[i] = (up - dn) / (2 * h);
    }
    return g;
}

Batch make_batch(const Arch& a, Rng& rng, std::size_t n, bool masks, bool jitter) {
    std::normal_distribution<double> g(0, 1);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(a.inputs);
        for (auto& v : x) v = g(rng);
        b.x.push_back(x);
        b.labels.push_back(static_cast<int>(i % a.classes));
        if (masks) {
            DropMask m = draw_mask(a, rng);
            m[0] = 2.0;
            b.masks.push_back(m);
        }
        if (jitter) {
            Vec j(a.inputs);
            for (auto& v : j) v = 0.3 * g(rng);
            b.jitter.push_back(j);
        }
    }
    return b;
}

}  // namespace

TEST(Interpreter, ToyHasTenParameters) { EXPECT_EQ(toy_arch().size(), 10u); }

TEST(Interpreter, DeterministicForward) {
    const Theta th = init_theta(small_arch(), 1);
    const Vec x{0.3, -1.0, 2.0};
    const auto a = forward(th, x), b = forward(th, x);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.zm, b.zm);
    Rng r1(1), r2(2);
    const auto s1 = forward(th, x, true, r1), s2 = forward(th, x, true, r2);
    EXPECT_EQ(s1.y.size(), s2.y.size());
    EXPECT_NE(s1.hd, s2.hd);
}

TEST(Interpreter, ZeroThetaUniform) {
    const Theta th = Theta::zeros(small_arch());
    const auto f = forward(th, Vec{1, 2, 3});
    for (double v : f.y) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
    for (double v : f.q) EXPECT_NEAR(v, 0.25, 1e-15);
    EXPECT_THROW(forward(th, Vec{1, 2}), ConfigError);
}

TEST(Interpreter, MarkerSoftmax) {
    const Vec q = math::softmax(Vec{std::log(9.0), 0.0});
    EXPECT_NEAR(q[0], 0.9, 1e-15);
    EXPECT_NEAR(q[1], 0.1, 1e-15);
    const Vec s = math::softmax(Vec{std::log(9.0) + 7.5, 7.5});
    EXPECT_NEAR(s[0], 0.9, 1e-14);
}

TEST(Interpreter, TargetClarityOracles) {
    EXPECT_NEAR(target_clarity(Vec{0.7, 0.2, 0.1}), 0.5, 1e-12);
    EXPECT_NEAR(target_clarity(Vec{1.0 / 3, 1.0 / 3, 1.0 / 3}), 0.04742587317756678, 1e-12);
    EXPECT_NEAR(target_clarity(Vec{1.0, 0.0, 0.0}), 0.9525741268224334, 1e-12);
    EXPECT_NEAR(target_clarity(Vec{}, Link{}, TargetMode::regression, 0.0), math::sigmoid(3.0), 1e-12);
}

TEST(Interpreter, Regularizers) {
    std::vector<Vec> uni{Vec(4, 0.25), Vec(4, 0.25)};
    EXPECT_NEAR(r_div(uni), 0.0, 1e-15);
    std::vector<Vec> hot{Vec{1, 0, 0, 0}, Vec{1, 0, 0, 0}};
    EXPECT_NEAR(r_div(hot), std::log(4.0), 1e-12);
    const Vec sp{0.3, 0.7};
    EXPECT_EQ(r_stab(sp, sp), 0.0);
    EXPECT_NEAR(r_band(sp, 0.65), 0.0225, 1e-12);
}

TEST(Interpreter, LossGradientMatchesFiniteDifferenceToy) {
    const Arch a = toy_arch();
    LossConfig cfg;
    cfg.lambda = 0.7;
    cfg.gamma_reg = 0.5;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Theta th = init_theta(a, seed);
        Rng rng(seed + 10);
        Batch b = make_batch(a, rng, 6, true, true);
        freeze_targets(th, b, cfg.link);
        Vec grad;
        loss_and_grad(th, b, cfg, &grad);
        const Vec num = central_diff(th, [&](const Theta& t) { return loss_and_grad(t, b, cfg, nullptr).total; });
        EXPECT_LT(max_rel_err(grad, num), 1e-3) << "seed " << seed;
    }
}

TEST(Interpreter, LossGradientMatchesFiniteDifferenceSmall) {
    const Arch a = small_arch();
    LossConfig cfg;
    cfg.lambda = 1.3;
    cfg.gamma_reg = 0.8;
    Theta th = init_theta(a, 3);
    th.temperature = 1.7;
    Rng rng(4);
    Batch b = make_batch(a, rng, 5, true, true);
    freeze_targets(th, b, cfg.link);
    Vec grad;
    loss_and_grad(th, b, cfg, &grad);
    const Vec num = central_diff(th, [&](const Theta& t) { return loss_and_grad(t, b, cfg, nullptr).total; });
    EXPECT_LT(max_rel_err(grad, num), 1e-3);
}

TEST(Interpreter, DegenerateObjectiveIsTaskGradient) {
    const Arch a = small_arch();
    Theta th = init_theta(a, 5);
    Rng rng(6);
    const Batch b = make_batch(a, rng, 4, false, true);
    LossConfig zero;
    zero.lambda = 0;
    zero.gamma_reg = 0;
    zero.marker_ce = 0;
    Vec g;
    const auto L = loss_and_grad(th, b, zero, &g);
    EXPECT_EQ(L.total, L.task);
    Vec task(th.params.size(), 0.0);
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        const auto f = forward(th, b.x[i]);
        Vec gzy(a.classes);
        for (std::size_t k = 0; k < a.classes; ++k)
            gzy[k] = (f.y[k] - (static_cast<int>(k) == b.labels[i] ? 1.0 : 0.0)) / b.x.size();
        backward(th, b.x[i], f, nullptr, gzy, Vec(a.markers, 0.0), task);
    }
    for (std::size_t p = 0; p < g.size(); ++p) EXPECT_EQ(g[p], task[p]);
}

TEST(Interpreter, GradSpMatchesFiniteDifference) {
    const Arch a = small_arch();
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Theta th = init_theta(a, s);
        const Vec x{0.5, -0.2, 1.1};
        const Vec g = grad_sp(th, x);
        const Vec num = central_diff(th, [&](const Theta& t) { return clarity(forward(t, x).q); });
        EXPECT_LT(max_rel_err(g, num), 1e-3);
    }
}

TEST(Interpreter, GradSpZeroAtUniform) {
    const Theta th = Theta::zeros(small_arch());
    EXPECT_LT(math::norm2(grad_sp(th, Vec{1, 2, 3})), 1e-8);
}

TEST(Interpreter, ScalingMarkerHeadSharpens) {
    Theta th = init_theta(small_arch(), 8);
    const Vec x{1.0, 0.5, -0.3};
    double prev = clarity(forward(th, x).q);
    for (int i = 0; i < 20; ++i) {
        for (std::size_t p = th.arch.wm(); p < th.arch.size(); ++p) th.params[p] *= 1.05;
        const double now = clarity(forward(th, x).q);
        EXPECT_GT(now, prev);
        prev = now;
    }
}

TEST(Interpreter, StopGradientTargetsFrozen) {
    Theta th = init_theta(small_arch(), 9);
    const Vec x{0.1, 0.2, 0.3};
    const Vec y = forward(th, x).y;
    const double target = target_clarity(y);
    const double sp0 = clarity(forward(th, x).q);
    th.params[th.arch.wm()] += 0.5;
    EXPECT_NE(clarity(forward(th, x).q), sp0);
    EXPECT_EQ(target_clarity(y), target);
}

TEST(Interpreter, AttributionLinearSingleFeature) {
    Arch a = small_arch();
    Theta th = init_theta(a, 2);
    const std::vector<std::size_t> dims{0, 1, 2};
    const std::vector<std::string> names{"a", "b", "c"};
    const Vec x{0.0, 1.5, 0.0};
    const auto I = interpret(th, x, names, dims, default_marker_names(a.markers));
    for (std::size_t k = 0; k < a.markers; ++k) {
        ASSERT_TRUE(I.top_feat[k].has_value());
        EXPECT_EQ(I.top_feat[k]->name, "b");
        EXPECT_EQ(I.rationales[k].size(), 1u);
    }
    const auto Z = interpret(th, Vec{0, 0, 0}, names, dims, default_marker_names(a.markers));
    for (const auto& r : Z.rationales) EXPECT_TRUE(r.empty());
    EXPECT_EQ(interpret(th, Vec{0.2, 0.3, -1.0}, names, dims, default_marker_names(a.markers)).top_feat,
              interpret(th, Vec{0.2, 0.3, -1.0}, names, dims, default_marker_names(a.markers)).top_feat);
}

TEST(Interpreter, AttributionGradientMatchesFiniteDifference) {
    const Arch a = small_arch();
    const std::vector<std::size_t> dims{0, 1, 1};
    const Vec x{0.7, -0.4, 1.2};
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Theta th = init_theta(a, s);
        for (std::size_t f = 0; f < 2; ++f) {
            const Vec g = attribution_grad(th, x, 1, dims, f);
            const Vec num = central_diff(th, [&](const Theta& t) { return attributions(t, x, 1, dims, 2)[f]; });
            EXPECT_LT(max_rel_err(g, num), 1e-3);
        }
    }
}

TEST(Interpreter, AttributionSumsToGradientTimesInput) {
    const Arch a = small_arch();
    const Theta th = init_theta(a, 4);
    const Vec x{0.3, 0.9, -0.6};
    const Vec attr = attributions(th, x, 2, {0, 1, 2}, 3);
    for (std::size_t d = 0; d < 3; ++d) {
        Vec xp = x, xm = x;
        xp[d] += 1e-6;
        xm[d] -= 1e-6;
        const double g = (forward(th, xp).zm[2] - forward(th, xm).zm[2]) / 2e-6;
        EXPECT_NEAR(attr[d], x[d] * g, 1e-6);
    }
}

TEST(Interpreter, ThetaRoundTrip) {
    Theta th = init_theta(small_arch(), 3);
    th.version = 7;
    th.temperature = 1.25;
    const Theta back = theta_from_json(theta_to_json(th));
    EXPECT_EQ(back.params, th.params);
    EXPECT_EQ(back.version, 7u);
    EXPECT_EQ(back.temperature, 1.25);
    auto bad = theta_to_json(th);
    bad["schema_hash"] = "0";
    EXPECT_THROW(theta_from_json(bad), ConfigError);
}

TEST(Interpreter, TrainSeparableStream) {
    for (std::uint64_t seed : {42ull, 100ull, 2024ull}) {
        auto cfg = sigsim::class_config(seed, 1.0);
        Dataset train_set, test_set;
        for (std::uint64_t i = 0; i < 1300; ++i) {
            const auto w = sigsim::generate_class_stream(cfg, 0.0, i);
            const auto bank = decomp::band_power(w, {{6, 10}, {12, 16}});
            Vec x;
            for (const auto& f : bank) x.push_back(std::log(f.value[0] + 1e-12) / 5.0);
            (i < 300 ? train_set : test_set).x.push_back(x);
            (i < 300 ? train_set : test_set).y.push_back(w.label);
        }
        TrainConfig tc;
        tc.epochs = 10;
        const Theta th = train(train_set, 2, tc, seed);
        std::size_t err = 0;
        for (std::size_t i = 0; i < test_set.x.size(); ++i) {
            const Vec y = forward(th, test_set.x[i]).y;
            err += (y[1] > y[0] ? 1 : 0) != test_set.y[i];
        }
        EXPECT_LT(static_cast<double>(err) / test_set.x.size(), 0.02) << "seed " << seed;
    }
}
