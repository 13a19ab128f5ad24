#include <gtest/gtest.h>

#include "sci/feedback.hpp"

using namespace sci;
using namespace sci::fb;

namespace {

struct Fixture {
    interp::Theta th;
    Vec x{0.5, -1.0, 0.25};
    std::vector<std::size_t> dims{0, 1, 2};
    std::vector<std::string> names{"a", "b", "c"};

    Fixture() {
        interp::Arch a;
        a.inputs = 3;
        a.hidden = 5;
        a.markers = 4;
        th = interp::init_theta(a, 11);
        th.version = 3;
    }

    InputLookup lookup() const {
        return [this](std::uint64_t seq) { return seq == 7 ? &x : nullptr; };
    }
};

Event ev(std::string id, Verdict v, std::uint64_t version, double sev = 1.0) {
    Event e;
    e.id = std::move(id);
    e.window_seq = 7;
    e.marker = 1;
    e.verdict = v;
    e.theta_version = version;
    e.severity = sev;
    return e;
}

}  // namespace

TEST(Feedback, EnqueueAndBound) {
    Buffer b;
    b.enqueue(ev("e0", Verdict::confirm, 0));
    EXPECT_EQ(b.size(), 1u);
    Event missing = ev("bad", Verdict::deny, 0);
    missing.theta_version.reset();
    EXPECT_THROW(b.enqueue(missing), MalformedEvent);
    for (int i = 1; i <= 256; ++i) b.enqueue(ev("e" + std::to_string(i), Verdict::confirm, 0));
    EXPECT_EQ(b.size(), 256u);
    EXPECT_EQ(b.snapshot().front().id, "e1");
    EXPECT_EQ(b.drain().size(), 256u);
    EXPECT_EQ(b.size(), 0u);
}

TEST(Feedback, JsonRoundTripAndErrors) {
    Event e = ev("x", Verdict::deny, 4, 0.5);
    e.nudge = Nudge{"b", -1};
    EXPECT_EQ(event_from_json(event_to_json(e)), e);
    EXPECT_THROW(event_from_json(nlohmann::json{{"id", "y"}}), MalformedEvent);
    auto j = event_to_json(e);
    j["verdict"] = "maybe";
    EXPECT_THROW(event_from_json(j), MalformedEvent);
    j = event_to_json(e);
    j["severity"] = 0.0;
    EXPECT_THROW(event_from_json(j), MalformedEvent);
}

TEST(Feedback, EmptyAndStale) {
    Fixture f;
    const auto empty = build_u_h({}, f.th, 3, f.lookup(), f.dims, f.names);
    EXPECT_EQ(math::norm2(empty.u), 0.0);
    EXPECT_EQ(empty.disagreement, 0.0);
    const auto stale = build_u_h({ev("a", Verdict::confirm, 2), ev("b", Verdict::deny, 1)}, f.th, 3, f.lookup(),
                                 f.dims, f.names);
    EXPECT_EQ(math::norm2(stale.u), 0.0);
    EXPECT_EQ(stale.stale, 2u);
}

TEST(Feedback, RescaledToBound) {
    Fixture f;
    SignalConfig cfg;
    cfg.U = 1e-3;
    const auto hs = build_u_h({ev("a", Verdict::confirm, 3)}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
    ASSERT_GT(hs.raw_norm, cfg.U);
    EXPECT_NEAR(math::norm2(hs.u), cfg.U, 1e-15);
}

TEST(Feedback, ConfirmRaisesDenyLowersMarker) {
    Fixture f;
    SignalConfig cfg;
    cfg.U = 1e9;
    const double q0 = interp::forward(f.th, f.x).q[1];
    for (Verdict v : {Verdict::confirm, Verdict::deny}) {
        const auto hs = build_u_h({ev("a", v, 3)}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
        interp::Theta moved = f.th;
        for (std::size_t p = 0; p < moved.params.size(); ++p) moved.params[p] += 1e-3 * hs.u[p];
        const double q1 = interp::forward(moved, f.x).q[1];
        if (v == Verdict::confirm) EXPECT_GT(q1, q0);
        else EXPECT_LT(q1, q0);
    }
}

TEST(Feedback, DisagreementFraction) {
    Fixture f;
    const auto hs = build_u_h({ev("a", Verdict::deny, 3), ev("b", Verdict::confirm, 3), ev("c", Verdict::deny, 3),
                               ev("d", Verdict::deny, 2)},
                              f.th, 3, f.lookup(), f.dims, f.names);
    EXPECT_NEAR(hs.disagreement, 2.0 / 3.0, 1e-15);
}

TEST(Feedback, LinearInSeverity) {
    Fixture f;
    SignalConfig cfg;
    cfg.U = 1e9;
    const auto a = build_u_h({ev("a", Verdict::confirm, 3, 0.2)}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
    const auto b = build_u_h({ev("a", Verdict::confirm, 3, 0.6)}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
    for (std::size_t p = 0; p < a.u.size(); ++p) EXPECT_NEAR(b.u[p], 3.0 * a.u[p], 1e-12 * (1 + std::abs(b.u[p])));
}

TEST(Feedback, NudgeMovesAttribution) {
    Fixture f;
    SignalConfig cfg;
    cfg.U = 1e9;
    Event e = ev("n", Verdict::confirm, 3);
    e.severity = 1.0;
    const Vec a0 = interp::attributions(f.th, f.x, 1, f.dims, 3);
    e.nudge = Nudge{"b", a0[1] > 0 ? -1 : 1};
    const auto with = build_u_h({e}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
    e.nudge.reset();
    const auto without = build_u_h({e}, f.th, 3, f.lookup(), f.dims, f.names, cfg);
    Vec diff(with.u.size());
    for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = with.u[p] - without.u[p];
    interp::Theta moved = f.th;
    for (std::size_t p = 0; p < moved.params.size(); ++p) moved.params[p] += 1e-3 * diff[p];
    const double a1 = interp::attributions(moved, f.x, 1, f.dims, 3)[1];
    if (a0[1] > 0) EXPECT_LT(a1, a0[1]);
    else EXPECT_GT(a1, a0[1]);
}
