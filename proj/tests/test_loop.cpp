#include <gtest/gtest.h>

#include "sci/harness.hpp"

using namespace sci;

namespace {

Preset smoke() {
    Preset p = load_preset("replay-smoke");
    p.init_windows = 200;
    p.eval_windows = 30;
    return p;
}

const loop::Bootstrap& boot() {
    static const loop::Bootstrap b = loop::bootstrap(smoke(), 7);
    return b;
}

loop::EpisodeRecord ep(std::uint64_t seq, int label, int pred, std::size_t steps, double delta, bool abstained = false) {
    loop::EpisodeRecord e;
    e.seq = seq;
    e.label = label;
    e.prediction = pred;
    e.steps_used = steps;
    e.final_delta = delta;
    e.outcome = abstained ? mc::Outcome::abstained : mc::Outcome::stopped;
    return e;
}

}  // namespace

TEST(Loop, BootstrapShapes) {
    const auto& b = boot();
    EXPECT_EQ(b.calib_size + b.train_size, 200u);
    EXPECT_EQ(b.calib_size, 40u);
    EXPECT_EQ(b.theta0.arch.inputs, b.dim_feature.size());
    for (std::size_t f : b.dim_feature) EXPECT_LT(f, b.feature_names.size());
    EXPECT_EQ(b.theta0.arch.markers, smoke().markers.size());
    EXPECT_GE(b.calib_error, 0.0);
    EXPECT_LE(b.calib_error, 1.0);
}

TEST(Loop, AuditRecordFields) {
    const Preset p = smoke();
    loop::Session s(p, 7, boot(), "t");
    const auto c = s.cycle(preset_window(p, 7, p.init_windows));
    ASSERT_FALSE(c.skipped);
    const auto& a = c.audit;
    EXPECT_EQ(a["schema"], "sci-audit/1");
    EXPECT_EQ(a["session"], "t");
    EXPECT_EQ(a["cycle"], 0);
    EXPECT_EQ(a["seq"], p.init_windows);
    for (const char* k : {"kappa", "kappa_raw", "w_kappa", "sp", "delta_sp", "V", "markers", "controller", "feedback",
                          "episode", "input_hash", "theta_hash"})
        EXPECT_TRUE(a.contains(k)) << k;
    ASSERT_EQ(a["stages"].size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(a["stages"][i][0], "M" + std::to_string(i + 1));
        EXPECT_EQ(a["stages"][i][1], i + 1);
    }
    const double sp = a["sp"], d = a["delta_sp"];
    EXPECT_NEAR(sp + d, a["sp_star"].get<double>(), 1e-12);
    EXPECT_NEAR(a["V"].get<double>(), 0.5 * d * d, 1e-12);
    ASSERT_TRUE(c.episode.has_value());
    EXPECT_GE(c.episode->steps_used, 1u);
    EXPECT_LE(c.episode->steps_used, p.policy.t_max);
}

TEST(Loop, SessionsAreDeterministic) {
    const Preset p = smoke();
    loop::Session a(p, 7, boot(), "x"), b(p, 7, boot(), "x");
    for (std::uint64_t i = p.init_windows; i < p.init_windows + 5; ++i) {
        const auto w = preset_window(p, 7, i);
        EXPECT_EQ(a.cycle(w).audit.dump(), b.cycle(w).audit.dump());
    }
}

TEST(Loop, SubmitFreshAndStale) {
    const Preset p = smoke();
    loop::Session s(p, 7, boot(), "x");
    fb::Event e;
    e.id = "a";
    e.theta_version = s.theta_version();
    EXPECT_TRUE(s.submit(e).fresh);
    e.id = "b";
    e.theta_version = s.theta_version() + 1;
    const auto ack = s.submit(e);
    EXPECT_FALSE(ack.fresh);
    EXPECT_EQ(ack.id, "b");
    e.theta_version.reset();
    EXPECT_THROW(s.submit(e), fb::MalformedEvent);
}

TEST(Loop, FeedbackIsConsumedNextCycle) {
    const Preset p = smoke();
    loop::Session s(p, 7, boot(), "x");
    const auto w = preset_window(p, 7, p.init_windows);
    s.cycle(w);
    fb::Event e;
    e.id = "c";
    e.window_seq = w.seq;
    e.marker = 1;
    e.theta_version = s.theta_version();
    s.submit(e);
    const auto c = s.cycle(preset_window(p, 7, p.init_windows + 1));
    EXPECT_EQ(c.audit["feedback"]["fresh"], 1);
    EXPECT_GT(c.audit["feedback"]["u_raw_norm"].get<double>(), 0.0);
}

TEST(Loop, EpisodeJsonRoundTrip) {
    auto e = ep(4, 1, 0, 12, 0.25, true);
    e.fixed_k = {{1, 0}, {16, 1}};
    const auto back = loop::episode_from_json(loop::episode_to_json(e));
    EXPECT_EQ(back.seq, 4u);
    EXPECT_EQ(back.outcome, mc::Outcome::abstained);
    EXPECT_EQ(back.fixed_k, e.fixed_k);
    EXPECT_EQ(back.final_delta, 0.25);
}

TEST(Harness, MetricsFromEpisodes) {
    std::vector<loop::EpisodeRecord> eps{ep(0, 0, 0, 2, 0.1), ep(1, 1, 1, 4, 0.2), ep(2, 0, 1, 10, 0.6),
                                         ep(3, 1, 1, 25, 0.5, true)};
    const auto m = harness::compute_metrics(eps);
    EXPECT_EQ(m.n, 4u);
    EXPECT_EQ(m.errors, 1u);
    EXPECT_EQ(m.abstained, 1u);
    EXPECT_DOUBLE_EQ(m.error_rate, 0.25);
    EXPECT_DOUBLE_EQ(m.mean_steps, 41.0 / 4);
    EXPECT_DOUBLE_EQ(*m.allocation.ratio, 10.0 / (31.0 / 3));
    // abstained counts as positive: positives {0.6, 0.5} all above negatives {0.1, 0.2}
    EXPECT_EQ(*m.auroc, 1.0);
    // without the abstained episode: one positive {0.6} over {0.1, 0.2}
    EXPECT_EQ(*m.auroc_excluding, 1.0);
    EXPECT_DOUBLE_EQ(m.risk_coverage.back().error, 0.25);
}

TEST(Harness, RunWriteAndReport) {
    const Preset p = smoke();
    const auto rep = harness::run_preset(p, {7});
    ASSERT_FALSE(rep.partial());
    ASSERT_EQ(rep.runs.size(), 1u);
    EXPECT_EQ(rep.runs[0].audit.size(), p.eval_windows);
    EXPECT_EQ(rep.runs[0].episodes.size() + rep.runs[0].skipped, p.eval_windows);
    const auto dir = std::filesystem::temp_directory_path() / ("sci-harness-" + std::to_string(::getpid()));
    harness::write_run(rep, dir);
    for (const char* f : {"report.json", "replay-smoke-7.episodes.ndjson", "replay-smoke-7.audit.ndjson",
                          "replay-smoke-7.trace.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    const auto j = harness::report_from_dir(dir);
    EXPECT_EQ(j["stored"]["format"], "sci-report");
    ASSERT_EQ(j["recomputed"].size(), 1u);
    EXPECT_EQ(j["recomputed"][0]["errors"], rep.per_seed[0].errors);
    std::filesystem::remove_all(dir);
}

TEST(Harness, NoiseEscalatesUntilEnoughErrors) {
    Preset p = smoke();
    p.eval_windows = 10;
    p.min_errors = 1000000;
    p.max_escalations = 1;
    const double sigma = p.stream.noise_sigma;
    const auto rep = harness::run_preset(p, {7});
    EXPECT_EQ(rep.escalations, 1);
    EXPECT_DOUBLE_EQ(rep.preset.stream.noise_sigma, sigma * p.noise_escalation);
    EXPECT_TRUE(harness::report_to_json(rep).contains("note"));
}
