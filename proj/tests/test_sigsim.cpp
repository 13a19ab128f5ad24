#include <gtest/gtest.h>

#include <sstream>

#include "sci/decomp.hpp"
#include "sci/sigsim.hpp"

using namespace sci;
using namespace sci::sigsim;

namespace {

Window ramp_window(std::size_t n) {
    Window w;
    w.seq = 1;
    w.sample_rate = 100.0;
    w.channels = {Vec(n)};
    for (std::size_t i = 0; i < n; ++i) w.channels[0][i] = 0.5 * static_cast<double>(i);
    w.health = {Health::ok};
    w.gaps = {{}};
    return w;
}

}  // namespace

TEST(Sigsim, FaultBandExceedsHealthyWithoutNoise) {
    auto cfg = bearing_config(42, 0.0);
    const Window h = generate_bearing(cfg, 0, 3);
    const Window f = generate_bearing(cfg, 1, 3);
    const auto bh = decomp::band_power(h, {{100, 140}});
    const auto bf = decomp::band_power(f, {{100, 140}});
    EXPECT_GT(bf[0].value[0], bh[0].value[0]);
}

TEST(Sigsim, HealthySpectrumPeaksAtShaft) {
    auto cfg = bearing_config(7, 0.0);
    const Window h = generate_bearing(cfg, 0, 0);
    const std::size_t n = h.n_samples();
    const auto X = fft::rfft(h.channels[0], n);
    std::size_t best = 1;
    for (std::size_t k = 1; k < X.size(); ++k)
        if (std::abs(X[k]) > std::abs(X[best])) best = k;
    EXPECT_NEAR(static_cast<double>(best) * h.sample_rate / static_cast<double>(n), 30.0, h.sample_rate / n);
}

TEST(Sigsim, Deterministic) {
    auto cfg = bearing_config(11);
    EXPECT_EQ(bearing_window(cfg, 5), bearing_window(cfg, 5));
    auto cc = class_config(3);
    EXPECT_EQ(generate_class_stream(cc, 0.4, 9), generate_class_stream(cc, 0.4, 9));
    EXPECT_NE(bearing_window(cfg, 5).channels, bearing_window(cfg, 6).channels);
}

TEST(Sigsim, ConfigValidation) {
    auto cfg = bearing_config();
    cfg.fault_hz = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = bearing_config();
    cfg.fault_prob = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = bearing_config();
    cfg.window_len = 32;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Sigsim, FaultEnergyOverSeedPairs) {
    // holds for noise_sigma up to at least 6 (the preset value)
    double fault = 0, healthy = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        auto cfg = bearing_config(s, 6.0);
        fault += decomp::band_power(generate_bearing(cfg, 1, s), {{100, 140}})[0].value[0];
        healthy += decomp::band_power(generate_bearing(cfg, 0, s), {{100, 140}})[0].value[0];
    }
    EXPECT_GT(fault, healthy);
}

TEST(Sigsim, ClassSeparationShrinksWithDifficulty) {
    auto cfg = class_config(5, 1.0);
    auto gap = [&](double d) {
        double m[2] = {0, 0};
        int n[2] = {0, 0};
        for (std::uint64_t i = 0; i < 300; ++i) {
            const Window w = generate_class_stream(cfg, d, i);
            const auto bp = decomp::band_power(w, {{12, 16}});
            m[w.label] += std::log(bp[0].value[0]);
            ++n[w.label];
        }
        return std::abs(m[1] / n[1] - m[0] / n[0]);
    };
    const double g0 = gap(0.0), g5 = gap(0.5), g1 = gap(1.0);
    EXPECT_GT(g0, g5);
    EXPECT_GT(g5, g1);
    EXPECT_LT(g1, 0.15);
}

TEST(Sigsim, ObliterateHighSnrIsNearIdentity) {
    const Window w = bearing_window(bearing_config(1), 0);
    const Window o = obliterate(w, 60.0, 9);
    double d = 0, s = 0;
    for (std::size_t i = 0; i < w.n_samples(); ++i) {
        d += std::pow(o.channels[0][i] - w.channels[0][i], 2);
        s += std::pow(w.channels[0][i], 2);
    }
    EXPECT_LT(std::sqrt(d / s), 0.002);
}

TEST(Sigsim, ObliterateMinus40dB) {
    const Window w = bearing_window(bearing_config(1), 0);
    const Window o = obliterate(w, -40.0, 9);
    double sig = 0, noise = 0;
    for (std::size_t i = 0; i < w.n_samples(); ++i) {
        sig += w.channels[0][i] * w.channels[0][i];
        noise += std::pow(o.channels[0][i] - w.channels[0][i], 2);
    }
    EXPECT_NEAR(noise / sig, 1e4, 1e4 * 0.1);
}

TEST(Sigsim, ObliterateZeroSignal) {
    Window w = ramp_window(4096);
    std::fill(w.channels[0].begin(), w.channels[0].end(), 0.0);
    const Window o = obliterate(w, 20.0, 3);
    EXPECT_NEAR(math::stddev(o.channels[0]), std::sqrt(0.01), 0.005);
}

TEST(Sigsim, ShortGapInterpolatesRamp) {
    Window w = ramp_window(500);
    const Vec truth = w.channels[0];
    for (std::size_t i = 100; i < 110; ++i) w.channels[0][i] = -999;
    w.gaps[0] = {{100, 10}};
    Ingestor ing;
    const Window r = ing.ingest(w);
    EXPECT_EQ(r.health[0], Health::ok);
    for (std::size_t i = 0; i < 500; ++i) EXPECT_NEAR(r.channels[0][i], truth[i], 1e-12);
}

TEST(Sigsim, LongGapDegradesAndHolds) {
    Window w = ramp_window(500);
    w.gaps[0] = {{200, 50}};
    const Window r = repair(w);
    EXPECT_EQ(r.health[0], Health::degraded);
    for (std::size_t i = 200; i < 250; ++i) EXPECT_EQ(r.channels[0][i], w.channels[0][199]);
    EXPECT_EQ(r.channels[0][250], w.channels[0][250]);
}

TEST(Sigsim, IngestRejectsOutOfOrder) {
    Ingestor ing;
    Window w = ramp_window(100);
    w.seq = 5;
    ing.ingest(w);
    w.seq = 4;
    EXPECT_THROW(ing.ingest(w), StreamError);
    w.seq = 6;
    w.t_start = -1.0;
    EXPECT_THROW(ing.ingest(w), StreamError);
}

TEST(Sigsim, IngestRejectsAllFailed) {
    Ingestor ing;
    Window w = ramp_window(100);
    w.gaps[0] = {{0, 100}};
    EXPECT_THROW(ing.ingest(w), StreamError);
}

TEST(Sigsim, RepairIdempotent) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        Window w = bearing_window(bearing_config(s), s);
        Rng rng(s);
        std::uniform_int_distribution<std::size_t> pos(0, w.n_samples() - 1), len(1, 300);
        w.gaps[0] = {{pos(rng), len(rng)}};
        w.gaps[1] = {{pos(rng), len(rng) / 10}};
        const Window once = repair(w);
        EXPECT_EQ(repair(once), once);
    }
}

TEST(Sigsim, StreamRoundTrip) {
    auto cfg = bearing_config(4);
    std::vector<Window> ws{bearing_window(cfg, 0), bearing_window(cfg, 1)};
    ws[1].gaps[0] = {{3, 4}};
    for (auto enc : {SampleEncoding::base64, SampleEncoding::plain}) {
        std::stringstream ss;
        write_stream(ss, stream_header("bearing", 4, cfg), ws, enc);
        const auto rs = read_stream(ss);
        ASSERT_EQ(rs.windows.size(), 2u);
        EXPECT_EQ(rs.windows[0], ws[0]);
        EXPECT_EQ(rs.windows[1], ws[1]);
        EXPECT_EQ(rs.header.at("preset"), "bearing");
    }
}
