#include <gtest/gtest.h>

#include "sci/presets.hpp"

using namespace sci;
using nlohmann::json;

namespace {

json minimal() {
    return {{"name", "t"}, {"domain", "bearing"}, {"markers", {"a", "b"}}};
}

}  // namespace

TEST(Presets, ShippedPresetsLoad) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(preset_dir())) {
        if (e.path().extension() != ".json") continue;
        const Preset p = load_preset(e.path().stem().string());
        EXPECT_EQ(p.name, e.path().stem().string());
        ++n;
    }
    EXPECT_GE(n, 3u);
}

TEST(Presets, BearingAndClassDefaults) {
    const Preset b = load_preset("bearing");
    EXPECT_EQ(b.stream.domain, sigsim::Domain::bearing);
    EXPECT_EQ(b.policy.sp_star, 0.85);
    EXPECT_EQ(b.policy.t_max, 25u);
    EXPECT_EQ(b.policy.patience, 3u);
    EXPECT_EQ(b.seeds, (std::vector<std::uint64_t>{42, 100, 2024}));
    const Preset c = load_preset("synthetic-class");
    EXPECT_EQ(c.stream.domain, sigsim::Domain::synthetic_class);
    EXPECT_FALSE(c.fixed_k.empty());
}

TEST(Presets, UnknownPreset) { EXPECT_THROW(load_preset("no-such-preset"), ConfigError); }

TEST(Presets, OverridesApply) {
    json j = minimal();
    j["stream"] = {{"noise_sigma", 2.5}};
    j["controller"] = {{"eta", 0.05}, {"U", 2.0}};
    j["sp"] = {{"calibrator", "identity"}, {"w_kappa", {0.25, 0.25, 0.25, 0.25}}};
    j["policy"] = {{"t_max", 9}};
    const Preset p = preset_from_json(j);
    EXPECT_EQ(p.stream.noise_sigma, 2.5);
    EXPECT_EQ(p.controller.eta, 0.05);
    EXPECT_EQ(p.feedback.U, 2.0);
    EXPECT_EQ(p.calibrator, sp::CalKind::identity);
    EXPECT_EQ(p.policy.t_max, 9u);
    EXPECT_EQ(p.train.markers, 2u);
}

TEST(Presets, MalformedRejected) {
    json j = minimal();
    j.erase("name");
    EXPECT_THROW(preset_from_json(j), ConfigError);
    j = minimal();
    j["sp"] = {{"w_kappa", {0.5, 0.5}}};
    EXPECT_THROW(preset_from_json(j), ConfigError);
    j = minimal();
    j["sp"] = {{"calibrator", "spline"}};
    EXPECT_THROW(preset_from_json(j), ConfigError);
    j = minimal();
    j["constraints"] = {{{"marker", 5}, {"band", {1, 2}}}};
    EXPECT_THROW(preset_from_json(j), ConfigError);
    j = minimal();
    j["domain"] = "ecg";
    EXPECT_THROW(preset_from_json(j), ConfigError);
    j = minimal();
    j["markers"] = {"only"};
    EXPECT_THROW(preset_from_json(j), ConfigError);
}

TEST(Presets, OodObliteratesEvaluationOnly) {
    const Preset p = load_preset("ood-exam");
    ASSERT_TRUE(p.ood_snr_db.has_value());
    sigsim::StreamConfig cfg = p.stream;
    cfg.seed = 5;
    const auto clean_init = sigsim::bearing_window(cfg, 3);
    EXPECT_EQ(preset_window(p, 5, 3).channels, clean_init.channels);
    const auto clean_eval = sigsim::bearing_window(cfg, p.init_windows);
    EXPECT_NE(preset_window(p, 5, p.init_windows).channels, clean_eval.channels);
}

TEST(Presets, WindowsArePure) {
    const Preset p = load_preset("synthetic-class");
    EXPECT_EQ(preset_window(p, 9, 17).channels, preset_window(p, 9, 17).channels);
    EXPECT_NE(preset_window(p, 9, 17).channels, preset_window(p, 10, 17).channels);
}
