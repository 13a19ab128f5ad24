#pragma once

// Named experiment presets. Each preset is a JSON file in the preset
// directory; fields left out keep the defaults below.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sci/controller.hpp"
#include "sci/decomp.hpp"
#include "sci/feedback.hpp"
#include "sci/mcloop.hpp"
#include "sci/reliability.hpp"
#include "sci/spcore.hpp"

#ifndef SCI_PRESET_DIR
#define SCI_PRESET_DIR "presets"
#endif

namespace sci {

struct Preset {
    std::string name;
    sigsim::StreamConfig stream;
    double difficulty = 0.0;             // synthetic-class only
    std::optional<double> ood_snr_db;    // obliterate evaluation windows
    decomp::DecompConfig decomp;
    std::size_t init_windows = 600;      // training + calibration split
    std::size_t eval_windows = 1400;
    double calib_fraction = 0.2;         // tail of the Init split held out for calibrators
    interp::TrainConfig train;
    std::vector<std::string> markers;
    std::vector<sp::Constraint> constraints;
    sp::Config sp;
    sp::CalKind calibrator = sp::CalKind::isotonic;
    ctrl::Config controller;
    bool adapt = true;
    reliability::Config reliability;
    fb::SignalConfig feedback;
    mc::Policy policy = mc::bearing_policy();
    std::vector<std::size_t> fixed_k;    // empty: no sweep
    std::size_t min_errors = 0;          // escalate noise until reached
    double noise_escalation = 1.25;
    int max_escalations = 8;
    std::vector<std::uint64_t> seeds{42, 100, 2024};

    std::size_t total_windows() const { return init_windows + eval_windows; }
    std::size_t calib_windows() const {
        return static_cast<std::size_t>(std::llround(calib_fraction * static_cast<double>(init_windows)));
    }

    void validate() const {
        stream.validate();
        sp.validate();
        controller.validate();
        policy.validate();
        reliability.validate();
        if (name.empty()) throw ConfigError("preset has no name");
        if (init_windows < 20) throw ConfigError("init_windows must be >= 20");
        if (!(calib_fraction > 0.0 && calib_fraction < 1.0)) throw ConfigError("calib_fraction must lie in (0,1)");
        if (markers.size() < 2) throw ConfigError("at least two markers are required");
        for (const auto& c : constraints) {
            if (c.marker >= markers.size()) throw ConfigError("constraint refers to an unknown marker");
            if (!(c.allowed.lo < c.allowed.hi)) throw ConfigError("constraint band is empty");
        }
        for (std::size_t k : fixed_k)
            if (k < 1) throw ConfigError("fixed-K values must be >= 1");
        if (seeds.empty()) throw ConfigError("preset lists no seeds");
    }
};

namespace detail {

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::vector<decomp::Band> bands_from_json(const nlohmann::json& j) {
    std::vector<decomp::Band> out;
    for (const auto& b : j) out.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    return out;
}

inline sp::CalKind calkind_from_string(const std::string& s) {
    if (s == "isotonic") return sp::CalKind::isotonic;
    if (s == "logistic") return sp::CalKind::logistic;
    if (s == "identity") return sp::CalKind::identity;
    throw ConfigError("unknown calibrator kind '" + s + "'");
}

}  // namespace detail

inline Preset preset_from_json(const nlohmann::json& j) {
    using detail::get_to;
    Preset p;
    try {
        p.name = j.at("name").get<std::string>();
        const auto domain = sigsim::domain_from_string(j.at("domain").get<std::string>());
        if (domain == sigsim::Domain::synthetic_class) {
            p.stream = sigsim::class_config();
            p.decomp = decomp::class_decomp();
            p.policy = mc::mnist_policy();
        } else {
            p.stream = sigsim::bearing_config();
            p.decomp = decomp::bearing_decomp();
        }
        p.stream.domain = domain;
        if (j.contains("stream")) {
            const auto& s = j["stream"];
            get_to(s, "sample_rate", p.stream.sample_rate);
            get_to(s, "window_len", p.stream.window_len);
            get_to(s, "n_channels", p.stream.n_channels);
            get_to(s, "noise_sigma", p.stream.noise_sigma);
            get_to(s, "fault_prob", p.stream.fault_prob);
            get_to(s, "shaft_hz", p.stream.shaft_hz);
            get_to(s, "fault_hz", p.stream.fault_hz);
            get_to(s, "shaft_amp", p.stream.shaft_amp);
            get_to(s, "hop_fraction", p.stream.hop_fraction);
        }
        get_to(j, "difficulty", p.difficulty);
        if (j.contains("ood_snr_db")) p.ood_snr_db = j["ood_snr_db"].get<double>();
        if (j.contains("decomp")) {
            const auto& d = j["decomp"];
            if (d.contains("bands")) p.decomp.bands = detail::bands_from_json(d["bands"]);
            get_to(d, "trend_span", p.decomp.trend_span);
            get_to(d, "welch_segments", p.decomp.welch_segments);
            if (d.contains("coherence_pairs")) {
                p.decomp.coherence_pairs.clear();
                for (const auto& pr : d["coherence_pairs"])
                    p.decomp.coherence_pairs.emplace_back(pr.at(0).get<std::size_t>(), pr.at(1).get<std::size_t>());
            }
        }
        get_to(j, "init_windows", p.init_windows);
        get_to(j, "eval_windows", p.eval_windows);
        get_to(j, "calib_fraction", p.calib_fraction);
        if (j.contains("train")) {
            const auto& t = j["train"];
            get_to(t, "epochs", p.train.epochs);
            get_to(t, "batch", p.train.batch);
            get_to(t, "lr", p.train.lr);
            get_to(t, "momentum", p.train.momentum);
            get_to(t, "hidden", p.train.hidden);
            get_to(t, "fit_temperature", p.train.fit_temperature);
            get_to(t, "lambda", p.train.loss.lambda);
            get_to(t, "gamma_reg", p.train.loss.gamma_reg);
            get_to(t, "marker_ce", p.train.loss.marker_ce);
            get_to(t, "band_target", p.train.loss.band_target);
        }
        get_to(j, "markers", p.markers);
        p.train.markers = p.markers.size();
        if (j.contains("constraints"))
            for (const auto& c : j["constraints"])
                p.constraints.push_back({c.at("marker").get<std::size_t>(),
                                         {c.at("band").at(0).get<double>(), c.at("band").at(1).get<double>()}});
        if (j.contains("sp")) {
            const auto& s = j["sp"];
            if (s.contains("w_kappa")) {
                const auto w = s["w_kappa"].get<std::vector<double>>();
                if (w.size() != 4) throw ConfigError("w_kappa must have 4 entries");
                std::copy(w.begin(), w.end(), p.sp.w_kappa.begin());
            }
            get_to(s, "sp_star", p.sp.sp_star);
            get_to(s, "buffer", p.sp.buffer);
            get_to(s, "noop_mult", p.sp.noop_mult);
            if (s.contains("calibrator")) p.calibrator = detail::calkind_from_string(s["calibrator"].get<std::string>());
        }
        if (j.contains("controller")) {
            const auto& c = j["controller"];
            get_to(c, "eta", p.controller.eta);
            get_to(c, "lambda_h", p.controller.lambda_h);
            get_to(c, "rho", p.controller.rho);
            get_to(c, "rollback_k", p.controller.rollback_k);
            get_to(c, "box_bound", p.controller.box_bound);
            get_to(c, "U", p.controller.U);
        }
        get_to(j, "adapt", p.adapt);
        p.feedback.U = p.controller.U;
        if (j.contains("policy")) {
            const auto& s = j["policy"];
            get_to(s, "sp_star", p.policy.sp_star);
            get_to(s, "t_max", p.policy.t_max);
            get_to(s, "patience", p.policy.patience);
        }
        get_to(j, "fixed_k", p.fixed_k);
        get_to(j, "min_errors", p.min_errors);
        get_to(j, "noise_escalation", p.noise_escalation);
        get_to(j, "max_escalations", p.max_escalations);
        get_to(j, "seeds", p.seeds);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed preset: ") + e.what());
    }
    p.validate();
    return p;
}

inline std::filesystem::path preset_dir() {
    if (const char* env = std::getenv("SCI_PRESET_DIR")) return env;
    return SCI_PRESET_DIR;
}

inline Preset load_preset(const std::string& name, const std::filesystem::path& dir = preset_dir()) {
    const auto path = dir / (name + ".json");
    std::ifstream in(path);
    if (!in) throw ConfigError("unknown preset '" + name + "' (looked in " + dir.string() + ")");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return preset_from_json(j);
}

/// Window `index` of the preset stream. Evaluation windows of an OOD preset
/// are obliterated; Init windows stay clean.
inline sigsim::Window preset_window(const Preset& p, std::uint64_t seed, std::uint64_t index) {
    sigsim::StreamConfig cfg = p.stream;
    cfg.seed = seed;
    sigsim::Window w = cfg.domain == sigsim::Domain::synthetic_class
                           ? sigsim::generate_class_stream(cfg, p.difficulty, index)
                           : sigsim::bearing_window(cfg, index);
    if (p.ood_snr_db && index >= p.init_windows) w = sigsim::obliterate(w, *p.ood_snr_db, seed);
    return w;
}

}  // namespace sci
