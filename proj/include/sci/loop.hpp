#pragma once

// Closed-loop session: ingest -> decompose -> compose -> interpret ->
// evaluate -> adapt -> collect, one cycle per window. Every cycle yields
// one audit record; subscribers receive the same record.

#include <atomic>
#include <map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/presets.hpp"

namespace sci::loop {

inline constexpr std::string_view kAuditSchema = "sci-audit/1";

struct Bootstrap {
    decomp::FeatureSpace space;
    std::vector<std::string> feature_names;   // full bank order, pc1/pc2 last
    std::vector<std::size_t> dim_feature;
    interp::Theta theta0;
    std::array<sp::Calibrator, 4> calibrators{};
    std::size_t train_size = 0;
    std::size_t calib_size = 0;
    double calib_error = 0.0;
};

/// Interpreter input: encoded bank with the dimensions of failed features zeroed.
inline Vec masked_input(const Bootstrap& b, const decomp::FeatureBank& bank, const std::vector<bool>& failed) {
    Vec x = decomp::encode(b.space, bank);
    for (std::size_t d = 0; d < x.size(); ++d)
        if (failed.at(b.dim_feature[d])) x[d] = 0.0;
    return x;
}

/// Gradient of the differentiable part of SP, w1 kappa1 + w2 kappa2, with
/// calibrators taken as identity.
inline Vec sp_gradient(const interp::Theta& th, std::span<const double> x, const sp::Kappa& w) {
    const interp::Forward f = interp::forward(th, x);
    const std::size_t m = f.q.size();
    Vec gzm = interp::clarity_logit_grad(f.q);
    for (auto& v : gzm) v *= w[0];
    std::size_t a = 0, b = 1;
    if (f.q[b] > f.q[a]) std::swap(a, b);
    for (std::size_t k = 2; k < m; ++k) {
        if (f.q[k] > f.q[a]) {
            b = a;
            a = k;
        } else if (f.q[k] > f.q[b]) {
            b = k;
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double dqa = f.q[a] * ((j == a ? 1.0 : 0.0) - f.q[j]);
        const double dqb = f.q[b] * ((j == b ? 1.0 : 0.0) - f.q[j]);
        gzm[j] += w[1] * (dqa - dqb);
    }
    Vec grad(th.params.size(), 0.0);
    backward(th, x, f, nullptr, Vec(th.arch.classes, 0.0), gzm, grad);
    return grad;
}

inline Bootstrap bootstrap(const Preset& p, std::uint64_t seed) {
    Bootstrap b;
    sigsim::Ingestor ing;
    std::vector<decomp::FeatureBank> banks;
    std::vector<sigsim::Window> windows;
    for (std::uint64_t i = 0; i < p.init_windows; ++i) {
        windows.push_back(ing.ingest(preset_window(p, seed, i)));
        banks.push_back(decomp::decompose(windows.back(), p.decomp));
    }
    const std::size_t n_cal = p.calib_windows();
    const std::size_t n_train = p.init_windows - n_cal;
    b.space = decomp::fit_feature_space({banks.begin(), banks.begin() + static_cast<std::ptrdiff_t>(n_train)});
    for (std::size_t i = 0; i < banks.size(); ++i) decomp::append_composites(banks[i], b.space, windows[i].seq);
    for (const auto& f : banks.front()) b.feature_names.push_back(f.name);
    b.dim_feature = decomp::dim_to_feature(b.space);

    interp::Dataset train;
    std::vector<Vec> xs;
    const std::vector<bool> none(b.feature_names.size(), false);
    for (std::size_t i = 0; i < banks.size(); ++i) xs.push_back(masked_input(b, banks[i], none));
    for (std::size_t i = 0; i < n_train; ++i) {
        train.x.push_back(xs[i]);
        train.y.push_back(windows[i].label);
    }
    interp::TrainConfig tc = p.train;
    tc.markers = p.markers.size();
    b.theta0 = interp::train(train, 2, tc, mix_seed(seed, 0x7a1));
    b.train_size = n_train;
    b.calib_size = n_cal;

    // calibrators: raw kappa on the held-out tail vs correctness of the
    // deterministic prediction, with the lagged outcome buffer running
    std::array<Vec, 4> raw;
    Vec correct;
    sp::OutcomeBuffer outcomes(p.sp.buffer);
    for (std::size_t i = n_train; i < banks.size(); ++i) {
        const auto I = interp::interpret(b.theta0, xs[i], b.feature_names, b.dim_feature, p.markers);
        const sp::Kappa k = sp::components(I, banks[i], p.constraints, outcomes);
        const bool ok = mc::argmax(I.y) == windows[i].label;
        for (std::size_t c = 0; c < 4; ++c) raw[c].push_back(k[c]);
        correct.push_back(ok ? 1.0 : 0.0);
        outcomes.push(ok);
    }
    for (std::size_t c = 0; c < 4; ++c)
        b.calibrators[c] = p.calibrator == sp::CalKind::identity ? sp::Calibrator{}
                                                                  : sp::fit_calibrator(raw[c], correct, p.calibrator);
    b.calib_error = correct.empty() ? 0.0 : 1.0 - math::mean(correct);
    return b;
}

struct EpisodeRecord {
    std::uint64_t seq = 0;
    int label = -1;
    int prediction = -1;
    std::size_t steps_used = 0;
    mc::Outcome outcome = mc::Outcome::abstained;
    double final_sp = 0.0;
    double final_delta = 0.0;
    std::vector<std::pair<std::size_t, int>> fixed_k;  // (K, prediction)

    bool error() const { return prediction != label; }
};

inline nlohmann::json episode_to_json(const EpisodeRecord& e) {
    nlohmann::json fk = nlohmann::json::array();
    for (const auto& [k, pred] : e.fixed_k) fk.push_back({{"k", k}, {"prediction", pred}});
    return {{"seq", e.seq},
            {"label", e.label},
            {"prediction", e.prediction},
            {"steps_used", e.steps_used},
            {"outcome", std::string(mc::to_string(e.outcome))},
            {"final_sp", e.final_sp},
            {"final_delta", e.final_delta},
            {"fixed_k", fk}};
}

inline EpisodeRecord episode_from_json(const nlohmann::json& j) {
    EpisodeRecord e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.label = j.at("label").get<int>();
    e.prediction = j.at("prediction").get<int>();
    e.steps_used = j.at("steps_used").get<std::size_t>();
    e.outcome = j.at("outcome").get<std::string>() == "stopped" ? mc::Outcome::stopped : mc::Outcome::abstained;
    e.final_sp = j.at("final_sp").get<double>();
    e.final_delta = j.at("final_delta").get<double>();
    for (const auto& r : j.value("fixed_k", nlohmann::json::array()))
        e.fixed_k.emplace_back(r.at("k").get<std::size_t>(), r.at("prediction").get<int>());
    return e;
}

struct Cycle {
    nlohmann::json audit;
    std::optional<ctrl::TraceEntry> trace;
    std::optional<EpisodeRecord> episode;
    bool skipped = false;
};

struct Ack {
    std::string id;
    bool fresh = false;
    std::uint64_t theta_version = 0;
};

class Session {
public:
    Session(Preset preset, std::uint64_t seed, Bootstrap boot, std::string id)
        : p_(std::move(preset)),
          seed_(seed),
          id_(std::move(id)),
          b_(std::move(boot)),
          composer_(p_.reliability),
          evaluator_(p_.sp),
          outcomes_(p_.sp.buffer),
          controller_(b_.theta0.params, p_.controller),
          theta_(b_.theta0) {
        evaluator_.calibrators() = b_.calibrators;
        theta_.params = controller_.theta();
        spdlog::debug("[loop] session {}: slow-path meta_update is not implemented and is skipped", id_);
    }

    const std::string& id() const { return id_; }
    const Preset& preset() const { return p_; }
    std::uint64_t seed() const { return seed_; }
    const Bootstrap& boot() const { return b_; }
    const interp::Theta& theta() const { return theta_; }
    std::uint64_t theta_version() const { return version_.load(); }
    std::uint64_t cycles() const { return cycles_; }
    ctrl::Controller& controller() { return controller_; }
    const sp::Evaluator& evaluator() const { return evaluator_; }

    /// Validates and queues a correction; safe to call from other threads.
    Ack submit(const fb::Event& e) {
        buffer_.enqueue(e);
        const std::uint64_t v = version_.load();
        return {e.id, e.theta_version && *e.theta_version == v, v};
    }
    fb::Buffer& feedback() { return buffer_; }

    /// Input vector of a recent window, for feedback referring back to it.
    const Vec* input_of(std::uint64_t seq) const {
        const auto it = inputs_.find(seq);
        return it == inputs_.end() ? nullptr : &it->second;
    }

    Cycle cycle(const sigsim::Window& raw) {
        Cycle out;
        std::uint64_t tick = 0;
        nlohmann::json stages = nlohmann::json::array();
        auto stage = [&](const char* name) { stages.push_back({name, ++tick}); };
        nlohmann::json& a = out.audit;
        a["schema"] = std::string(kAuditSchema);
        a["session"] = id_;
        a["cycle"] = cycles_++;
        a["seq"] = raw.seq;

        sigsim::Window w;
        decomp::FeatureBank bank;
        reliability::Composed comp;
        try {
            w = ingestor_.ingest(raw);
            stage("M1");
            bank = decomp::decompose(w, p_.decomp, &b_.space);
            stage("M2");
            comp = composer_.update(bank, w.health);
            stage("M3");
        } catch (const StreamError& e) {
            return skip(out, stages, e.what());
        } catch (const ComposerError& e) {
            return skip(out, stages, e.what());
        }
        std::vector<std::string> health;
        for (auto h : w.health) health.emplace_back(sigsim::to_string(h));
        a["health"] = health;
        a["weights"] = comp.weights;
        nlohmann::json failed = nlohmann::json::array();
        for (std::size_t f = 0; f < comp.failed.size(); ++f)
            if (comp.failed[f]) failed.push_back(b_.feature_names[f]);
        a["failed"] = failed;

        const Vec x = masked_input(b_, bank, comp.failed);
        remember(w.seq, x);
        const auto I = interp::interpret(theta_, x, b_.feature_names, b_.dim_feature, p_.markers);
        const interp::Theta theta_used = theta_;
        stage("M4");

        const sp::Kappa raw_k = sp::components(I, bank, p_.constraints, outcomes_);
        const sp::State st = evaluator_.evaluate(raw_k);
        stage("M5");
        a["kappa_raw"] = raw_k;
        a["kappa"] = st.kappa;
        a["w_kappa"] = st.w_kappa;
        a["sp"] = st.sp;
        a["sp_star"] = st.sp_star;
        a["delta_sp"] = st.delta_sp;
        a["V"] = st.V;
        a["gamma_noop"] = st.gamma_noop;
        nlohmann::json markers = nlohmann::json::array();
        for (std::size_t k = 0; k < I.p.size(); ++k) {
            nlohmann::json m{{"name", I.markers[k]}, {"p", I.p[k]}, {"top_feat", nullptr}};
            if (I.top_feat[k]) m["top_feat"] = {{"feature", I.top_feat[k]->name}, {"contribution", I.top_feat[k]->contribution}};
            markers.push_back(std::move(m));
        }
        a["markers"] = markers;
        a["y"] = I.y;
        a["label"] = w.label;

        // adapt: drain corrections, schedule the gain, take one Eq. (1) step
        const auto events = buffer_.drain();
        auto lookup = [this](std::uint64_t seq) { return input_of(seq); };
        const fb::HumanSignal hs = fb::build_u_h(events, theta_, version_.load(), lookup, b_.dim_feature,
                                                 b_.feature_names, p_.feedback);
        ctrl::StepResult r;
        r.sp_before = r.sp_after = st.sp;
        r.V_before = r.V_after = st.V;
        r.version = controller_.version();
        if (p_.adapt) {
            controller_.schedule_gain(hs.disagreement, 1.0 - raw_k[0]);
            const Vec grad = sp_gradient(theta_, x, st.w_kappa);
            auto sp_of = [&](const Vec& params) {
                interp::Theta t = theta_;
                t.params = params;
                const auto Ic = interp::interpret(t, x, b_.feature_names, b_.dim_feature, p_.markers);
                return evaluator_.peek(sp::components(Ic, bank, p_.constraints, outcomes_));
            };
            r = controller_.step(st.delta_sp, grad, hs.u, st.sp, st.gamma_noop, sp_of);
            theta_.params = controller_.theta();
            theta_.version = controller_.version();
            version_.store(controller_.version());
        }
        stage("M6");
        a["controller"] = {{"event", std::string(ctrl::to_string(r.event))},
                           {"step_norm", r.step_norm},
                           {"lambda_h", r.lambda_h},
                           {"budget", r.budget},
                           {"sp_after", r.sp_after},
                           {"V_before", r.V_before},
                           {"V_after", r.V_after},
                           {"u_norm", r.u_norm},
                           {"theta_version", r.version}};
        a["feedback"] = {{"fresh", hs.fresh}, {"stale", hs.stale}, {"disagreement", hs.disagreement},
                         {"u_raw_norm", hs.raw_norm}};

        // sequential MC-dropout inference under the parameters that produced I
        const auto ep = mc::run_episode(x, theta_used, p_.policy, mix_seed(seed_, w.seq, 0xe915));
        EpisodeRecord rec;
        rec.seq = w.seq;
        rec.label = w.label;
        rec.prediction = ep.prediction;
        rec.steps_used = ep.steps_used;
        rec.outcome = ep.outcome;
        rec.final_sp = ep.final_sp;
        rec.final_delta = ep.final_delta;
        for (std::size_t k : p_.fixed_k)
            rec.fixed_k.emplace_back(k, mc::fixed_k(x, theta_used, k, mix_seed(seed_, w.seq, 0xf1c0 + k)).prediction);
        if (w.label >= 0) outcomes_.push(ep.prediction == w.label);
        stage("M7");
        a["episode"] = {{"steps_used", ep.steps_used},
                        {"outcome", std::string(mc::to_string(ep.outcome))},
                        {"prediction", ep.prediction},
                        {"final_sp", ep.final_sp},
                        {"final_delta", ep.final_delta}};
        a["theta_version"] = version_.load();
        a["input_hash"] = hex64(hash_vec(x));
        a["theta_hash"] = hex64(interp::theta_hash(theta_));
        a["stages"] = stages;

        out.trace = ctrl::TraceEntry{w.seq, st.V, r.event};
        out.episode = rec;
        return out;
    }

private:
    static std::uint64_t hash_vec(const Vec& v) {
        Fnv1a h;
        h.update(v.data(), v.size() * sizeof(double));
        return h.digest();
    }

    Cycle& skip(Cycle& out, nlohmann::json& stages, const std::string& why) {
        spdlog::warn("[loop] {}: window skipped: {}", id_, why);
        out.skipped = true;
        out.audit["skipped"] = why;
        out.audit["stages"] = stages;
        out.audit["theta_version"] = version_.load();
        return out;
    }

    void remember(std::uint64_t seq, const Vec& x) {
        inputs_[seq] = x;
        while (inputs_.size() > 256) inputs_.erase(inputs_.begin());
    }

    Preset p_;
    std::uint64_t seed_;
    std::string id_;
    Bootstrap b_;
    sigsim::Ingestor ingestor_;
    reliability::Composer composer_;
    sp::Evaluator evaluator_;
    sp::OutcomeBuffer outcomes_;
    ctrl::Controller controller_;
    interp::Theta theta_;
    fb::Buffer buffer_;
    std::map<std::uint64_t, Vec> inputs_;
    std::atomic<std::uint64_t> version_{0};
    std::uint64_t cycles_ = 0;
};

inline std::string session_id(const Preset& p, std::uint64_t seed) { return p.name + "-" + std::to_string(seed); }

}  // namespace sci::loop
