#pragma once

// Feedback buffer and the bounded human signal u_h.

#include <deque>
#include <functional>
#include <mutex>
#include <optional>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/interpreter.hpp"

namespace sci::fb {

enum class Verdict { confirm, deny };

inline std::string_view to_string(Verdict v) { return v == Verdict::confirm ? "confirm" : "deny"; }

struct Nudge {
    std::string feature;
    int sign = 1;  // desired sign of the attribution
    bool operator==(const Nudge&) const = default;
};

struct Event {
    std::string id;
    std::uint64_t window_seq = 0;
    std::size_t marker = 0;
    Verdict verdict = Verdict::confirm;
    std::optional<Nudge> nudge;
    double severity = 1.0;
    std::optional<std::uint64_t> theta_version;
    std::uint64_t timestamp = 0;
    bool operator==(const Event&) const = default;
};

class MalformedEvent : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void validate(const Event& e) {
    if (e.id.empty()) throw MalformedEvent("event id is missing");
    if (!e.theta_version) throw MalformedEvent("theta_version is missing");
    if (!(e.severity > 0.0 && e.severity <= 1.0)) throw MalformedEvent("severity must lie in (0,1]");
    if (e.nudge && e.nudge->sign != 1 && e.nudge->sign != -1) throw MalformedEvent("nudge sign must be +1 or -1");
    if (e.nudge && e.nudge->feature.empty()) throw MalformedEvent("nudge feature is missing");
}

inline nlohmann::json event_to_json(const Event& e) {
    nlohmann::json j{{"id", e.id},
                     {"window_seq", e.window_seq},
                     {"marker", e.marker},
                     {"verdict", std::string(to_string(e.verdict))},
                     {"severity", e.severity},
                     {"timestamp", e.timestamp}};
    if (e.theta_version) j["theta_version"] = *e.theta_version;
    if (e.nudge) j["nudge"] = {{"feature", e.nudge->feature}, {"sign", e.nudge->sign}};
    return j;
}

inline Event event_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw MalformedEvent("event must be an object");
    Event e;
    try {
        e.id = j.at("id").get<std::string>();
        e.window_seq = j.at("window_seq").get<std::uint64_t>();
        e.marker = j.at("marker").get<std::size_t>();
        const auto v = j.at("verdict").get<std::string>();
        if (v == "confirm") e.verdict = Verdict::confirm;
        else if (v == "deny") e.verdict = Verdict::deny;
        else throw MalformedEvent("unknown verdict '" + v + "'");
        e.severity = j.value("severity", 1.0);
        e.timestamp = j.value("timestamp", std::uint64_t{0});
        if (j.contains("theta_version") && !j["theta_version"].is_null())
            e.theta_version = j["theta_version"].get<std::uint64_t>();
        if (j.contains("nudge"))
            e.nudge = Nudge{j["nudge"].at("feature").get<std::string>(), j["nudge"].at("sign").get<int>()};
    } catch (const nlohmann::json::exception& ex) {
        throw MalformedEvent(ex.what());
    }
    validate(e);
    return e;
}

/// Bounded multi-producer buffer; the session loop drains it once per cycle.
class Buffer {
public:
    explicit Buffer(std::size_t capacity = 256) : cap_(capacity) {}

    void enqueue(const Event& e) {
        validate(e);
        std::lock_guard lock(mu_);
        buf_.push_back(e);
        if (buf_.size() > cap_) {
            spdlog::warn("[feedback] buffer full, dropping oldest event {}", buf_.front().id);
            buf_.pop_front();
        }
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return buf_.size();
    }

    std::vector<Event> snapshot() const {
        std::lock_guard lock(mu_);
        return {buf_.begin(), buf_.end()};
    }

    /// Removes and returns every queued event; stale ones are returned too
    /// and filtered by build_u_h.
    std::vector<Event> drain() {
        std::lock_guard lock(mu_);
        std::vector<Event> out(buf_.begin(), buf_.end());
        buf_.clear();
        return out;
    }

private:
    std::size_t cap_;
    mutable std::mutex mu_;
    std::deque<Event> buf_;
};

struct HumanSignal {
    Vec u;
    double disagreement = 0.0;
    std::size_t fresh = 0;
    std::size_t stale = 0;
    double raw_norm = 0.0;
};

struct SignalConfig {
    double U = 1.0;
    double hinge_margin = 0.1;
};

/// Input vector of the window an event refers to; nullptr when unknown.
using InputLookup = std::function<const Vec*(std::uint64_t seq)>;

inline HumanSignal build_u_h(const std::vector<Event>& events, const interp::Theta& th, std::uint64_t current_version,
                             const InputLookup& lookup, const std::vector<std::size_t>& dim_feature,
                             const std::vector<std::string>& feature_names, const SignalConfig& cfg = {}) {
    const auto& a = th.arch;
    HumanSignal hs;
    hs.u.assign(th.params.size(), 0.0);
    std::size_t denies = 0;
    for (const auto& e : events) {
        if (!e.theta_version || *e.theta_version != current_version) {
            ++hs.stale;
            continue;
        }
        const Vec* x = lookup(e.window_seq);
        if (!x || e.marker >= a.markers) {
            ++hs.stale;
            continue;
        }
        ++hs.fresh;
        if (e.verdict == Verdict::deny) ++denies;
        const interp::Forward f = interp::forward(th, *x);
        Vec gzm(a.markers, 0.0);
        const Vec gzy(a.classes, 0.0);
        const double qk = f.q[e.marker];
        for (std::size_t j = 0; j < a.markers; ++j) {
            const double d = (j == e.marker ? 1.0 : 0.0) - f.q[j];
            // ascent on log q_k (confirm) or log(1 - q_k) (deny)
            gzm[j] = e.verdict == Verdict::confirm ? d : -qk * d / std::max(1.0 - qk, 1e-12);
        }
        Vec g(th.params.size(), 0.0);
        interp::backward(th, *x, f, nullptr, gzy, gzm, g);
        if (e.nudge) {
            const auto it = std::find(feature_names.begin(), feature_names.end(), e.nudge->feature);
            if (it != feature_names.end()) {
                const auto fi = static_cast<std::size_t>(it - feature_names.begin());
                const Vec attr = interp::attributions(th, *x, e.marker, dim_feature, feature_names.size());
                if (cfg.hinge_margin - e.nudge->sign * attr[fi] > 0.0) {
                    const Vec ga = interp::attribution_grad(th, *x, e.marker, dim_feature, fi);
                    for (std::size_t p = 0; p < g.size(); ++p) g[p] += e.nudge->sign * ga[p];
                }
            }
        }
        for (std::size_t p = 0; p < g.size(); ++p) hs.u[p] += e.severity * g[p];
    }
    hs.disagreement = hs.fresh ? static_cast<double>(denies) / static_cast<double>(hs.fresh) : 0.0;
    hs.raw_norm = math::norm2(hs.u);
    if (hs.raw_norm > cfg.U)
        for (auto& v : hs.u) v *= cfg.U / hs.raw_norm;
    return hs;
}

}  // namespace sci::fb
