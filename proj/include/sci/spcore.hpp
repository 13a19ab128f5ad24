#pragma once

// SP evaluator: calibrated clarity components, the aggregate SP, the
// interpretive error and the no-op threshold.

#include <array>
#include <deque>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/decomp.hpp"
#include "sci/interpreter.hpp"

namespace sci::sp {

using interp::clarity;

// ---------------------------------------------------------------------------
// Calibrators.

enum class CalKind { isotonic, logistic, identity };

inline std::string_view to_string(CalKind k) {
    switch (k) {
        case CalKind::isotonic: return "isotonic";
        case CalKind::logistic: return "logistic";
        case CalKind::identity: return "identity";
    }
    return "identity";
}

struct Calibrator {
    CalKind kind = CalKind::identity;
    Vec knots;    // isotonic: block start abscissae, ascending
    Vec values;   // isotonic: fitted block values, nondecreasing
    double a = 0.0, b = 1.0;  // logistic: sigmoid(a + b x)
    double lo = 0.0, hi = 1.0;  // fit range

    double operator()(double x) const {
        switch (kind) {
            case CalKind::identity: return std::clamp(x, 0.0, 1.0);
            case CalKind::logistic: return math::sigmoid(a + b * x);
            case CalKind::isotonic: {
                if (knots.empty()) return std::clamp(x, 0.0, 1.0);
                const auto it = std::upper_bound(knots.begin(), knots.end(), x);
                if (it == knots.begin()) return values.front();
                return values[static_cast<std::size_t>(it - knots.begin()) - 1];
            }
        }
        return x;
    }
};

struct PavBlock {
    double x_first;
    double sum;
    double weight;
    double mean() const { return sum / weight; }
};

/// Pool-adjacent-violators. Returns fitted values in the order of the
/// sorted abscissae (ties pooled first).
inline std::vector<PavBlock> pav(std::span<const double> x, std::span<const double> t) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return x[l] < x[r]; });
    std::vector<PavBlock> blocks;
    for (std::size_t i : order) {
        if (!blocks.empty() && blocks.back().x_first == x[i]) {
            blocks.back().sum += t[i];
            blocks.back().weight += 1.0;
        } else {
            blocks.push_back({x[i], t[i], 1.0});
        }
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
            PavBlock last = blocks.back();
            blocks.pop_back();
            blocks.back().sum += last.sum;
            blocks.back().weight += last.weight;
        }
    }
    return blocks;
}

/// Fitted values of PAV at each input point, in input order.
inline Vec pav_fit(std::span<const double> x, std::span<const double> t) {
    const auto blocks = pav(x, t);
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto it = std::upper_bound(blocks.begin(), blocks.end(), x[i],
                                   [](double v, const PavBlock& b) { return v < b.x_first; });
        out[i] = std::prev(it)->mean();
    }
    return out;
}

inline Calibrator fit_logistic(std::span<const double> x, std::span<const double> t) {
    Calibrator c;
    c.kind = CalKind::logistic;
    const double tm = std::clamp(math::mean(t), 1e-6, 1.0 - 1e-6);
    c.a = std::log(tm / (1.0 - tm));
    c.b = 0.0;
    const double ridge = 1e-6;
    for (int it = 0; it < 100; ++it) {
        double ga = 0, gb = 0, haa = ridge, hab = 0, hbb = ridge;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double p = math::sigmoid(c.a + c.b * x[i]);
            const double r = p - t[i];
            const double w = p * (1.0 - p);
            ga += r;
            gb += r * x[i];
            haa += w;
            hab += w * x[i];
            hbb += w * x[i] * x[i];
        }
        gb += ridge * c.b;
        const double det = haa * hbb - hab * hab;
        if (std::abs(det) < 1e-300) break;
        const double da = (hbb * ga - hab * gb) / det;
        const double db = (haa * gb - hab * ga) / det;
        c.a -= std::clamp(da, -10.0, 10.0);
        c.b -= std::clamp(db, -10.0, 10.0);
        if (std::abs(da) + std::abs(db) < 1e-12) break;
    }
    if (!(c.b >= 0.0) || !std::isfinite(c.a) || !std::isfinite(c.b)) {
        // a decreasing fit cannot be used as a monotone calibrator
        c.b = 0.0;
        c.a = std::log(tm / (1.0 - tm));
    }
    if (!x.empty()) {
        c.lo = *std::min_element(x.begin(), x.end());
        c.hi = *std::max_element(x.begin(), x.end());
    }
    return c;
}

inline constexpr std::size_t kMinIsotonicPairs = 8;

inline Calibrator fit_calibrator(std::span<const double> x, std::span<const double> t, CalKind kind) {
    if (x.size() != t.size()) throw ConfigError("calibrator inputs differ in length");
    if (kind == CalKind::identity) return Calibrator{};
    if (x.empty()) {
        spdlog::warn("[sp] no calibration pairs, using identity");
        return Calibrator{};
    }
    if (kind == CalKind::isotonic && x.size() < kMinIsotonicPairs) {
        spdlog::debug("[sp] {} calibration pairs; falling back to logistic", x.size());
        kind = CalKind::logistic;
    }
    if (kind == CalKind::logistic) return fit_logistic(x, t);
    Calibrator c;
    c.kind = CalKind::isotonic;
    for (const auto& b : pav(x, t)) {
        c.knots.push_back(b.x_first);
        c.values.push_back(std::clamp(b.mean(), 0.0, 1.0));
    }
    c.lo = c.knots.front();
    c.hi = *std::max_element(x.begin(), x.end());
    return c;
}

inline nlohmann::json calibrator_to_json(const Calibrator& c) {
    return {{"kind", std::string(to_string(c.kind))}, {"knots", c.knots}, {"values", c.values},
            {"a", c.a}, {"b", c.b}, {"range", {c.lo, c.hi}}};
}

// ---------------------------------------------------------------------------
// Components.

struct Constraint {
    std::size_t marker = 0;
    decomp::Band allowed;
};

/// Decay-weighted rolling accuracy over the most recent outcomes.
class OutcomeBuffer {
public:
    explicit OutcomeBuffer(std::size_t capacity = 64, double decay = 0.95) : cap_(capacity), decay_(decay) {}

    void push(bool correct) {
        buf_.push_back(correct);
        if (buf_.size() > cap_) buf_.pop_front();
    }
    bool empty() const { return buf_.empty(); }
    std::size_t size() const { return buf_.size(); }

    double accuracy() const {
        if (buf_.empty()) return 0.5;
        double num = 0.0, den = 0.0, w = 1.0;
        for (auto it = buf_.rbegin(); it != buf_.rend(); ++it, w *= decay_) {
            num += w * (*it ? 1.0 : 0.0);
            den += w;
        }
        return num / den;
    }

private:
    std::size_t cap_;
    double decay_;
    std::deque<bool> buf_;
};

inline bool band_within(const decomp::Band& inner, const decomp::Band& outer) {
    return inner.lo >= outer.lo && inner.hi <= outer.hi;
}

/// Fraction of constrained markers whose TopFeat cites a band inside the
/// allowed range; 1 when no constraint applies.
inline double domain_consistency(const interp::Interpretation& I, const decomp::FeatureBank& bank,
                                 const std::vector<Constraint>& constraints) {
    std::size_t total = 0, ok = 0;
    for (const auto& c : constraints) {
        if (c.marker >= I.top_feat.size()) continue;
        ++total;
        const auto& tf = I.top_feat[c.marker];
        if (!tf || tf->feature >= bank.size()) continue;
        const auto& band = bank[tf->feature].meta.band;
        if (band && bank[tf->feature].kind == decomp::Kind::rhythm && band_within(*band, c.allowed)) ++ok;
    }
    return total ? static_cast<double>(ok) / static_cast<double>(total) : 1.0;
}

using Kappa = std::array<double, 4>;

inline Kappa components(const interp::Interpretation& I, const decomp::FeatureBank& bank,
                        const std::vector<Constraint>& constraints, const OutcomeBuffer& outcomes) {
    if (outcomes.empty()) spdlog::debug("[sp] outcome buffer empty, kappa4 = 0.5");
    return {clarity(I.p), interp::margin(I.p), domain_consistency(I, bank, constraints), outcomes.accuracy()};
}

// ---------------------------------------------------------------------------

struct State {
    Kappa kappa_raw{};
    Kappa kappa{};
    Kappa w_kappa{};
    double sp = 0.0;
    double sp_star = 0.95;
    double delta_sp = 0.0;
    double V = 0.0;
    double gamma_noop = 0.0;
};

struct Config {
    Kappa w_kappa{0.4, 0.2, 0.2, 0.2};
    double sp_star = 0.95;
    std::size_t buffer = 64;
    double noop_mult = 1.5;

    void validate() const {
        double s = 0.0;
        for (double w : w_kappa) {
            if (!(w > 0.0)) throw ConfigError("w_kappa entries must be strictly positive");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("w_kappa must sum to 1");
        if (!(sp_star >= 0.0 && sp_star <= 1.0)) throw ConfigError("sp_star must lie in [0,1]");
        if (!(noop_mult >= 1.0 && noop_mult <= 2.0)) throw ConfigError("no-op multiplier must lie in [1,2]");
    }
};

inline double aggregate(const Kappa& w, const Kappa& kappa) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += w[i] * kappa[i];
    return std::clamp(s, 0.0, 1.0);
}

class Evaluator {
public:
    explicit Evaluator(Config cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    const Config& config() const { return cfg_; }
    std::array<Calibrator, 4>& calibrators() { return cal_; }
    const std::array<Calibrator, 4>& calibrators() const { return cal_; }
    const std::deque<double>& buffer() const { return buf_; }

    Kappa calibrate(const Kappa& raw) const {
        Kappa k;
        for (std::size_t i = 0; i < 4; ++i) k[i] = std::clamp(cal_[i](raw[i]), 0.0, 1.0);
        return k;
    }

    /// SP of a raw kappa vector without touching the rolling buffer.
    double peek(const Kappa& raw) const { return aggregate(cfg_.w_kappa, calibrate(raw)); }

    State evaluate(const Kappa& raw) {
        State s;
        s.kappa_raw = raw;
        s.kappa = calibrate(raw);
        s.w_kappa = cfg_.w_kappa;
        s.sp = aggregate(cfg_.w_kappa, s.kappa);
        s.sp_star = cfg_.sp_star;
        s.delta_sp = s.sp_star - s.sp;
        s.V = 0.5 * s.delta_sp * s.delta_sp;
        buf_.push_back(s.sp);
        if (buf_.size() > cfg_.buffer) buf_.pop_front();
        s.gamma_noop = noop_threshold();
        return s;
    }

    double noop_threshold() const {
        const Vec v(buf_.begin(), buf_.end());
        return cfg_.noop_mult * math::mad(v);
    }

private:
    Config cfg_;
    std::array<Calibrator, 4> cal_{};
    std::deque<double> buf_;
};

}  // namespace sci::sp
