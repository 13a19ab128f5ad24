#pragma once

// Feature composer: reliability scores, softmax weights with EMA smoothing
// and rate limiting, and health masking.

#include <deque>

#include "sci/decomp.hpp"
#include "sci/sigsim.hpp"

namespace sci::reliability {

struct Config {
    double alpha = 0.3;      // persistence mix
    double beta = 0.4;       // coherence mix
    double gamma = 2.0;      // softmax temperature
    double ema_alpha = 0.1;
    double max_delta = 0.05;
    std::size_t history = 16;
    double snr_floor = 1e-12;

    void validate() const {
        if (!(gamma > 0.0)) throw ConfigError("reliability gamma must be > 0");
        if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw ConfigError("ema_alpha must lie in (0,1]");
        if (!(max_delta > 0.0)) throw ConfigError("max_delta must be > 0");
        if (history < 2) throw ConfigError("reliability history must hold at least two windows");
    }
};

inline double score(double snr, double pers, double coh, const Config& cfg = {}) {
    return std::log(std::max(snr, cfg.snr_floor)) + cfg.alpha * pers + cfg.beta * coh;
}

/// (median |v|)^2 / (1.4826 MAD)^2 over the trailing buffer.
inline double robust_snr(std::span<const double> history, double floor = 1e-12) {
    if (history.empty()) return floor;
    Vec absv(history.size());
    for (std::size_t i = 0; i < history.size(); ++i) absv[i] = std::abs(history[i]);
    const double energy = std::pow(math::median(absv), 2);
    const double noise = std::pow(1.4826 * math::mad(history), 2);
    return std::max(energy / std::max(noise, floor), floor);
}

/// Lag-1 autocorrelation mapped from [-1,1] to [0,1]; 0.5 when undefined.
inline double persistence(std::span<const double> history) {
    if (history.size() < 3) return 0.5;
    const double m = math::mean(history);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        den += (history[i] - m) * (history[i] - m);
        if (i + 1 < history.size()) num += (history[i] - m) * (history[i + 1] - m);
    }
    if (den <= 0.0) return 0.5;
    return (std::clamp(num / den, -1.0, 1.0) + 1.0) / 2.0;
}

inline Vec weights(std::span<const double> z, double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("softmax temperature must be > 0");
    return math::softmax(z, gamma);
}

inline void renormalize(Vec& w) {
    double s = 0.0;
    for (auto& v : w) {
        v = std::max(v, 0.0);
        s += v;
    }
    if (s <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
        return;
    }
    for (auto& v : w) v /= s;
}

/// w = a * target + (1 - a) * w_prev, deltas clipped to +-max_delta, then
/// returned to the simplex by shrinking the heavier signed side of the
/// clipped delta. Every coordinate stays between w_prev and the EMA value.
inline Vec ema_update(std::span<const double> w_prev, std::span<const double> target, double ema_alpha,
                      double max_delta) {
    if (w_prev.size() != target.size()) throw ConfigError("ema_update size mismatch");
    Vec d(w_prev.size());
    double up = 0.0, down = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double raw = ema_alpha * target[i] + (1.0 - ema_alpha) * w_prev[i];
        d[i] = std::clamp(raw - w_prev[i], -max_delta, max_delta);
        (d[i] > 0 ? up : down) += std::abs(d[i]);
    }
    const double su = up > down ? down / up : 1.0, sd = down > up ? up / down : 1.0;
    Vec w(w_prev.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(0.0, w_prev[i] + d[i] * (d[i] > 0 ? su : sd));
    renormalize(w);
    return w;
}

/// Failed features get exactly zero weight; the rest are renormalised.
inline Vec mask_failed(std::span<const double> w, const std::vector<bool>& failed) {
    if (w.size() != failed.size()) throw ConfigError("mask_failed size mismatch");
    Vec out(w.begin(), w.end());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (failed[i]) out[i] = 0.0;
        s += out[i];
    }
    if (std::all_of(failed.begin(), failed.end(), [](bool b) { return b; }))
        throw ComposerError("all features failed; window skipped");
    if (s <= 0.0) {
        std::size_t alive = 0;
        for (bool f : failed) alive += !f;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = failed[i] ? 0.0 : 1.0 / static_cast<double>(alive);
        return out;
    }
    for (auto& v : out) v /= s;
    return out;
}

/// Per-feature health from channel health: a single-channel feature takes its
/// channel's flag; a pair feature fails if either side fails; composites fail
/// only when every channel failed.
inline std::vector<sigsim::Health> feature_health(const decomp::FeatureBank& bank,
                                                  const std::vector<sigsim::Health>& channels) {
    using sigsim::Health;
    const bool all_failed =
        std::all_of(channels.begin(), channels.end(), [](Health h) { return h == Health::failed; });
    std::vector<Health> out;
    out.reserve(bank.size());
    for (const auto& f : bank) {
        Health h = Health::ok;
        if (f.meta.channel) {
            h = channels.at(*f.meta.channel);
        } else if (f.meta.pair) {
            h = std::max(channels.at(f.meta.pair->first), channels.at(f.meta.pair->second));
        } else if (all_failed) {
            h = Health::failed;
        }
        out.push_back(h);
    }
    return out;
}

struct Composed {
    Vec z;
    Vec target;            // softmax(gamma z) before smoothing
    Vec weights;           // smoothed, masked
    std::vector<bool> failed;
};

/// Per-session composer state: trailing feature histories and the smoothed
/// weight vector.
class Composer {
public:
    explicit Composer(Config cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    const Config& config() const { return cfg_; }
    const Vec& smoothed() const { return w_; }

    Composed update(const decomp::FeatureBank& bank, const std::vector<sigsim::Health>& channel_health) {
        if (bank.empty()) throw ComposerError("empty feature bank");
        if (history_.empty()) {
            history_.resize(bank.size());
            w_.assign(bank.size(), 1.0 / static_cast<double>(bank.size()));
        }
        if (history_.size() != bank.size()) throw ComposerError("feature bank size changed within a session");
        Composed c;
        c.z.resize(bank.size());
        for (std::size_t f = 0; f < bank.size(); ++f) {
            auto& h = history_[f];
            h.push_back(bank[f].value.empty() ? 0.0 : bank[f].value.front());
            if (h.size() > cfg_.history) h.pop_front();
            const Vec hv(h.begin(), h.end());
            const double coh = bank[f].kind == decomp::Kind::cross ? std::clamp(bank[f].value.at(0), 0.0, 1.0) : 1.0;
            c.z[f] = score(robust_snr(hv, cfg_.snr_floor), persistence(hv), coh, cfg_);
        }
        const auto health = feature_health(bank, channel_health);
        c.failed.resize(bank.size());
        for (std::size_t f = 0; f < bank.size(); ++f) c.failed[f] = health[f] == sigsim::Health::failed;
        c.target = weights(c.z, cfg_.gamma);
        w_ = ema_update(w_, c.target, cfg_.ema_alpha, cfg_.max_delta);
        c.weights = mask_failed(w_, c.failed);
        return c;
    }

private:
    Config cfg_;
    std::vector<std::deque<double>> history_;
    Vec w_;
};

}  // namespace sci::reliability
