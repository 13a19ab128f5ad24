#pragma once

// Projected clarity-ascent controller with no-op zone, trust region,
// monotone safeguard, checkpoint rollback, gain scheduling and the
// human-gain budget; plus the descent monitor.

#include <deque>
#include <functional>
#include <optional>
#include <ostream>

#include <spdlog/spdlog.h>

#include "sci/common.hpp"

namespace sci::ctrl {

enum class Event { update, noop, reject, rollback, budget_violation };

inline std::string_view to_string(Event e) {
    switch (e) {
        case Event::update: return "update";
        case Event::noop: return "no-op";
        case Event::reject: return "reject";
        case Event::rollback: return "rollback";
        case Event::budget_violation: return "budget-violation";
    }
    return "no-op";
}

struct Box {
    Vec lo, hi;

    static Box uniform(std::size_t n, double lo, double hi) { return Box{Vec(n, lo), Vec(n, hi)}; }

    void validate(std::size_t n) const {
        if (lo.size() != n || hi.size() != n) throw ConfigError("box dimension does not match theta");
        for (std::size_t i = 0; i < n; ++i)
            if (!(lo[i] <= hi[i])) throw ConfigError("box requires lo <= hi per coordinate");
    }
};

/// Euclidean projection onto the box: per-coordinate clip.
inline Vec project(std::span<const double> raw, const Box& box) {
    Vec out(raw.begin(), raw.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], box.lo[i], box.hi[i]);
    return out;
}

struct Config {
    double eta = 0.01;
    double lambda_h = 0.3;
    double rho = 0.1;
    int rollback_k = 3;
    std::size_t checkpoint_depth = 16;
    double box_bound = 10.0;
    double U = 1.0;
    double const_floor = 1e-6;
    double const_ceiling = 1e6;
    std::size_t min_trace = 16;
    std::size_t trace_len = 256;
    double mu_percentile = 10.0;
    double c_ema = 0.2;
    double probe_eps = 1e-3;

    void validate() const {
        if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
        if (!(rho > 0.0)) throw ConfigError("trust region must be > 0");
        if (rollback_k < 1) throw ConfigError("rollback K must be >= 1");
        if (lambda_h < 0.0) throw ConfigError("lambda_h must be >= 0");
        if (!(U > 0.0)) throw ConfigError("U must be > 0");
    }
};

/// Online estimates of the curvature constant mu and the human
/// sensitivity constant c.
class ConstantEstimator {
public:
    explicit ConstantEstimator(const Config& cfg) : cfg_(cfg) {}

    void observe(double grad_norm_sq, double delta_sp) {
        if (delta_sp == 0.0) return;
        ratios_.push_back(grad_norm_sq / (delta_sp * delta_sp));
        if (ratios_.size() > cfg_.trace_len) ratios_.pop_front();
    }

    void probe(double response_per_unit) {
        response_per_unit = std::abs(response_per_unit);
        ema_ = ema_ ? (1.0 - cfg_.c_ema) * *ema_ + cfg_.c_ema * response_per_unit : response_per_unit;
        c_ = std::max(*ema_, response_per_unit);
    }

    double mu() const {
        if (ratios_.size() < cfg_.min_trace) return cfg_.const_floor;
        const Vec v(ratios_.begin(), ratios_.end());
        return std::clamp(math::percentile(v, cfg_.mu_percentile), cfg_.const_floor, cfg_.const_ceiling);
    }

    double c() const { return c_ ? std::clamp(*c_, cfg_.const_floor, cfg_.const_ceiling) : cfg_.const_ceiling; }

    double budget(double U) const { return mu() / (U * c()); }

    std::size_t trace_size() const { return ratios_.size(); }
    bool has_probe() const { return c_.has_value(); }

private:
    const Config& cfg_;
    std::deque<double> ratios_;
    std::optional<double> ema_, c_;
};

struct StepResult {
    Event event = Event::noop;
    double step_norm = 0.0;
    double lambda_h = 0.0;
    double budget = 0.0;
    double sp_before = 0.0;
    double sp_after = 0.0;   // SP on the triggering window after the cycle
    double V_before = 0.0;
    double V_after = 0.0;
    double u_norm = 0.0;
    std::uint64_t version = 0;
    bool rolled_back = false;
};

/// Returns SP of the triggering window under candidate parameters.
using SpFn = std::function<double(const Vec&)>;

class Controller {
public:
    Controller(Vec theta0, Config cfg = {}, std::optional<Box> box = std::nullopt)
        : cfg_(cfg), est_(cfg_), theta0_(std::move(theta0)), theta_(theta0_) {
        cfg_.validate();
        box_ = box.value_or(Box::uniform(theta_.size(), -cfg_.box_bound, cfg_.box_bound));
        box_.validate(theta_.size());
        theta0_ = project(theta0_, box_);
        theta_ = theta0_;
        checkpoints_.push_front(theta_);
        lambda_h_ = cfg_.lambda_h;
    }

    const Vec& theta() const { return theta_; }
    const Vec& theta0() const { return theta0_; }
    std::uint64_t version() const { return version_; }
    int bad_updates() const { return bad_; }
    double lambda_h() const { return lambda_h_; }
    const Config& config() const { return cfg_; }
    const Box& box() const { return box_; }
    ConstantEstimator& estimator() { return est_; }
    const ConstantEstimator& estimator() const { return est_; }
    const std::deque<Vec>& checkpoints() const { return checkpoints_; }
    double curvature() const { return curv_.empty() ? 0.0 : *std::max_element(curv_.begin(), curv_.end()); }
    double budget() const { return est_.budget(cfg_.U); }

    void set_lambda_h(double v) { lambda_h_ = std::max(0.0, v); }

    /// lambda_h' = min(lambda_h0 (1 - 0.5 max(dis, unc)), 0.9 budget).
    double schedule_gain(double disagreement, double uncertainty) {
        disagreement = std::clamp(disagreement, 0.0, 1.0);
        uncertainty = std::clamp(uncertainty, 0.0, 1.0);
        lambda_h_ = cfg_.lambda_h * (1.0 - 0.5 * std::max(disagreement, uncertainty));
        lambda_h_ = std::max(0.0, std::min(lambda_h_, 0.9 * budget()));
        return lambda_h_;
    }

    /// One adaptation cycle on the triggering window.
    StepResult step(double delta_sp, std::span<const double> grad, std::span<const double> u_h, double sp_now,
                    double gamma_noop, const SpFn& sp_of) {
        if (grad.size() != theta_.size()) throw ConfigError("gradient dimension does not match theta");
        StepResult r;
        r.sp_before = sp_now;
        r.sp_after = sp_now;
        const double sp_star = sp_now + delta_sp;
        r.V_before = 0.5 * delta_sp * delta_sp;
        r.V_after = r.V_before;
        r.lambda_h = lambda_h_;
        const bool has_u = !u_h.empty() && math::norm2(u_h) > 0.0;
        r.u_norm = has_u ? math::norm2(u_h) : 0.0;
        if (has_u && r.u_norm > cfg_.U * (1.0 + 1e-12))
            throw ConfigError("u_h exceeds its norm bound U");
        if (has_u && u_h.size() != theta_.size()) throw ConfigError("u_h dimension does not match theta");

        est_.observe(math::dot(grad, grad), delta_sp);
        if (has_u) {
            Vec probe = theta_;
            for (std::size_t i = 0; i < probe.size(); ++i) probe[i] += cfg_.probe_eps * u_h[i] / r.u_norm;
            est_.probe((sp_of(project(probe, box_)) - sp_now) / cfg_.probe_eps);
        }
        r.budget = budget();
        r.version = version_;

        if (!(std::abs(delta_sp) > gamma_noop)) {
            r.event = Event::noop;
            return r;
        }
        if (has_u && r.lambda_h > 0.0 && !(r.lambda_h < r.budget)) {
            spdlog::debug("[ctrl] lambda_h {} exceeds budget {}; update refused", r.lambda_h, r.budget);
            r.event = Event::budget_violation;
            return r;
        }

        Vec raw(theta_.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            raw[i] = cfg_.eta * (delta_sp * grad[i] + (has_u ? r.lambda_h * u_h[i] : 0.0));
        const double raw_norm = math::norm2(raw);
        if (raw_norm > cfg_.rho)
            for (auto& v : raw) v *= cfg_.rho / raw_norm;
        Vec cand(theta_.size());
        for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = theta_[i] + raw[i];
        cand = project(cand, box_);
        Vec applied(cand.size());
        for (std::size_t i = 0; i < cand.size(); ++i) applied[i] = cand[i] - theta_[i];
        r.step_norm = math::norm2(applied);

        const double sp_cand = sp_of(cand);
        if (sp_cand >= sp_now) {
            if (r.step_norm > cfg_.rho * (1.0 + 1e-9)) throw std::logic_error("trust region violated");
            if (r.step_norm > 0.0) {
                const double lin = math::dot(grad, applied);
                curv_.push_back(2.0 * std::abs(sp_cand - sp_now - lin) / (r.step_norm * r.step_norm));
                if (curv_.size() > 64) curv_.pop_front();
            }
            theta_ = std::move(cand);
            checkpoints_.push_front(theta_);
            if (checkpoints_.size() > cfg_.checkpoint_depth) checkpoints_.pop_back();
            bad_ = 0;
            ++version_;
            r.event = Event::update;
            r.sp_after = sp_cand;
        } else {
            ++bad_;
            r.event = Event::reject;
        }
        if (rollback_check()) {
            r.event = Event::rollback;
            r.rolled_back = true;
            r.sp_after = sp_of(theta_);
        }
        r.V_after = 0.5 * (sp_star - r.sp_after) * (sp_star - r.sp_after);
        r.version = version_;
        return r;
    }

    /// Reverts to the newest checkpoint after K consecutive rejects.
    bool rollback_check() {
        if (bad_ < cfg_.rollback_k) return false;
        theta_ = checkpoints_.empty() ? theta0_ : checkpoints_.front();
        bad_ = 0;
        spdlog::debug("[ctrl] rollback to checkpoint (version {})", version_);
        return true;
    }

private:
    Config cfg_;
    ConstantEstimator est_;
    Box box_;
    Vec theta0_;
    Vec theta_;
    std::deque<Vec> checkpoints_;  // newest first
    std::uint64_t version_ = 0;
    int bad_ = 0;
    double lambda_h_ = 0.0;
    std::deque<double> curv_;
};

// ---------------------------------------------------------------------------
// Descent monitor.

struct TraceEntry {
    std::uint64_t seq = 0;
    double V = 0.0;
    Event event = Event::noop;
};

struct DescentReport {
    std::size_t counted = 0;
    std::size_t violations = 0;
    double violation_fraction = 0.0;
    double max_excursion = 0.0;
    double tolerance = 0.0;
};

/// Counts V(t+1) - V(t) > eta^2 L 10, skipping rollback and no-op entries.
inline DescentReport monitor(const std::vector<TraceEntry>& trace, double eta, double L) {
    if (trace.empty()) throw ConfigError("descent monitor needs a non-empty trace");
    DescentReport r;
    r.tolerance = eta * eta * L * 10.0;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const Event e = trace[i].event;
        if (e == Event::rollback || e == Event::noop) continue;
        ++r.counted;
        const double d = trace[i].V - trace[i - 1].V;
        r.max_excursion = std::max(r.max_excursion, d);
        if (d > r.tolerance) ++r.violations;
    }
    r.violation_fraction = r.counted ? static_cast<double>(r.violations) / static_cast<double>(r.counted) : 0.0;
    return r;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceEntry>& trace) {
    os << "seq,V,event\n";
    char buf[64];
    for (const auto& e : trace) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.V);
        os << e.seq << ',' << buf << ',' << to_string(e.event) << '\n';
    }
}

}  // namespace sci::ctrl
