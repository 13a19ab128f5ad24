#pragma once

// The interpreter: a one-hidden-layer dropout network with a task head and a
// linear marker head sharing the hidden representation.

#include <cstring>
#include <optional>

#include <json.hpp>

#include "sci/base64.hpp"
#include "sci/decomp.hpp"

namespace sci::interp {

struct Arch {
    std::size_t inputs = 0;   // D
    std::size_t hidden = 32;  // H
    std::size_t classes = 2;  // C
    std::size_t markers = 8;  // M
    double dropout = 0.5;

    std::size_t w1() const { return 0; }
    std::size_t b1() const { return w1() + hidden * inputs; }
    std::size_t wy() const { return b1() + hidden; }
    std::size_t by() const { return wy() + classes * hidden; }
    std::size_t wm() const { return by() + classes; }
    std::size_t bm() const { return wm() + markers * hidden; }
    std::size_t size() const { return bm() + markers; }

    void validate() const {
        if (inputs == 0 || hidden == 0) throw ConfigError("interpreter needs inputs and hidden units");
        if (classes < 2) throw ConfigError("interpreter needs at least two classes");
        if (markers < 2) throw ConfigError("interpreter needs at least two markers");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    }
    bool operator==(const Arch&) const = default;
};

struct Theta {
    Arch arch;
    Vec params;
    double temperature = 1.0;
    std::uint64_t version = 0;

    static Theta zeros(Arch a) {
        a.validate();
        return Theta{a, Vec(a.size(), 0.0), 1.0, 0};
    }
    bool finite() const {
        return std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); });
    }
};

inline Theta init_theta(Arch a, std::uint64_t seed) {
    Theta t = Theta::zeros(a);
    Rng rng(mix_seed(seed, 0x7e7a));
    std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(a.inputs)));
    std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(a.hidden)));
    for (std::size_t i = a.w1(); i < a.b1(); ++i) t.params[i] = n1(rng);
    for (std::size_t i = a.wy(); i < a.by(); ++i) t.params[i] = n2(rng);
    for (std::size_t i = a.wm(); i < a.bm(); ++i) t.params[i] = n2(rng);
    return t;
}

/// Per-unit dropout scale: 0 for dropped units, 1/(1-p) for survivors.
using DropMask = Vec;

inline DropMask draw_mask(const Arch& a, Rng& rng) {
    std::bernoulli_distribution keep(1.0 - a.dropout);
    DropMask m(a.hidden);
    for (auto& v : m) v = keep(rng) ? 1.0 / (1.0 - a.dropout) : 0.0;
    return m;
}

struct Forward {
    Vec h;        // tanh activations (before dropout)
    Vec hd;       // after dropout scaling
    Vec zy;       // task logits, temperature applied
    Vec zm;       // marker logits
    Vec y;        // task distribution
    Vec q;        // marker distribution
};

inline Forward forward(const Theta& th, std::span<const double> x, const DropMask* mask = nullptr) {
    const Arch& a = th.arch;
    if (x.size() != a.inputs)
        throw ConfigError("input has " + std::to_string(x.size()) + " dims, theta expects " + std::to_string(a.inputs));
    const double* p = th.params.data();
    Forward f;
    f.h.resize(a.hidden);
    f.hd.resize(a.hidden);
    for (std::size_t j = 0; j < a.hidden; ++j) {
        double s = p[a.b1() + j];
        const double* row = p + a.w1() + j * a.inputs;
        for (std::size_t i = 0; i < a.inputs; ++i) s += row[i] * x[i];
        f.h[j] = std::tanh(s);
        f.hd[j] = mask ? f.h[j] * (*mask)[j] : f.h[j];
    }
    f.zy.resize(a.classes);
    for (std::size_t c = 0; c < a.classes; ++c) {
        double s = p[a.by() + c];
        const double* row = p + a.wy() + c * a.hidden;
        for (std::size_t j = 0; j < a.hidden; ++j) s += row[j] * f.hd[j];
        f.zy[c] = s / th.temperature;
    }
    f.zm.resize(a.markers);
    for (std::size_t k = 0; k < a.markers; ++k) {
        double s = p[a.bm() + k];
        const double* row = p + a.wm() + k * a.hidden;
        for (std::size_t j = 0; j < a.hidden; ++j) s += row[j] * f.hd[j];
        f.zm[k] = s;
    }
    f.y = math::softmax(f.zy);
    f.q = math::softmax(f.zm);
    return f;
}

inline Forward forward(const Theta& th, std::span<const double> x, bool stochastic, Rng& rng) {
    if (!stochastic) return forward(th, x);
    const DropMask m = draw_mask(th.arch, rng);
    return forward(th, x, &m);
}

/// Accumulates dL/dTheta given dL/dzy and dL/dzm for one forward pass.
inline void backward(const Theta& th, std::span<const double> x, const Forward& f, const DropMask* mask,
                     std::span<const double> gzy, std::span<const double> gzm, Vec& grad) {
    const Arch& a = th.arch;
    const double* p = th.params.data();
    Vec dhd(a.hidden, 0.0);
    for (std::size_t c = 0; c < a.classes; ++c) {
        const double g = gzy[c] / th.temperature;
        if (g == 0.0) continue;
        grad[a.by() + c] += g;
        for (std::size_t j = 0; j < a.hidden; ++j) {
            grad[a.wy() + c * a.hidden + j] += g * f.hd[j];
            dhd[j] += g * p[a.wy() + c * a.hidden + j];
        }
    }
    for (std::size_t k = 0; k < a.markers; ++k) {
        const double g = gzm[k];
        if (g == 0.0) continue;
        grad[a.bm() + k] += g;
        for (std::size_t j = 0; j < a.hidden; ++j) {
            grad[a.wm() + k * a.hidden + j] += g * f.hd[j];
            dhd[j] += g * p[a.wm() + k * a.hidden + j];
        }
    }
    for (std::size_t j = 0; j < a.hidden; ++j) {
        const double s = mask ? (*mask)[j] : 1.0;
        const double da = dhd[j] * s * (1.0 - f.h[j] * f.h[j]);
        if (da == 0.0) continue;
        grad[a.b1() + j] += da;
        for (std::size_t i = 0; i < a.inputs; ++i) grad[a.w1() + j * a.inputs + i] += da * x[i];
    }
}

// ---------------------------------------------------------------------------
// Clarity of a marker distribution and its logit gradient.

inline double clarity(std::span<const double> q) {
    if (q.size() < 2) throw ConfigError("clarity needs k >= 2");
    return 1.0 - math::entropy(q) / std::log(static_cast<double>(q.size()));
}

/// dSP/dz_j = q_j (log q_j + H) / log k for SP = clarity(softmax(z)).
inline Vec clarity_logit_grad(std::span<const double> q) {
    const double h = math::entropy(q);
    const double lk = std::log(static_cast<double>(q.size()));
    Vec g(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) g[j] = q[j] > 0.0 ? q[j] * (std::log(q[j]) + h) / lk : 0.0;
    return g;
}

/// Gradient of the deterministic marker clarity w.r.t. Theta.
inline Vec grad_sp(const Theta& th, std::span<const double> x) {
    const Forward f = forward(th, x);
    Vec grad(th.params.size(), 0.0);
    const Vec gzm = clarity_logit_grad(f.q);
    const Vec gzy(th.arch.classes, 0.0);
    backward(th, x, f, nullptr, gzy, gzm, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Task-anchored target clarity.

struct Link {
    double slope = 6.0;
    double midpoint = 0.5;
};

inline double margin(std::span<const double> y) {
    if (y.size() < 2) return 1.0;
    Vec s(y.begin(), y.end());
    std::partial_sort(s.begin(), s.begin() + 2, s.end(), std::greater<>());
    return std::max(0.0, s[0] - s[1]);
}

enum class TargetMode { classification, regression };

/// SP* = sigmoid(slope (R - midpoint)); R is the top-1/top-2 margin, or
/// exp(-huber(error)) in regression mode. R is a constant of the batch.
inline double target_clarity(std::span<const double> y, Link link = {}, TargetMode mode = TargetMode::classification,
                             double regression_error = 0.0) {
    double r;
    if (mode == TargetMode::classification) {
        r = margin(y);
    } else {
        const double e = std::abs(regression_error);
        const double huber = e <= 1.0 ? 0.5 * e * e : e - 0.5;
        r = std::exp(-huber);
    }
    return math::sigmoid(link.slope * (r - link.midpoint));
}

// ---------------------------------------------------------------------------
// Marker regularisers.

inline double r_div(const std::vector<Vec>& qs) {
    const std::size_t k = qs.front().size();
    Vec qbar(k, 0.0);
    for (const auto& q : qs)
        for (std::size_t i = 0; i < k; ++i) qbar[i] += q[i] / static_cast<double>(qs.size());
    double r = 0.0;
    for (double v : qbar)
        if (v > 0.0) r += v * std::log(static_cast<double>(k) * v);
    return r;
}

inline double r_band(std::span<const double> sps, double mu) {
    const double m = math::mean(sps);
    return (m - mu) * (m - mu);
}

inline double r_stab(std::span<const double> sp_transformed, std::span<const double> sp) {
    double s = 0.0;
    for (std::size_t i = 0; i < sp.size(); ++i) s += (sp_transformed[i] - sp[i]) * (sp_transformed[i] - sp[i]);
    return sp.empty() ? 0.0 : s / static_cast<double>(sp.size());
}

// ---------------------------------------------------------------------------
// Training objective.

struct LossConfig {
    double lambda = 0.1;       // clarity alignment
    double gamma_reg = 0.01;   // marker regulariser bundle
    double alpha_div = 1.0;
    double alpha_band = 1.0;
    double alpha_stab = 1.0;
    double band_target = 0.65;
    double jitter = 0.01;      // fraction of per-feature std
    double marker_ce = 1.0;    // anchors markers 0..C-1 to the task classes
    Link link;
};

struct Batch {
    std::vector<Vec> x;
    std::vector<int> labels;
    std::vector<DropMask> masks;   // empty entries mean deterministic
    std::vector<Vec> jitter;       // additive perturbation per example (already scaled)
    Vec targets;                   // frozen SP* per example; computed from the batch when empty
};

struct LossTerms {
    double task = 0.0, marker = 0.0, align = 0.0, div = 0.0, band = 0.0, stab = 0.0, total = 0.0;
};

inline LossTerms loss_and_grad(const Theta& th, const Batch& b, const LossConfig& cfg, Vec* grad) {
    const Arch& a = th.arch;
    const std::size_t n = b.x.size();
    if (n < 2) throw TrainingError("batch size must be at least 2");
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<Forward> fw(n), fj(n);
    std::vector<Vec> qs(n);
    Vec sp(n), spj(n, 0.0), target(n);
    const bool stab = cfg.gamma_reg > 0.0 && cfg.alpha_stab > 0.0 && !b.jitter.empty();
    std::vector<Vec> xj(n);
    for (std::size_t i = 0; i < n; ++i) {
        const DropMask* m = (!b.masks.empty() && !b.masks[i].empty()) ? &b.masks[i] : nullptr;
        fw[i] = forward(th, b.x[i], m);
        qs[i] = fw[i].q;
        sp[i] = clarity(fw[i].q);
        // constant w.r.t. Theta: no gradient flows through the target
        target[i] = b.targets.empty() ? target_clarity(fw[i].y, cfg.link) : b.targets.at(i);
        if (stab) {
            xj[i] = b.x[i];
            for (std::size_t d = 0; d < xj[i].size(); ++d) xj[i][d] += b.jitter[i][d];
            fj[i] = forward(th, xj[i], m);
            spj[i] = clarity(fj[i].q);
        }
    }
    LossTerms L;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(b.labels[i]);
        L.task -= std::log(std::max(fw[i].y.at(c), 1e-300)) * inv;
        if (cfg.marker_ce > 0.0 && c < a.markers) L.marker -= std::log(std::max(fw[i].q[c], 1e-300)) * inv;
        L.align += (target[i] - sp[i]) * (target[i] - sp[i]) * inv;
    }
    L.div = r_div(qs);
    L.band = r_band(sp, cfg.band_target);
    L.stab = stab ? r_stab(spj, sp) : 0.0;
    L.total = L.task + cfg.marker_ce * L.marker + cfg.lambda * L.align +
              cfg.gamma_reg * (cfg.alpha_div * L.div + cfg.alpha_band * L.band + cfg.alpha_stab * L.stab);
    if (!grad) return L;

    grad->assign(th.params.size(), 0.0);
    Vec qbar(a.markers, 0.0);
    for (const auto& q : qs)
        for (std::size_t k = 0; k < a.markers; ++k) qbar[k] += q[k] * inv;
    Vec gdiv(a.markers);
    for (std::size_t k = 0; k < a.markers; ++k)
        gdiv[k] = std::log(static_cast<double>(a.markers) * std::max(qbar[k], 1e-300)) + 1.0;
    const double mean_sp = math::mean(sp);
    for (std::size_t i = 0; i < n; ++i) {
        const DropMask* m = (!b.masks.empty() && !b.masks[i].empty()) ? &b.masks[i] : nullptr;
        const auto c = static_cast<std::size_t>(b.labels[i]);
        Vec gzy(a.classes), gzm(a.markers, 0.0);
        for (std::size_t k = 0; k < a.classes; ++k) gzy[k] = (fw[i].y[k] - (k == c ? 1.0 : 0.0)) * inv;
        if (cfg.marker_ce > 0.0 && c < a.markers)
            for (std::size_t k = 0; k < a.markers; ++k)
                gzm[k] += cfg.marker_ce * (fw[i].q[k] - (k == c ? 1.0 : 0.0)) * inv;
        const Vec dsp = clarity_logit_grad(fw[i].q);
        // dL/dSP_i from alignment, band and stability terms
        double coef = -2.0 * cfg.lambda * (target[i] - sp[i]) * inv;
        coef += cfg.gamma_reg * cfg.alpha_band * 2.0 * (mean_sp - cfg.band_target) * inv;
        if (stab) coef -= cfg.gamma_reg * cfg.alpha_stab * 2.0 * (spj[i] - sp[i]) * inv;
        double qg = 0.0;
        for (std::size_t k = 0; k < a.markers; ++k) qg += fw[i].q[k] * gdiv[k];
        for (std::size_t k = 0; k < a.markers; ++k) {
            gzm[k] += coef * dsp[k];
            gzm[k] += cfg.gamma_reg * cfg.alpha_div * inv * fw[i].q[k] * (gdiv[k] - qg);
        }
        backward(th, b.x[i], fw[i], m, gzy, gzm, *grad);
        if (stab) {
            const Vec dspj = clarity_logit_grad(fj[i].q);
            const double cj = cfg.gamma_reg * cfg.alpha_stab * 2.0 * (spj[i] - sp[i]) * inv;
            Vec gzmj(a.markers);
            for (std::size_t k = 0; k < a.markers; ++k) gzmj[k] = cj * dspj[k];
            const Vec zero(a.classes, 0.0);
            backward(th, xj[i], fj[i], m, zero, gzmj, *grad);
        }
    }
    return L;
}

/// Records SP* for every example under the current Theta.
inline void freeze_targets(const Theta& th, Batch& b, const Link& link = {}) {
    b.targets.resize(b.x.size());
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        const DropMask* m = (!b.masks.empty() && !b.masks[i].empty()) ? &b.masks[i] : nullptr;
        b.targets[i] = target_clarity(forward(th, b.x[i], m).y, link);
    }
}

struct TrainConfig {
    LossConfig loss;
    std::size_t epochs = 30;
    std::size_t batch = 32;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t hidden = 32;
    std::size_t markers = 8;
    bool fit_temperature = false;
};

struct Dataset {
    std::vector<Vec> x;
    std::vector<int> y;
};

inline Vec feature_std(const Dataset& d) {
    const std::size_t dim = d.x.front().size();
    Vec s(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        Vec col(d.x.size());
        for (std::size_t i = 0; i < d.x.size(); ++i) col[i] = d.x[i][j];
        s[j] = math::stddev(col);
    }
    return s;
}

/// Mean task NLL of the deterministic network.
inline double task_nll(const Theta& th, const Dataset& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const Forward f = forward(th, d.x[i]);
        s -= std::log(std::max(f.y[static_cast<std::size_t>(d.y[i])], 1e-300));
    }
    return s / static_cast<double>(d.x.size());
}

/// Golden-section search of log T on the task NLL.
inline double fit_temperature(Theta th, const Dataset& d) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::log(0.05), hi = std::log(20.0);
    auto f = [&](double lt) {
        th.temperature = std::exp(lt);
        return task_nll(th, d);
    };
    double c = hi - g * (hi - lo), e = lo + g * (hi - lo);
    double fc = f(c), fe = f(e);
    for (int it = 0; it < 60; ++it) {
        if (fc < fe) {
            hi = e;
            e = c;
            fe = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = e;
            fc = fe;
            e = lo + g * (hi - lo);
            fe = f(e);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

inline Theta train(const Dataset& data, std::size_t classes, const TrainConfig& cfg, std::uint64_t seed) {
    if (data.x.size() < 2) throw TrainingError("training needs at least two examples");
    if (cfg.loss.lambda < 0 || cfg.loss.gamma_reg < 0) throw ConfigError("lambda and gamma_reg must be >= 0");
    Arch a;
    a.inputs = data.x.front().size();
    a.hidden = cfg.hidden;
    a.classes = classes;
    a.markers = cfg.markers;
    Theta th = init_theta(a, seed);
    Rng rng(mix_seed(seed, 0x77a1));
    const Vec fstd = feature_std(data);
    Vec vel(th.params.size(), 0.0), grad;
    std::vector<std::size_t> order(data.x.size());
    std::iota(order.begin(), order.end(), 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            if (end - start < 2) break;
            Batch b;
            for (std::size_t i = start; i < end; ++i) {
                b.x.push_back(data.x[order[i]]);
                b.labels.push_back(data.y[order[i]]);
                b.masks.push_back(draw_mask(a, rng));
                Vec j(a.inputs);
                for (std::size_t d = 0; d < a.inputs; ++d) j[d] = cfg.loss.jitter * fstd[d] * gauss(rng);
                b.jitter.push_back(std::move(j));
            }
            const LossTerms L = loss_and_grad(th, b, cfg.loss, &grad);
            if (!std::isfinite(L.total))
                throw TrainingError("non-finite loss at epoch " + std::to_string(ep) + ": task=" +
                                    std::to_string(L.task) + " align=" + std::to_string(L.align) +
                                    " div=" + std::to_string(L.div));
            for (std::size_t p = 0; p < vel.size(); ++p) {
                vel[p] = cfg.momentum * vel[p] - cfg.lr * grad[p];
                th.params[p] += vel[p];
            }
        }
    }
    if (cfg.fit_temperature) th.temperature = fit_temperature(th, data);
    th.version = 0;
    return th;
}

// ---------------------------------------------------------------------------
// Attribution and interpretation.

struct Attribution {
    std::size_t feature = 0;
    std::string name;
    double contribution = 0.0;
    bool operator==(const Attribution&) const = default;
};

inline constexpr std::size_t kRationaleSize = 8;

/// a_{k,f} = sum over the feature's dims of x_d * d(zm_k)/d(x_d) at the
/// deterministic network. Returns one entry per feature.
inline Vec attributions(const Theta& th, std::span<const double> x, std::size_t k,
                        const std::vector<std::size_t>& dim_feature, std::size_t n_features) {
    const Arch& a = th.arch;
    const Forward f = forward(th, x);
    const double* p = th.params.data();
    Vec out(n_features, 0.0);
    for (std::size_t d = 0; d < a.inputs; ++d) {
        if (x[d] == 0.0) continue;
        double g = 0.0;
        for (std::size_t j = 0; j < a.hidden; ++j)
            g += p[a.wm() + k * a.hidden + j] * (1.0 - f.h[j] * f.h[j]) * p[a.w1() + j * a.inputs + d];
        out[dim_feature.at(d)] += x[d] * g;
    }
    return out;
}

/// Gradient of a_{k,f} w.r.t. Theta (exact, through the tanh derivative).
inline Vec attribution_grad(const Theta& th, std::span<const double> x, std::size_t k,
                            const std::vector<std::size_t>& dim_feature, std::size_t feature) {
    const Arch& a = th.arch;
    const Forward f = forward(th, x);
    const double* p = th.params.data();
    Vec grad(th.params.size(), 0.0);
    for (std::size_t j = 0; j < a.hidden; ++j) {
        const double s = 1.0 - f.h[j] * f.h[j];
        const double wmk = p[a.wm() + k * a.hidden + j];
        double pf = 0.0;  // sum over feature dims of x_d W1_jd
        for (std::size_t d = 0; d < a.inputs; ++d)
            if (dim_feature[d] == feature) pf += x[d] * p[a.w1() + j * a.inputs + d];
        grad[a.wm() + k * a.hidden + j] += s * pf;
        // ds/da = -2 h s
        const double via_a = wmk * pf * (-2.0 * f.h[j] * s);
        grad[a.b1() + j] += via_a;
        for (std::size_t d = 0; d < a.inputs; ++d) {
            grad[a.w1() + j * a.inputs + d] += via_a * x[d];
            if (dim_feature[d] == feature) grad[a.w1() + j * a.inputs + d] += wmk * s * x[d];
        }
    }
    return grad;
}

/// Keeps the top entries by |a| (ties by feature index); zero entries dropped.
inline std::vector<Attribution> sparse_rationale(std::span<const double> a, const std::vector<std::string>& names,
                                                 std::size_t keep = kRationaleSize) {
    std::vector<std::size_t> idx;
    for (std::size_t f = 0; f < a.size(); ++f)
        if (a[f] != 0.0) idx.push_back(f);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) { return std::abs(a[l]) > std::abs(a[r]); });
    if (idx.size() > keep) idx.resize(keep);
    std::vector<Attribution> out;
    for (std::size_t f : idx) out.push_back({f, names.at(f), a[f]});
    return out;
}

struct Interpretation {
    std::vector<std::string> markers;
    Vec p;   // marker confidences
    Vec y;   // task distribution
    std::vector<std::vector<Attribution>> rationales;
    std::vector<std::optional<Attribution>> top_feat;

    std::size_t top_marker() const {
        return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    }
};

inline std::vector<std::string> default_marker_names(std::size_t m) {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < m; ++k) names.push_back("m" + std::to_string(k));
    return names;
}

inline Interpretation interpret(const Theta& th, std::span<const double> x, const std::vector<std::string>& feature_names,
                                const std::vector<std::size_t>& dim_feature, const std::vector<std::string>& markers) {
    const Forward f = forward(th, x);
    Interpretation I;
    I.markers = markers;
    I.p = f.q;
    I.y = f.y;
    for (std::size_t k = 0; k < th.arch.markers; ++k) {
        const Vec a = attributions(th, x, k, dim_feature, feature_names.size());
        auto r = sparse_rationale(a, feature_names);
        I.top_feat.push_back(r.empty() ? std::nullopt : std::optional<Attribution>(r.front()));
        I.rationales.push_back(std::move(r));
    }
    return I;
}

// ---------------------------------------------------------------------------
// Checkpoint serialisation.

inline constexpr std::string_view kThetaSchema = "sci-theta/1";

inline std::string theta_schema_hash() {
    Fnv1a h;
    h.update(kThetaSchema);
    h.update(std::string_view("W1[HxD],b1[H],Wy[CxH],by[C],Wm[MxH],bm[M];tanh;dropout-hidden"));
    return hex64(h.digest());
}

inline std::uint64_t theta_hash(const Theta& th) {
    Fnv1a h;
    h.update(th.params);
    h.update_value(th.temperature);
    h.update_value(th.version);
    return h.digest();
}

inline nlohmann::json theta_to_json(const Theta& th) {
    return {{"schema", std::string(kThetaSchema)},
            {"schema_hash", theta_schema_hash()},
            {"inputs", th.arch.inputs},
            {"hidden", th.arch.hidden},
            {"classes", th.arch.classes},
            {"markers", th.arch.markers},
            {"dropout", th.arch.dropout},
            {"temperature", th.temperature},
            {"version", th.version},
            {"params", base64::encode(th.params.data(), th.params.size() * sizeof(double))}};
}

inline Theta theta_from_json(const nlohmann::json& j) {
    if (j.at("schema") != kThetaSchema || j.at("schema_hash") != theta_schema_hash())
        throw ConfigError("theta checkpoint schema mismatch");
    Theta th;
    th.arch.inputs = j.at("inputs");
    th.arch.hidden = j.at("hidden");
    th.arch.classes = j.at("classes");
    th.arch.markers = j.at("markers");
    th.arch.dropout = j.at("dropout");
    th.arch.validate();
    th.temperature = j.at("temperature");
    th.version = j.at("version");
    const auto raw = base64::decode(j.at("params").get<std::string>());
    if (raw.size() != th.arch.size() * sizeof(double)) throw ConfigError("theta checkpoint has wrong parameter count");
    th.params.resize(th.arch.size());
    std::memcpy(th.params.data(), raw.data(), raw.size());
    return th;
}

}  // namespace sci::interp
