#pragma once

// Sequential MC-dropout inference: sample until the running mean is clear
// enough for `patience` consecutive steps, or abstain at T_max.

#include <functional>

#include "sci/interpreter.hpp"

namespace sci::mc {

struct Policy {
    double sp_star = 0.85;
    std::size_t t_max = 25;
    std::size_t patience = 3;
    bool sp_on_running_mean = true;

    void validate() const {
        if (t_max < 1) throw ConfigError("T_max must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (!(sp_star >= 0.0 && sp_star <= 1.0)) throw ConfigError("sp_star must lie in [0,1]");
    }
};

inline Policy mnist_policy() { return {0.95, 15, 1, true}; }
inline Policy bearing_policy() { return {0.85, 25, 3, true}; }

enum class Outcome { stopped, abstained };

inline std::string_view to_string(Outcome o) { return o == Outcome::stopped ? "stopped" : "abstained"; }

struct Episode {
    std::vector<Vec> passes;
    Vec mean;
    Vec sp;
    Vec delta_sp;
    std::size_t steps_used = 0;
    Outcome outcome = Outcome::abstained;
    int prediction = -1;
    double final_sp = 0.0;
    double final_delta = 0.0;
};

/// One stochastic predictive distribution per call.
using Sampler = std::function<Vec(Rng&)>;

inline int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline Episode run_episode(const Sampler& sample, const Policy& pol, std::uint64_t seed) {
    pol.validate();
    Rng rng(seed);
    Episode ep;
    std::size_t streak = 0;
    Vec sum;
    for (std::size_t t = 1; t <= pol.t_max; ++t) {
        Vec p = sample(rng);
        if (sum.empty()) sum.assign(p.size(), 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) sum[i] += p[i];
        ep.mean = sum;
        for (auto& v : ep.mean) v /= static_cast<double>(t);
        const double s = interp::clarity(pol.sp_on_running_mean ? ep.mean : p);
        ep.passes.push_back(std::move(p));
        ep.sp.push_back(s);
        ep.delta_sp.push_back(std::abs(pol.sp_star - s));
        ep.steps_used = t;
        streak = s >= pol.sp_star ? streak + 1 : 0;
        if (streak >= pol.patience) {
            ep.outcome = Outcome::stopped;
            break;
        }
    }
    ep.prediction = argmax(ep.mean);
    ep.final_sp = ep.sp.back();
    ep.final_delta = ep.delta_sp.back();
    return ep;
}

inline Sampler task_sampler(const interp::Theta& th, std::span<const double> x) {
    return [&th, x](Rng& rng) { return interp::forward(th, x, true, rng).y; };
}

inline Episode run_episode(std::span<const double> x, const interp::Theta& th, const Policy& pol, std::uint64_t seed) {
    return run_episode(task_sampler(th, x), pol, seed);
}

/// Terminal |SP* - SP|; larger means more suspect.
inline double safety_score(const Episode& ep) { return ep.final_delta; }

struct FixedK {
    Vec mean;
    int prediction = -1;
    std::size_t cost = 0;
};

inline FixedK fixed_k(const Sampler& sample, std::size_t k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("K must be >= 1");
    Rng rng(seed);
    FixedK out;
    for (std::size_t i = 0; i < k; ++i) {
        Vec p = sample(rng);
        if (out.mean.empty()) out.mean.assign(p.size(), 0.0);
        for (std::size_t j = 0; j < p.size(); ++j) out.mean[j] += p[j] / static_cast<double>(k);
    }
    out.prediction = argmax(out.mean);
    out.cost = k;
    return out;
}

inline FixedK fixed_k(std::span<const double> x, const interp::Theta& th, std::size_t k, std::uint64_t seed) {
    return fixed_k(task_sampler(th, x), k, seed);
}

}  // namespace sci::mc
