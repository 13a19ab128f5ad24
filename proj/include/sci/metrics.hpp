#pragma once

#include <optional>

#include "sci/common.hpp"

namespace sci::metrics {

/// P(error score > correct score) + 0.5 P(tie), by brute-force pair counting.
inline std::optional<double> auroc_pairs(std::span<const double> err, std::span<const double> ok) {
    if (err.empty() || ok.empty()) return std::nullopt;
    double wins = 0.0;
    for (double e : err)
        for (double c : ok) wins += e > c ? 1.0 : (e == c ? 0.5 : 0.0);
    return wins / (static_cast<double>(err.size()) * static_cast<double>(ok.size()));
}

/// Same statistic from the Mann-Whitney rank sum with mid-ranks for ties.
inline std::optional<double> auroc_ranks(std::span<const double> err, std::span<const double> ok) {
    if (err.empty() || ok.empty()) return std::nullopt;
    struct Item {
        double s;
        bool e;
    };
    std::vector<Item> all;
    all.reserve(err.size() + ok.size());
    for (double v : err) all.push_back({v, true});
    for (double v : ok) all.push_back({v, false});
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.s < b.s; });
    // exact integer arithmetic on doubled ranks keeps the result bit-stable
    long double rank_sum2 = 0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].s == all[i].s) ++j;
        const long double mid2 = static_cast<long double>(i + 1 + j);  // 2 * mid-rank
        for (std::size_t k = i; k < j; ++k)
            if (all[k].e) rank_sum2 += mid2;
        i = j;
    }
    const long double n1 = static_cast<long double>(err.size()), n0 = static_cast<long double>(ok.size());
    const long double u2 = rank_sum2 - n1 * (n1 + 1);
    return static_cast<double>(u2 / (2 * n1 * n0));
}

inline std::optional<double> auroc(std::span<const double> err, std::span<const double> ok) {
    if (err.size() * ok.size() <= 4096) return auroc_pairs(err, ok);
    return auroc_ranks(err, ok);
}

struct Scored {
    std::uint64_t id = 0;
    double score = 0.0;
    bool error = false;
};

struct CoveragePoint {
    double coverage = 0.0;
    std::size_t kept = 0;
    double error = 0.0;
};

/// Keeps the round(c n) lowest-score episodes (ties by id) per level.
inline std::vector<CoveragePoint> risk_coverage(std::vector<Scored> eps, std::span<const double> grid) {
    std::sort(eps.begin(), eps.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score < b.score : a.id < b.id;
    });
    std::vector<CoveragePoint> out;
    for (double c : grid) {
        const auto kept = static_cast<std::size_t>(std::llround(std::clamp(c, 0.0, 1.0) * static_cast<double>(eps.size())));
        std::size_t errs = 0;
        for (std::size_t i = 0; i < kept; ++i) errs += eps[i].error;
        out.push_back({c, kept, kept ? static_cast<double>(errs) / static_cast<double>(kept) : 0.0});
    }
    return out;
}

inline Vec coverage_grid(std::size_t points = 20) {
    Vec g;
    for (std::size_t i = 1; i <= points; ++i) g.push_back(static_cast<double>(i) / static_cast<double>(points));
    return g;
}

struct Allocation {
    std::optional<double> correct_mean;
    std::optional<double> wrong_mean;
    std::optional<double> ratio;
};

inline Allocation allocation_stats(std::span<const double> steps_correct, std::span<const double> steps_wrong) {
    Allocation a;
    if (!steps_correct.empty()) a.correct_mean = math::mean(steps_correct);
    if (!steps_wrong.empty()) a.wrong_mean = math::mean(steps_wrong);
    if (a.correct_mean && a.wrong_mean && *a.correct_mean > 0) a.ratio = *a.wrong_mean / *a.correct_mean;
    return a;
}

}  // namespace sci::metrics
