#include <gtest/gtest.h>

#include "sci/metrics.hpp"

using namespace sci;
using namespace sci::metrics;

TEST(Metrics, AurocExamples) {
    EXPECT_EQ(*auroc(Vec{0.9, 0.8}, Vec{0.1, 0.2}), 1.0);
    EXPECT_EQ(*auroc(Vec{0.8, 0.3}, Vec{0.5, 0.1}), 0.75);
    EXPECT_EQ(*auroc(Vec{0.2, 0.4, 0.4}, Vec{0.4, 0.2, 0.4}), 0.5);
    EXPECT_FALSE(auroc(Vec{}, Vec{0.1}).has_value());
    EXPECT_EQ(*auroc_ranks(Vec{0.8, 0.3}, Vec{0.5, 0.1}), 0.75);
}

TEST(Metrics, PairCountMatchesRankSum) {
    Rng rng(17);
    std::uniform_int_distribution<int> n(1, 60), level(0, 9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 1000; ++t) {
        Vec e(n(rng)), c(n(rng));
        const bool ties = t % 2 == 0;
        for (auto& v : e) v = ties ? level(rng) / 10.0 : u(rng);
        for (auto& v : c) v = ties ? level(rng) / 10.0 : u(rng);
        ASSERT_NEAR(*auroc_pairs(e, c), *auroc_ranks(e, c), 1e-12);
    }
}

TEST(Metrics, RiskCoverage) {
    std::vector<Scored> eps{{0, 0.1, false}, {1, 0.2, false}, {2, 0.3, true}, {3, 0.4, true}};
    const Vec grid{0.5, 1.0};
    const auto rc = risk_coverage(eps, grid);
    EXPECT_EQ(rc[0].error, 0.0);
    EXPECT_EQ(rc[0].kept, 2u);
    EXPECT_EQ(rc[1].error, 0.5);
    const Vec g2{0.25, 0.5};
    for (const auto& p : risk_coverage(eps, g2)) EXPECT_EQ(p.error, 0.0);
}

TEST(Metrics, RiskCoverageTiesById) {
    std::vector<Scored> eps{{5, 0.1, true}, {2, 0.1, false}, {9, 0.5, true}};
    const Vec g{1.0 / 3};
    EXPECT_EQ(risk_coverage(eps, g)[0].error, 0.0);
}

TEST(Metrics, Allocation) {
    const auto a = allocation_stats(Vec{5, 5, 5}, Vec{5});
    EXPECT_EQ(*a.ratio, 1.0);
    const auto b = allocation_stats(Vec{2, 4}, Vec{9, 11});
    EXPECT_EQ(*b.correct_mean, 3.0);
    EXPECT_EQ(*b.wrong_mean, 10.0);
    EXPECT_NEAR(*b.ratio, 3.3333333333333335, 1e-15);
    const auto c = allocation_stats(Vec{3}, Vec{});
    EXPECT_FALSE(c.ratio.has_value());
    EXPECT_EQ(*c.correct_mean, 3.0);
}
