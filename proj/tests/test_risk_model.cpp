#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "orl/error.hpp"
#include "orl/experiment.hpp"
#include "orl/risk_model.hpp"
#include "orl/rng.hpp"

using orl::risk::RiskScenario;
using orl::risk::ThreeActionScenario;

namespace {

RiskScenario one(double p, double q, double r) { return {p, {{q, r}}}; }

// Group-advantage oracle: success earns 1 - P(success), failure earns -P(success).
double branch_oracle(double p, double q, double r) {
    const double success = 1.0 - p - q * r;
    return q * (1.0 - p - r) * (1.0 - success) + q * (p + r) * (0.0 - success);
}

TEST(BranchProbs, HandComputedCase) {
    const auto b = orl::risk::branch_probs(one(0.3, 0.5, 0.2), 0);
    EXPECT_NEAR(b.no_mistake_success, 0.35, 1e-15);
    EXPECT_NEAR(b.no_mistake_fail, 0.15, 1e-15);
    EXPECT_NEAR(b.mistake_success, 0.25, 1e-15);
    EXPECT_NEAR(b.mistake_fail, 0.25, 1e-15);
    EXPECT_NEAR(b.sum(), 1.0, 1e-12);
}

TEST(BranchProbs, NeverTakenAndDeterministic) {
    const auto never = orl::risk::branch_probs(one(0.3, 0.0, 0.2), 0);
    EXPECT_DOUBLE_EQ(never.no_mistake_success, 0.7);
    EXPECT_DOUBLE_EQ(never.no_mistake_fail, 0.3);
    EXPECT_EQ(never.mistake_success, 0.0);
    EXPECT_EQ(never.mistake_fail, 0.0);
    const auto always = orl::risk::branch_probs(one(0.0, 1.0, 0.0), 0);
    EXPECT_EQ(always.mistake_success, 1.0);
    EXPECT_EQ(always.no_mistake_success + always.no_mistake_fail + always.mistake_fail, 0.0);
}

TEST(BranchProbs, RandomScenariosStayInRangeAndSumToOne) {
    auto rng = orl::make_stream(11, "test-branches");
    for (int i = 0; i < 2000; ++i) {
        const double p = rng.uniform();
        const double q = rng.uniform();
        const double r = -p + rng.uniform();  // p + r in [0, 1)
        const auto b = orl::risk::branch_probs(one(p, q, r), 0);
        for (double v : {b.no_mistake_success, b.no_mistake_fail, b.mistake_success, b.mistake_fail}) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        ASSERT_NEAR(b.sum(), 1.0, 1e-12);
    }
}

TEST(BranchProbs, RejectsOutOfRangeInputs) {
    EXPECT_THROW(orl::risk::branch_probs(one(1.2, 0.5, 0.0), 0), orl::InvalidInput);
    EXPECT_THROW(orl::risk::branch_probs(one(0.3, -0.1, 0.0), 0), orl::InvalidInput);
    EXPECT_THROW(orl::risk::branch_probs(one(0.9, 0.5, 0.2), 0), orl::InvalidInput);
    EXPECT_THROW(orl::risk::branch_probs(one(0.3, 0.5, 0.2), 1), orl::InvalidInput);
    RiskScenario two{0.1, {{0.6, 0.0}, {0.6, 0.0}}};
    EXPECT_THROW(two.validate(), orl::InvalidInput);
    try {
        orl::risk::branch_probs(one(0.9, 0.5, 0.2), 0);
    } catch (const orl::InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("p + r"), std::string::npos) << e.what();
    }
}

TEST(SuccessProb, MatchesSuccessBranches) {
    EXPECT_NEAR(orl::risk::success_prob(one(0.3, 0.5, 0.2), 0), 0.6, 1e-15);
    EXPECT_DOUBLE_EQ(orl::risk::success_prob(one(0.3, 0.0, 0.2), 0), 0.7);
    EXPECT_DOUBLE_EQ(orl::risk::success_prob(one(0.3, 0.4, 0.0), 0), 0.7);
    const auto b = orl::risk::branch_probs(one(0.2, 0.35, 0.4), 0);
    EXPECT_NEAR(orl::risk::success_prob(one(0.2, 0.35, 0.4), 0), b.no_mistake_success + b.mistake_success, 1e-12);
}

TEST(ExpectedAdvantage, HandExample) {
    for (double p : {0.0, 0.3, 0.7}) {
        EXPECT_NEAR(orl::risk::expected_advantage(one(p, 0.5, 0.2), 0), -0.05, 1e-15);
        EXPECT_NEAR(branch_oracle(p, 0.5, 0.2), -0.05, 1e-15);
    }
    EXPECT_EQ(orl::risk::expected_advantage(one(0.3, 1.0, 0.2), 0), 0.0);
    EXPECT_EQ(orl::risk::expected_advantage(one(0.3, 0.4, 0.0), 0), 0.0);
}

TEST(ExpectedAdvantage, MatchesBranchOracleOnGrid) {
    const int n = 20;
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const double p = i / double(n - 1);
                const double q = j / double(n - 1);
                const double r = k / double(n - 1) * (1.0 - p);
                const auto s = one(p, q, r);
                worst = std::max(worst, std::abs(orl::risk::expected_advantage(s, 0) - branch_oracle(p, q, r)));
                worst = std::max(worst, std::abs(orl::risk::enumerated_expected_advantage(s, 0) - branch_oracle(p, q, r)));
            }
    EXPECT_LE(worst, 1e-12);
}

TEST(ExpectedAdvantage, SignLaw) {
    for (int j = 0; j <= 20; ++j)
        for (int k = 0; k <= 20; ++k) {
            const double q = j / 20.0, r = k / 20.0 * 0.7;
            const double a = orl::risk::expected_advantage(one(0.3, q, r), 0);
            if (q > 0.0 && q < 1.0 && r > 0.0)
                EXPECT_LT(a, 0.0) << q << " " << r;
            else
                EXPECT_EQ(a, 0.0) << q << " " << r;
        }
}

TEST(ThreeAction, HandExampleAndZeroSum) {
    const ThreeActionScenario t{0.3, 0.5, 0.2, 0.3, 0.1};
    const auto a = orl::risk::three_action_advantages(t);
    EXPECT_NEAR(a.a1, -0.05, 1e-15);
    EXPECT_NEAR(a.a2, 0.0, 1e-15);
    EXPECT_NEAR(a.a3, 0.05, 1e-15);
    // Independent evaluation of the three closed forms.
    const double q = 0.5, r = 0.2, qh = 0.3, rh = 0.1;
    EXPECT_NEAR(a.a3, (1 - q - qh) * (q * r - qh * rh / (q + qh - 1)), 1e-15);
    EXPECT_NEAR(orl::risk::p1_increase_condition(t), -0.052, 1e-15);
    EXPECT_NEAR(orl::risk::gap_widening_value(t), 0.10, 1e-15);
}

TEST(ThreeAction, SecondExample) {
    const ThreeActionScenario t{0.5, 0.05, 0.01, 0.6, 0.2};
    EXPECT_NEAR(t.third_action_risk(), -0.12 / 0.35, 1e-15);
    const auto a = orl::risk::three_action_advantages(t);
    EXPECT_NEAR(a.a1, -0.000475, 1e-15);
    EXPECT_NEAR(a.a2, -0.1197, 1e-15);
    EXPECT_NEAR(a.a3, 0.120175, 1e-15);
    EXPECT_NEAR(orl::risk::p1_increase_condition(t), 0.02365, 1e-15);
    EXPECT_NEAR(orl::risk::p1_first_order_drift(t), 0.0293075, 1e-15);
    EXPECT_THROW(orl::risk::three_action_advantages({0.5, 0.05, 0.01, 0.9, 0.5}), orl::InvalidInput);
}

TEST(ThreeAction, RisklessWorldAndBoundaries) {
    const auto a = orl::risk::three_action_advantages({0.3, 0.4, 0.0, 0.3, 0.0});
    EXPECT_EQ(a.a1, 0.0);
    EXPECT_EQ(a.a2, 0.0);
    EXPECT_EQ(a.a3, 0.0);
    EXPECT_NEAR(orl::risk::detail::p1_increase_condition(0.5, 0.2, 0.5, 0.1), 0.0, 1e-15);
    EXPECT_NEAR(orl::risk::gap_widening_value({0.0, 1.0 - 1e-9, 0.2, 0.0, 0.1}), 0.0, 1e-8);
    EXPECT_THROW(orl::risk::three_action_advantages({0.3, 0.6, 0.1, 0.4, 0.1}), orl::InvalidInput);
}

TEST(ThreeAction, RandomScenarioProperties) {
    auto rng = orl::make_stream(12, "test-three");
    for (int i = 0; i < 1000; ++i) {
        const auto t = orl::exp::sample_three_action(rng);
        const auto a = orl::risk::three_action_advantages(t);
        ASSERT_NEAR(a.a1 + a.a2 + a.a3, 0.0, 1e-12);
        ASSERT_GT(orl::risk::gap_widening_value(t), 0.0);
        ASSERT_NEAR(orl::risk::gap_widening_value(t), a.a3 - a.a1, 1e-12);
        // Drift oracle: logits move by C A_j, so d p1 / (C p1) = A1 - sum_j p_j A_j.
        const double p3 = 1.0 - t.q - t.q_hat;
        const double mean = t.q * a.a1 + t.q_hat * a.a2 + p3 * a.a3;
        ASSERT_NEAR(orl::risk::p1_first_order_drift(t), a.a1 - mean, 1e-12);
    }
}

TEST(DangerZone, RootsForDefaultPair) {
    const auto roots = orl::risk::danger_zone_roots(0.2, 0.01);
    ASSERT_EQ(roots.size(), 2u);
    EXPECT_NEAR(roots[0], (1 - std::sqrt(1 - 4 * 0.01 / 0.2)) / 2, 1e-12);
    EXPECT_NEAR(roots[0], 0.052786, 1e-6);
    EXPECT_NEAR(roots[1], 0.947214, 1e-6);
    for (double q : roots) EXPECT_NEAR(q * 0.2 * (1 - q), 0.01, 1e-10);
}

TEST(DangerZone, RootsAgreeWithSignChangeScan) {
    const double r = 0.3, c = 0.02;
    std::vector<double> scan;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double a = i / double(n), b = (i + 1) / double(n);
        if ((c - a * r * (1 - a)) * (c - b * r * (1 - b)) < 0) scan.push_back(0.5 * (a + b));
    }
    const auto roots = orl::risk::danger_zone_roots(r, c);
    ASSERT_EQ(roots.size(), scan.size());
    for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_NEAR(roots[i], scan[i], 1e-5);
}

TEST(DangerZone, DegenerateCases) {
    const auto dbl = orl::risk::danger_zone_roots(0.2, 0.05);
    ASSERT_EQ(dbl.size(), 1u);
    EXPECT_DOUBLE_EQ(dbl[0], 0.5);
    const auto none = orl::risk::danger_zone_roots(0.2, 0.06);
    EXPECT_TRUE(none.empty());
    const auto ends = orl::risk::danger_zone_roots(0.2, 0.0);
    ASSERT_EQ(ends.size(), 2u);
    EXPECT_DOUBLE_EQ(ends[0], 0.0);
    EXPECT_DOUBLE_EQ(ends[1], 1.0);
    EXPECT_THROW(orl::risk::danger_zone_roots(0.0, 0.01), orl::InvalidInput);
    EXPECT_THROW(orl::risk::danger_zone_roots(0.2, -0.01), orl::InvalidInput);
}

TEST(EffectiveAdvantages, HandExample) {
    const auto e = orl::risk::effective_advantages({0.5, 0.5, 0.2, 1.0, 0.5});
    EXPECT_NEAR(e.good, 0.025, 1e-15);
    EXPECT_NEAR(e.flawed, -0.025, 1e-15);
    const auto none = orl::risk::effective_advantages({0.5, 0.5, 0.2, 1.0, 0.0});
    EXPECT_NEAR(none.good, 0.05, 1e-15);
    EXPECT_NEAR(none.flawed, -0.05, 1e-15);
    const auto near_one = orl::risk::effective_advantages({0.4, 0.4, 0.2, 1.0, 1.0 - 1e-12});
    EXPECT_NEAR(near_one.good, 0.0, 1e-12);
    EXPECT_NEAR(near_one.flawed, 0.0, 1e-12);
}

TEST(EffectiveAdvantages, GapScalesByOneMinusDelta) {
    auto rng = orl::make_stream(13, "test-pair");
    for (int i = 0; i < 500; ++i) {
        const orl::risk::CoupledPair pair{rng.uniform(), rng.uniform(), 0.01 + rng.uniform(), 0.1 + 3 * rng.uniform(),
                                          0.99 * rng.uniform()};
        const auto e = orl::risk::effective_advantages(pair);
        const double a1 = pair.good_advantage(), a2 = pair.flawed_advantage();
        EXPECT_NEAR(e.good - e.flawed, (1 - pair.delta) * (a1 - a2), 1e-15);
        EXPECT_GE(e.good, e.flawed);
    }
    EXPECT_THROW(orl::risk::effective_advantages({0.5, 0.5, 0.2, 1.0, 1.0}), orl::InvalidInput);
    EXPECT_THROW(orl::risk::effective_advantages({0.5, 0.5, -0.2, 1.0, 0.5}), orl::InvalidInput);
}

TEST(GroupNormalized, MatchesBruteForceOverGroupOutcomes) {
    // Enumerate every outcome of a group of 4 where member 0 carries the event.
    const double p = 0.2, q = 0.3, r = 0.25, eps = 1e-8;
    const double s = 1.0 - p - q * r;
    const int g = 4;
    double expect = 0.0;
    for (int focal = 0; focal < 4; ++focal) {  // 0: event+success, 1: event+fail, 2/3: no event
        const double pf = focal == 0 ? q * (1 - p - r) : focal == 1 ? q * (p + r) : 0.0;
        if (pf == 0.0) continue;
        const int focal_reward = focal == 0 ? 1 : 0;
        for (int mask = 0; mask < (1 << (g - 1)); ++mask) {
            double prob = pf;
            std::vector<double> rew{double(focal_reward)};
            for (int m = 0; m < g - 1; ++m) {
                const bool ok = (mask >> m) & 1;
                prob *= ok ? s : 1 - s;
                rew.push_back(ok ? 1.0 : 0.0);
            }
            double mean = 0.0;
            for (double v : rew) mean += v;
            mean /= g;
            double var = 0.0;
            for (double v : rew) var += (v - mean) * (v - mean);
            expect += prob * (rew[0] - mean) / (std::sqrt(var / g) + eps);
        }
    }
    EXPECT_NEAR(orl::risk::group_normalized_expected_advantage(p, q, r, g, eps), expect, 1e-12);
    EXPECT_LT(expect, 0.0);
}

}  // namespace
