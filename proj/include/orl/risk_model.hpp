#pragma once

// Analytic outcome model for flawed actions under outcome-only rewards.
//
// A task fails with base probability p. A flawed action taken with
// probability q raises the failure probability by its risk r. Advantages are
// group-relative rewards without std normalization; every function here is a
// pure function of its value-typed inputs.

#include <cstddef>
#include <vector>

namespace orl::risk {

struct ActionRisk {
    double select_prob = 0.0;  // q_i
    double risk = 0.0;         // r_i, signed
};

/// Base failure probability plus per-action selection probabilities and
/// risks. Mass 1 - sum(q_i) belongs to an implicit riskless "other" action.
struct RiskScenario {
    double base_fail_prob = 0.0;
    std::vector<ActionRisk> actions;

    /// Throws InvalidInput naming the violated bound.
    void validate() const;
};

/// The four outcome branches for a single action.
struct BranchProbs {
    double no_mistake_success = 0.0;
    double no_mistake_fail = 0.0;
    double mistake_success = 0.0;
    double mistake_fail = 0.0;

    double sum() const { return no_mistake_success + no_mistake_fail + mistake_success + mistake_fail; }
};

BranchProbs branch_probs(const RiskScenario& s, std::size_t action_index);

/// 1 - p - q r.
double success_prob(const RiskScenario& s, std::size_t action_index);

/// Closed form q r (q - 1).
double expected_advantage(const RiskScenario& s, std::size_t action_index);

/// Same quantity computed by enumerating the four branches and weighting the
/// (std-free) group advantage of each outcome by the mistake indicator.
double enumerated_expected_advantage(const RiskScenario& s, std::size_t action_index);

/// Three mutually exclusive actions. Action 3 takes the remaining mass and
/// carries the risk that keeps the failure probability of actions 2 and 3 at p.
struct ThreeActionScenario {
    double p = 0.0;
    double q = 0.0;
    double r = 0.0;
    double q_hat = 0.0;
    double r_hat = 0.0;

    double third_action_prob() const { return 1.0 - q - q_hat; }
    /// q_hat r_hat / (q + q_hat - 1).
    double third_action_risk() const;
    void validate() const;
};

/// Probability-weighted expected advantages (already multiplied by the
/// selection probability of each action); they sum to zero.
struct ThreeActionAdvantages {
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;
};

ThreeActionAdvantages three_action_advantages(const ThreeActionScenario& t);

/// (2 q_hat - 1) q_hat r_hat + 2 (q_hat + q - 1) q r. Nonnegative values are
/// the stated requirement for action 1's probability to rise.
double p1_increase_condition(const ThreeActionScenario& t);

/// Exact first-order drift of p1 under the logit update z_i += C A_i, divided
/// by C p1: A1 - sum_j p_j A_j. Its sign is the sign of the next-step change
/// of p1 for small C.
double p1_first_order_drift(const ThreeActionScenario& t);

/// (2 - 2q - q_hat) q r + q_hat r_hat = A3 - A1, the per-step growth of the
/// logit gap z3 - z1 in units of the step constant.
double gap_widening_value(const ThreeActionScenario& t);

/// Roots in [0,1] of q r (1 - q) = push, ascending. Empty when push > r/4,
/// a single 0.5 when push == r/4.
std::vector<double> danger_zone_roots(double risk, double push);

/// A good sample (risk r1 = -xi r2) coupled with a flawed one (risk r2 > 0);
/// each gradient step on one sample leaks a fraction delta into the other.
struct CoupledPair {
    double q1 = 0.5;
    double q2 = 0.5;
    double r2 = 0.1;
    double xi = 1.0;
    double delta = 0.0;

    void validate() const;
    /// xi r2 q1 (1 - q1) >= 0.
    double good_advantage() const;
    /// r2 q2 (q2 - 1) <= 0.
    double flawed_advantage() const;
};

struct EffectiveAdvantages {
    double good = 0.0;    // A1 + delta A2
    double flawed = 0.0;  // A2 + delta A1
};

EffectiveAdvantages effective_advantages(const CoupledPair& pair);

/// Exact expectation of A * 1{mistake} when advantages are normalized within
/// groups of `group_size` i.i.d. episodes: A = (s - mean) / (std + eps) with
/// the population std of the group's binary rewards. Computed by summing over
/// the binomial law of the other group members.
double group_normalized_expected_advantage(double p, double q, double r, int group_size,
                                           double epsilon_std);

namespace detail {
// Same formulas without validation, used inside simulators where the
// probabilities drift away from the scenario that seeded them.
ThreeActionAdvantages three_action_advantages(double q, double r, double q_hat, double r_hat);
double p1_increase_condition(double q, double r, double q_hat, double r_hat);
}  // namespace detail

}  // namespace orl::risk
