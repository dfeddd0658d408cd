#include "orl/risk_model.hpp"

#include <cmath>
#include <sstream>

#include "orl/error.hpp"

namespace orl::risk {
namespace {

constexpr double kSumTol = 1e-12;

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

std::string describe(const char* name, double value) {
    std::ostringstream os;
    os.precision(17);
    os << name << " = " << value;
    return os.str();
}

const ActionRisk& action_at(const RiskScenario& s, std::size_t i) {
    if (i >= s.actions.size()) {
        throw InvalidInput("action_index " + std::to_string(i) + " out of range (scenario has " +
                           std::to_string(s.actions.size()) + " actions)");
    }
    return s.actions[i];
}

}  // namespace

void RiskScenario::validate() const {
    ORL_REQUIRE(in_unit(base_fail_prob), "base_fail_prob must lie in [0,1]: " + describe("p", base_fail_prob));
    double total = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const auto& a = actions[i];
        const std::string tag = "action " + std::to_string(i) + ": ";
        ORL_REQUIRE(in_unit(a.select_prob), tag + "select_prob must lie in [0,1]: " + describe("q", a.select_prob));
        ORL_REQUIRE(std::isfinite(a.risk), tag + "risk must be finite");
        const double fail = base_fail_prob + a.risk;
        ORL_REQUIRE(fail >= 0.0 && fail <= 1.0, tag + "p + r must lie in [0,1]: " + describe("p + r", fail));
        total += a.select_prob;
    }
    ORL_REQUIRE(total <= 1.0 + kSumTol, "sum of select_prob must not exceed 1: " + describe("sum q", total));
}

BranchProbs branch_probs(const RiskScenario& s, std::size_t action_index) {
    s.validate();
    const auto& a = action_at(s, action_index);
    const double p = s.base_fail_prob, q = a.select_prob, r = a.risk;
    return {(1.0 - q) * (1.0 - p), (1.0 - q) * p, q * (1.0 - p - r), q * (p + r)};
}

double success_prob(const RiskScenario& s, std::size_t action_index) {
    s.validate();
    const auto& a = action_at(s, action_index);
    return 1.0 - s.base_fail_prob - a.select_prob * a.risk;
}

double expected_advantage(const RiskScenario& s, std::size_t action_index) {
    s.validate();
    const auto& a = action_at(s, action_index);
    return a.select_prob * a.risk * (a.select_prob - 1.0);
}

double enumerated_expected_advantage(const RiskScenario& s, std::size_t action_index) {
    const BranchProbs b = branch_probs(s, action_index);
    const double mean_reward = b.no_mistake_success + b.mistake_success;
    const double adv_success = 1.0 - mean_reward;
    const double adv_fail = 0.0 - mean_reward;
    // Only the mistake branches carry the action.
    return b.mistake_success * adv_success + b.mistake_fail * adv_fail;
}

double ThreeActionScenario::third_action_risk() const { return q_hat * r_hat / (q + q_hat - 1.0); }

void ThreeActionScenario::validate() const {
    ORL_REQUIRE(in_unit(p), "p must lie in [0,1]: " + describe("p", p));
    ORL_REQUIRE(in_unit(q), "q must lie in [0,1]: " + describe("q", q));
    ORL_REQUIRE(in_unit(q_hat), "q_hat must lie in [0,1]: " + describe("q_hat", q_hat));
    ORL_REQUIRE(q + q_hat < 1.0, "q + q_hat must be < 1 so action 3 has positive probability: " +
                                     describe("q + q_hat", q + q_hat));
    ORL_REQUIRE(std::isfinite(r) && p + r >= 0.0 && p + r <= 1.0, "p + r must lie in [0,1]: " + describe("p + r", p + r));
    ORL_REQUIRE(std::isfinite(r_hat) && p + r_hat >= 0.0 && p + r_hat <= 1.0,
                "p + r_hat must lie in [0,1]: " + describe("p + r_hat", p + r_hat));
    const double r3 = third_action_risk();
    ORL_REQUIRE(p + r3 >= 0.0 && p + r3 <= 1.0, "p + r3 must lie in [0,1]: " + describe("p + r3", p + r3));
}

namespace detail {

ThreeActionAdvantages three_action_advantages(double q, double r, double q_hat, double r_hat) {
    const double qr = q * r;
    return {qr * (q - 1.0), q_hat * (qr - r_hat), (1.0 - q - q_hat) * (qr - q_hat * r_hat / (q + q_hat - 1.0))};
}

double p1_increase_condition(double q, double r, double q_hat, double r_hat) {
    return (2.0 * q_hat - 1.0) * q_hat * r_hat + 2.0 * (q_hat + q - 1.0) * q * r;
}

}  // namespace detail

ThreeActionAdvantages three_action_advantages(const ThreeActionScenario& t) {
    t.validate();
    return detail::three_action_advantages(t.q, t.r, t.q_hat, t.r_hat);
}

double p1_increase_condition(const ThreeActionScenario& t) {
    t.validate();
    return detail::p1_increase_condition(t.q, t.r, t.q_hat, t.r_hat);
}

double p1_first_order_drift(const ThreeActionScenario& t) {
    t.validate();
    const double q = t.q, r = t.r, qh = t.q_hat, rh = t.r_hat;
    return (q + 2.0 * qh - 1.0) * qh * rh - 2.0 * q * r * (1.0 - q) * (1.0 - q) + 2.0 * q * qh * r * (1.0 - q - qh);
}

double gap_widening_value(const ThreeActionScenario& t) {
    t.validate();
    return (2.0 - 2.0 * t.q - t.q_hat) * t.q * t.r + t.q_hat * t.r_hat;
}

std::vector<double> danger_zone_roots(double risk, double push) {
    ORL_REQUIRE(std::isfinite(risk) && risk > 0.0, "risk must be > 0: " + describe("r", risk));
    ORL_REQUIRE(std::isfinite(push) && push >= 0.0, "push must be >= 0: " + describe("c", push));
    const double disc = 1.0 - 4.0 * push / risk;
    if (disc < -1e-15) return {};
    if (disc <= 1e-15) return {0.5};
    const double upper = 0.5 * (1.0 + std::sqrt(disc));
    // Product of the roots is push / risk; avoids cancellation in the lower root.
    const double lower = (push / risk) / upper;
    return {lower, upper};
}

void CoupledPair::validate() const {
    ORL_REQUIRE(in_unit(q1), "q1 must lie in [0,1]: " + describe("q1", q1));
    ORL_REQUIRE(in_unit(q2), "q2 must lie in [0,1]: " + describe("q2", q2));
    ORL_REQUIRE(std::isfinite(r2) && r2 > 0.0, "r2 must be > 0: " + describe("r2", r2));
    ORL_REQUIRE(std::isfinite(xi) && xi > 0.0, "xi must be > 0: " + describe("xi", xi));
    ORL_REQUIRE(std::isfinite(delta) && delta >= 0.0 && delta < 1.0, "delta must lie in [0,1): " + describe("delta", delta));
}

double CoupledPair::good_advantage() const { return xi * r2 * q1 * (1.0 - q1); }

double CoupledPair::flawed_advantage() const { return q2 * r2 * (q2 - 1.0); }

EffectiveAdvantages effective_advantages(const CoupledPair& pair) {
    pair.validate();
    const double a1 = pair.good_advantage();
    const double a2 = pair.flawed_advantage();
    return {a1 + pair.delta * a2, a2 + pair.delta * a1};
}

double group_normalized_expected_advantage(double p, double q, double r, int group_size, double epsilon_std) {
    ORL_REQUIRE(group_size >= 2, "group_size must be >= 2");
    ORL_REQUIRE(epsilon_std > 0.0, "epsilon_std must be > 0");
    RiskScenario s{p, {{q, r}}};
    s.validate();
    const double success = 1.0 - p - q * r;
    const int others = group_size - 1;
    const double n = static_cast<double>(group_size);

    // binom[k] = P(k successes among the other group members).
    std::vector<double> binom(others + 1, 0.0);
    for (int k = 0; k <= others; ++k) {
        binom[k] = std::exp(std::lgamma(others + 1.0) - std::lgamma(k + 1.0) - std::lgamma(others - k + 1.0)) *
                   std::pow(success, k) * std::pow(1.0 - success, others - k);
    }
    auto advantage = [&](int own, int k) {
        const double mean = (own + k) / n;
        const double sd = std::sqrt(mean * (1.0 - mean));
        return (own - mean) / (sd + epsilon_std);
    };
    const double mistake_success = q * (1.0 - p - r);
    const double mistake_fail = q * (p + r);
    double total = 0.0;
    for (int k = 0; k <= others; ++k) {
        total += binom[k] * (mistake_success * advantage(1, k) + mistake_fail * advantage(0, k));
    }
    return total;
}

}  // namespace orl::risk
