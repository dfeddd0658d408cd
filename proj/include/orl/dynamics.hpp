#pragma once

// Closed-form softmax-logit learning dynamics.
//
// A read-out layer trained by advantage-weighted SGD on a fixed feature vector
// moves each logit by z_i <- z_i + C * A_i, where C folds together the
// learning rate, the squared feature norm, the number of samples and 1/std.
// The simulators here iterate that map with advantages recomputed from the
// current probabilities.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "orl/risk_model.hpp"

namespace orl::dynamics {

/// Max-subtracted softmax. Throws InvalidInput on non-finite logits.
std::vector<double> softmax(std::span<const double> logits);

struct DynamicsState {
    std::vector<double> logits;
    double step_const = 1e-4;
    std::int64_t time = 0;

    std::vector<double> probs() const { return softmax(logits); }
    void validate() const;

    static DynamicsState from_probs(std::span<const double> probs, double step_const);
};

/// |sum(advantages)| above this is recorded as a zero-sum warning.
inline constexpr double kZeroSumTolerance = 1e-9;

/// z_i + C A_i for every i; time advances by one. Length mismatch throws.
DynamicsState logit_step(const DynamicsState& state, std::span<const double> advantages);

struct StepRecord {
    std::int64_t step = 0;
    std::vector<double> probs;
    std::vector<double> logits;
    std::vector<double> advantages;
    double condition_value = 0.0;
    bool zero_sum_warning = false;
};

struct DynamicsTrace {
    std::vector<StepRecord> records;
    std::size_t zero_sum_warnings = 0;
};

/// Long-format CSV: step,action_index,prob,logit,advantage,condition_value.
void write_trace_csv(std::ostream& out, const DynamicsTrace& trace);

struct ThreeActionRun {
    DynamicsTrace trace;
    /// z3 - z1 grew at every simulated step.
    bool gap_always_increasing = true;
    double min_gap_increment = 0.0;
    /// Step-0 change of p1 measured on the simulated softmax.
    double p1_step0_change = 0.0;
    double condition_at_start = 0.0;
    double drift_at_start = 0.0;
    /// Steps where |condition| exceeded the margin and sign(dp1) disagreed with it.
    std::size_t condition_sign_disagreements = 0;
    std::size_t condition_sign_checked = 0;
};

/// Margin on |p1_increase_condition| below which the sign comparison is skipped.
inline constexpr double kConditionMargin = 1e-4;

/// Iterates the three-action map. Starting probabilities are (q, q_hat, 1-q-q_hat);
/// p, r and r_hat stay fixed while the probabilities evolve.
ThreeActionRun simulate_three_action(const risk::ThreeActionScenario& t, double step_const, int steps);

struct CoupledPairRun {
    /// Per step: action_index 0 is the good sample, 1 the flawed one; advantages
    /// are the effective ones, condition_value is the flawed effective advantage.
    DynamicsTrace trace;
    std::vector<double> q1, q2, z1, z2;
    /// First t with q2(t+1) < q2(t) - 1e-12.
    std::optional<int> turning_point;
    /// exp(z1(t*) - z1(0)) at the turning point.
    double h1_growth_at_turn = 0.0;
    bool logit_gap_monotone = true;
    bool prob_gap_monotone = true;
};

/// Each sample is a binary softmax (target vs. the rest, other-logit mass 1);
/// logits move by C times the effective advantages.
CoupledPairRun simulate_coupled_pair(const risk::CoupledPair& pair, double step_const, int steps);

struct TurningPointReport {
    bool turning_found = false;
    int turning_step = -1;
    double empirical_ratio = 0.0;
    /// z2_hat - z1_hat, the initial logit lead of the flawed sample.
    double delta_zhat = 0.0;
    /// exp(0.5 ln(xi delta) + delta_zhat); 0 when xi delta == 0.
    double candidate_log_form = 0.0;
    /// exp(0.5 xi delta + delta_zhat).
    double candidate_linear_form = 0.0;
    double rel_dev_log_form = 0.0;
    double rel_dev_linear_form = 0.0;
    /// q2(1-q2) / (q1(1-q1)) at the turning point; the exact turning condition
    /// is that this reaches xi delta.
    double variance_ratio_at_turn = 0.0;
};

/// Requires q1, q2 > 0.5. A run without a turning point is reported, not thrown.
TurningPointReport theorem3_threshold_check(const risk::CoupledPair& pair, double step_const, int steps);

/// Logit shift that moves a probability p to target: logit(target) - logit(p).
double correction_logit_shift(double current_prob, double target_prob);

/// Lowers the target action's logit so its probability becomes target_prob.
/// Only suppression is allowed: target_prob must be in (0, current prob).
DynamicsState apply_correction(const DynamicsState& state, std::size_t target_action, double target_prob);

struct PushRun {
    std::vector<double> q;
    double final_q = 0.0;
};

/// Scalar danger-zone dynamics on one action: its logit moves by
/// C (push + q r (q - 1)) while the other logits stay fixed.
PushRun simulate_push(const DynamicsState& state, std::size_t action, double risk, double push, int steps,
                      bool keep_trace = false);

}  // namespace orl::dynamics
