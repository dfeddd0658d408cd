#include "orl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "orl/csv.hpp"
#include "orl/error.hpp"

namespace orl::dynamics {
namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

StepRecord make_record(const DynamicsState& s, std::vector<double> probs, std::vector<double> adv, double condition) {
    StepRecord rec;
    rec.step = s.time;
    rec.probs = std::move(probs);
    rec.logits = s.logits;
    const double sum = std::accumulate(adv.begin(), adv.end(), 0.0);
    rec.zero_sum_warning = std::abs(sum) > kZeroSumTolerance;
    rec.advantages = std::move(adv);
    rec.condition_value = condition;
    return rec;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
    ORL_REQUIRE(!logits.empty(), "softmax of an empty logit vector");
    for (double z : logits) ORL_REQUIRE(std::isfinite(z), "softmax requires finite logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

void DynamicsState::validate() const {
    ORL_REQUIRE(!logits.empty(), "DynamicsState needs at least one logit");
    for (double z : logits) ORL_REQUIRE(std::isfinite(z), "DynamicsState logits must be finite");
    ORL_REQUIRE(std::isfinite(step_const) && step_const > 0.0, "step_const must be > 0");
}

DynamicsState DynamicsState::from_probs(std::span<const double> probs, double step_const) {
    DynamicsState s;
    s.step_const = step_const;
    s.logits.reserve(probs.size());
    for (double p : probs) {
        ORL_REQUIRE(p > 0.0 && p <= 1.0, "from_probs needs probabilities in (0,1]");
        s.logits.push_back(std::log(p));
    }
    s.validate();
    return s;
}

DynamicsState logit_step(const DynamicsState& state, std::span<const double> advantages) {
    ORL_REQUIRE(advantages.size() == state.logits.size(),
                "advantage vector length " + std::to_string(advantages.size()) + " does not match " +
                    std::to_string(state.logits.size()) + " logits");
    DynamicsState next = state;
    for (std::size_t i = 0; i < advantages.size(); ++i) next.logits[i] += state.step_const * advantages[i];
    ++next.time;
    return next;
}

void write_trace_csv(std::ostream& out, const DynamicsTrace& trace) {
    CsvWriter csv(out);
    csv.field("step").field("action_index").field("prob").field("logit").field("advantage").field("condition_value");
    csv.end_row();
    for (const auto& rec : trace.records) {
        for (std::size_t i = 0; i < rec.probs.size(); ++i) {
            csv.field(static_cast<long long>(rec.step)).field(i).field(rec.probs[i]).field(rec.logits[i]);
            csv.field(i < rec.advantages.size() ? rec.advantages[i] : 0.0).field(rec.condition_value);
            csv.end_row();
        }
    }
}

ThreeActionRun simulate_three_action(const risk::ThreeActionScenario& t, double step_const, int steps) {
    t.validate();
    ORL_REQUIRE(steps >= 1, "steps must be >= 1");
    ORL_REQUIRE(t.q > 0.0 && t.q_hat > 0.0, "simulation needs q > 0 and q_hat > 0 for finite logits");
    const double init[3] = {t.q, t.q_hat, t.third_action_prob()};
    DynamicsState state = DynamicsState::from_probs(init, step_const);

    ThreeActionRun run;
    run.condition_at_start = risk::p1_increase_condition(t);
    run.drift_at_start = risk::p1_first_order_drift(t);
    run.min_gap_increment = std::numeric_limits<double>::infinity();
    run.trace.records.reserve(static_cast<std::size_t>(steps) + 1);

    std::vector<double> probs = state.probs();
    for (int k = 0; k < steps; ++k) {
        const auto adv = risk::detail::three_action_advantages(probs[0], t.r, probs[1], t.r_hat);
        const double condition = risk::detail::p1_increase_condition(probs[0], t.r, probs[1], t.r_hat);
        std::vector<double> a = {adv.a1, adv.a2, adv.a3};
        DynamicsState next = logit_step(state, a);
        std::vector<double> next_probs = next.probs();

        const double gap_inc = (next.logits[2] - next.logits[0]) - (state.logits[2] - state.logits[0]);
        run.min_gap_increment = std::min(run.min_gap_increment, gap_inc);
        if (!(gap_inc > 0.0)) run.gap_always_increasing = false;

        const double dp1 = next_probs[0] - probs[0];
        if (k == 0) run.p1_step0_change = dp1;
        if (std::abs(condition) > kConditionMargin) {
            ++run.condition_sign_checked;
            if ((dp1 > 0.0) != (condition > 0.0)) ++run.condition_sign_disagreements;
        }

        auto rec = make_record(state, std::move(probs), std::move(a), condition);
        run.trace.zero_sum_warnings += rec.zero_sum_warning ? 1 : 0;
        run.trace.records.push_back(std::move(rec));
        state = std::move(next);
        probs = std::move(next_probs);
    }
    run.trace.records.push_back(make_record(state, probs, {0.0, 0.0, 0.0},
                                            risk::detail::p1_increase_condition(probs[0], t.r, probs[1], t.r_hat)));
    return run;
}

CoupledPairRun simulate_coupled_pair(const risk::CoupledPair& pair, double step_const, int steps) {
    pair.validate();
    ORL_REQUIRE(steps >= 1, "steps must be >= 1");
    ORL_REQUIRE(pair.q1 > 0.0 && pair.q1 < 1.0 && pair.q2 > 0.0 && pair.q2 < 1.0,
                "coupled-pair simulation needs q1, q2 strictly inside (0,1)");
    ORL_REQUIRE(std::isfinite(step_const) && step_const > 0.0, "step_const must be > 0");

    CoupledPairRun run;
    double z1 = logit(pair.q1), z2 = logit(pair.q2);
    const double z1_start = z1;
    risk::CoupledPair cur = pair;
    for (int k = 0; k <= steps; ++k) {
        cur.q1 = sigmoid(z1);
        cur.q2 = sigmoid(z2);
        run.q1.push_back(cur.q1);
        run.q2.push_back(cur.q2);
        run.z1.push_back(z1);
        run.z2.push_back(z2);
        const double a1 = cur.good_advantage(), a2 = cur.flawed_advantage();
        const double e1 = a1 + pair.delta * a2, e2 = a2 + pair.delta * a1;

        StepRecord rec;
        rec.step = k;
        rec.probs = {cur.q1, cur.q2};
        rec.logits = {z1, z2};
        rec.advantages = {e1, e2};
        rec.condition_value = e2;
        run.trace.records.push_back(std::move(rec));
        if (k == steps) break;

        const double nz1 = z1 + step_const * e1, nz2 = z2 + step_const * e2;
        const double nq1 = sigmoid(nz1), nq2 = sigmoid(nz2);
        if ((nz1 - nz2) < (z1 - z2)) run.logit_gap_monotone = false;
        if ((nq1 - nq2) < (cur.q1 - cur.q2)) run.prob_gap_monotone = false;
        if (!run.turning_point && nq2 < cur.q2 - 1e-12) {
            run.turning_point = k;
            run.h1_growth_at_turn = std::exp(z1 - z1_start);
        }
        z1 = nz1;
        z2 = nz2;
    }
    return run;
}

TurningPointReport theorem3_threshold_check(const risk::CoupledPair& pair, double step_const, int steps) {
    pair.validate();
    ORL_REQUIRE(pair.q1 > 0.5 && pair.q2 > 0.5, "the threshold check applies when q1 and q2 both exceed 0.5");
    const CoupledPairRun run = simulate_coupled_pair(pair, step_const, steps);

    TurningPointReport rep;
    const double xd = pair.xi * pair.delta;
    rep.delta_zhat = logit(pair.q2) - logit(pair.q1);
    rep.candidate_log_form = xd > 0.0 ? std::exp(0.5 * std::log(xd) + rep.delta_zhat) : 0.0;
    rep.candidate_linear_form = std::exp(0.5 * xd + rep.delta_zhat);
    if (!run.turning_point) return rep;

    rep.turning_found = true;
    rep.turning_step = *run.turning_point;
    rep.empirical_ratio = run.h1_growth_at_turn;
    rep.rel_dev_log_form = std::abs(rep.candidate_log_form - rep.empirical_ratio) / rep.empirical_ratio;
    rep.rel_dev_linear_form = std::abs(rep.candidate_linear_form - rep.empirical_ratio) / rep.empirical_ratio;
    const double q1 = run.q1[rep.turning_step], q2 = run.q2[rep.turning_step];
    rep.variance_ratio_at_turn = q2 * (1.0 - q2) / (q1 * (1.0 - q1));
    return rep;
}

double correction_logit_shift(double current_prob, double target_prob) {
    ORL_REQUIRE(current_prob > 0.0 && current_prob < 1.0, "current probability must lie in (0,1)");
    ORL_REQUIRE(target_prob > 0.0 && target_prob < current_prob,
                "correction only suppresses: target_prob must lie in (0, current probability)");
    return logit(target_prob) - logit(current_prob);
}

DynamicsState apply_correction(const DynamicsState& state, std::size_t target_action, double target_prob) {
    state.validate();
    ORL_REQUIRE(target_action < state.logits.size(), "target_action out of range");
    const auto probs = state.probs();
    DynamicsState out = state;
    out.logits[target_action] += correction_logit_shift(probs[target_action], target_prob);
    return out;
}

PushRun simulate_push(const DynamicsState& state, std::size_t action, double risk, double push, int steps,
                      bool keep_trace) {
    state.validate();
    ORL_REQUIRE(action < state.logits.size(), "action out of range");
    ORL_REQUIRE(state.logits.size() >= 2, "push dynamics need at least two actions");
    ORL_REQUIRE(steps >= 0, "steps must be >= 0");
    // Mass of the other actions is constant, so q = sigmoid(z - log(other)).
    double other = 0.0;
    const double mx = *std::max_element(state.logits.begin(), state.logits.end());
    for (std::size_t i = 0; i < state.logits.size(); ++i)
        if (i != action) other += std::exp(state.logits[i] - mx);
    const double offset = mx + std::log(other);
    double z = state.logits[action];

    PushRun run;
    double q = sigmoid(z - offset);
    if (keep_trace) run.q.push_back(q);
    for (int k = 0; k < steps; ++k) {
        z += state.step_const * (push + q * risk * (q - 1.0));
        q = sigmoid(z - offset);
        if (keep_trace) run.q.push_back(q);
    }
    run.final_q = q;
    return run;
}

}  // namespace orl::dynamics
