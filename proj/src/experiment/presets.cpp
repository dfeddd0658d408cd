#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "orl/csv.hpp"
#include "orl/dynamics.hpp"
#include "orl/error.hpp"
#include "orl/experiment.hpp"
#include "orl/policy_net.hpp"

namespace orl::exp {
namespace {

using Files = std::map<std::string, std::string>;

// Runs f(0..n-1) on up to `jobs` threads. The first exception (by index) is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& f) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min(jobs, n));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::string metric_table(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ostringstream out;
    CsvWriter csv(out);
    csv.field("metric").field("value");
    csv.end_row();
    for (const auto& [k, v] : rows) {
        csv.field(k).field(v);
        csv.end_row();
    }
    return out.str();
}

std::string num(double v) { return format_double(v); }
std::string flag(bool b) { return b ? "true" : "false"; }

// ---------------------------------------------------------------- lemma1

Files run_lemma1(const Config& cfg, int, Fault fault) {
    const auto rows = advantage_grid(cfg.get_int("lemma1.grid"), fault);
    std::ostringstream out;
    CsvWriter csv(out);
    for (const char* h : {"p", "q", "r", "analytic", "oracle", "abs_diff"}) csv.field(h);
    csv.end_row();
    double worst = 0.0;
    for (const auto& r : rows) {
        csv.field(r.p).field(r.q).field(r.r).field(r.analytic).field(r.oracle).field(r.abs_diff);
        csv.end_row();
        worst = std::max(worst, r.abs_diff);
    }
    return {{"lemma1.csv", out.str()},
            {"lemma1_summary.csv",
             metric_table({{"grid_points", std::to_string(rows.size())}, {"max_abs_diff", num(worst)}})}};
}

// ---------------------------------------------------------------- theorem1

struct ThreeActionRow {
    risk::ThreeActionScenario s;
    double condition = 0, drift = 0, dp1 = 0, min_gap_increment = 0, zero_sum = 0;
    bool gap_ok = false;
    dynamics::DynamicsTrace trace;
};

int sign_of(double v) { return (v > 0) - (v < 0); }

Files run_theorem1(const Config& cfg, int jobs, Fault) {
    const int n = cfg.get_int("theorem1.scenarios");
    const int steps = cfg.get_int("theorem1.steps");
    const double c = cfg.get_double("theorem1.step_const");
    const int traces = cfg.get_int("theorem1.trace_scenarios");
    const auto seed = cfg.get_u64("seed");
    if (n < 1 || steps < 1) throw UsageError("theorem1.scenarios and theorem1.steps must be >= 1");
    std::vector<ThreeActionRow> rows(static_cast<std::size_t>(n));
    parallel_for(n, jobs, [&](int i) {
        Rng rng = make_stream(seed, "theorem1-scenario", {static_cast<std::uint64_t>(i)});
        ThreeActionRow& row = rows[static_cast<std::size_t>(i)];
        row.s = sample_three_action(rng);
        auto run = dynamics::simulate_three_action(row.s, c, steps);
        row.condition = risk::p1_increase_condition(row.s);
        row.drift = risk::p1_first_order_drift(row.s);
        row.dp1 = run.p1_step0_change;
        row.gap_ok = run.gap_always_increasing;
        row.min_gap_increment = run.min_gap_increment;
        const auto a = risk::three_action_advantages(row.s);
        row.zero_sum = std::abs(a.a1 + a.a2 + a.a3);
        if (i < traces) row.trace = std::move(run.trace);
    });

    std::ostringstream out;
    CsvWriter csv(out);
    for (const char* h : {"scenario", "p", "q", "r", "q_hat", "r_hat", "condition", "first_order_drift", "p1_step0_change",
                          "condition_checked", "condition_agrees", "drift_agrees", "gap_always_increasing",
                          "min_gap_increment", "zero_sum_residual"})
        csv.field(h);
    csv.end_row();
    std::size_t gap_ok = 0, checked = 0, agree = 0, drift_checked = 0, drift_agree = 0;
    double worst_zero_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        const bool is_checked = std::abs(r.condition) > dynamics::kConditionMargin;
        const bool agrees = sign_of(r.dp1) == sign_of(r.condition);
        const bool drift_agrees = sign_of(r.dp1) == sign_of(r.drift);
        gap_ok += r.gap_ok;
        checked += is_checked;
        agree += is_checked && agrees;
        if (std::abs(r.drift) > dynamics::kConditionMargin) {
            ++drift_checked;
            drift_agree += drift_agrees;
        }
        worst_zero_sum = std::max(worst_zero_sum, r.zero_sum);
        csv.field(i).field(r.s.p).field(r.s.q).field(r.s.r).field(r.s.q_hat).field(r.s.r_hat);
        csv.field(r.condition).field(r.drift).field(r.dp1).field(flag(is_checked)).field(flag(agrees));
        csv.field(flag(drift_agrees)).field(flag(r.gap_ok)).field(r.min_gap_increment).field(r.zero_sum);
        csv.end_row();
    }
    auto rate = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 1.0; };
    Files files;
    files["theorem1.csv"] = out.str();
    files["theorem1_summary.csv"] = metric_table({
        {"scenarios", std::to_string(n)},
        {"steps", std::to_string(steps)},
        {"step_const", num(c)},
        {"gap_sign_agreement", num(rate(gap_ok, static_cast<std::size_t>(n)))},
        {"condition_checked", std::to_string(checked)},
        {"condition_sign_agreement", num(rate(agree, checked))},
        {"drift_checked", std::to_string(drift_checked)},
        {"drift_sign_agreement", num(rate(drift_agree, drift_checked))},
        {"max_zero_sum_residual", num(worst_zero_sum)},
    });
    for (int i = 0; i < std::min(traces, n); ++i) {
        std::ostringstream t;
        dynamics::write_trace_csv(t, rows[static_cast<std::size_t>(i)].trace);
        files["theorem1_trace_" + std::to_string(i) + ".csv"] = t.str();
    }
    return files;
}

// ---------------------------------------------------------------- danger zone

Files run_danger(const Config& cfg, int jobs, Fault) {
    const double r = cfg.get_double("danger.risk");
    const double c = cfg.get_double("danger.push");
    const double step_const = cfg.get_double("danger.step_const");
    const int steps = cfg.get_int("danger.steps");
    const int points = cfg.get_int("danger.sweep_points");
    if (points < 1) throw UsageError("danger.sweep_points must be >= 1");
    const auto roots = risk::danger_zone_roots(r, c);
    const double nan = std::nan("");
    const double low = roots.empty() ? nan : roots.front();
    const double high = roots.empty() ? nan : roots.back();

    std::ostringstream curve;
    CsvWriter cc(curve);
    for (const char* h : {"q", "advantage", "self_correction", "push", "root_low", "root_high"}) cc.field(h);
    cc.end_row();
    for (int k = 0; k <= 100; ++k) {
        const double q = k / 100.0;
        cc.field(q).field(q * r * (q - 1.0)).field(q * r * (1.0 - q)).field(c).field(low).field(high);
        cc.end_row();
    }

    std::vector<double> finals(static_cast<std::size_t>(points));
    parallel_for(points, jobs, [&](int k) {
        const double q0 = (k + 1.0) / (points + 1.0);
        const std::vector<double> probs{q0, 1.0 - q0};
        const auto state = dynamics::DynamicsState::from_probs(probs, step_const);
        finals[static_cast<std::size_t>(k)] = dynamics::simulate_push(state, 0, r, c, steps).final_q;
    });
    std::ostringstream sweep;
    CsvWriter sc(sweep);
    for (const char* h : {"q0", "final_q", "expected_limit", "abs_error", "behavior"}) sc.field(h);
    sc.end_row();
    for (int k = 0; k < points; ++k) {
        const double q0 = (k + 1.0) / (points + 1.0);
        const bool diverges = roots.empty() || q0 > high;
        const double limit = diverges ? 1.0 : low;
        const double fq = finals[static_cast<std::size_t>(k)];
        sc.field(q0).field(fq).field(limit).field(std::abs(fq - limit)).field(diverges ? "diverge" : "converge");
        sc.end_row();
    }
    return {{"danger_zone.csv", curve.str()},
            {"danger_sweep.csv", sweep.str()},
            {"danger_roots.csv", metric_table({{"risk", num(r)}, {"push", num(c)}, {"root_low", num(low)},
                                               {"root_high", num(high)}})}};
}

// ---------------------------------------------------------------- coupled pair

Files run_coupled(const Config& cfg, int jobs, Fault) {
    risk::CoupledPair base;
    base.q1 = cfg.get_double("coupled.q1");
    base.q2 = cfg.get_double("coupled.q2");
    base.r2 = cfg.get_double("coupled.r2");
    base.xi = cfg.get_double("coupled.xi");
    base.delta = cfg.get_double("coupled.delta");
    const double c = cfg.get_double("coupled.step_const");
    const int steps = cfg.get_int("coupled.steps");
    const int trace_steps = cfg.get_int("coupled.trace_steps");
    base.validate();

    Files files;
    std::ostringstream trace;
    dynamics::write_trace_csv(trace, dynamics::simulate_coupled_pair(base, c, trace_steps).trace);
    files["coupled_trace.csv"] = trace.str();

    // The configured pair followed by a delta sweep at the same xi.
    std::vector<risk::CoupledPair> pairs{base};
    for (int k = 1; k <= 9; ++k) {
        risk::CoupledPair p = base;
        p.delta = k / 10.0;
        pairs.push_back(p);
    }
    std::vector<dynamics::TurningPointReport> reports(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), jobs, [&](int i) {
        reports[static_cast<std::size_t>(i)] = dynamics::theorem3_threshold_check(pairs[static_cast<std::size_t>(i)], c, steps);
    });
    std::ostringstream out;
    CsvWriter csv(out);
    for (const char* h : {"xi", "delta", "q1", "q2", "r2", "initial_leak_margin", "turning_found", "turning_step",
                          "empirical_ratio", "delta_zhat", "candidate_log_form", "candidate_linear_form",
                          "rel_dev_log_form", "rel_dev_linear_form", "variance_ratio_at_turn"})
        csv.field(h);
    csv.end_row();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const auto& rep = reports[i];
        csv.field(p.xi).field(p.delta).field(p.q1).field(p.q2).field(p.r2);
        csv.field(p.delta * p.good_advantage() - std::abs(p.flawed_advantage()));
        csv.field(flag(rep.turning_found)).field(rep.turning_step).field(rep.empirical_ratio).field(rep.delta_zhat);
        csv.field(rep.candidate_log_form).field(rep.candidate_linear_form).field(rep.rel_dev_log_form);
        csv.field(rep.rel_dev_linear_form).field(rep.variance_ratio_at_turn);
        csv.end_row();
    }
    files["theorem3.csv"] = out.str();
    return files;
}

// ---------------------------------------------------------------- GRPO runs

struct CellOutput {
    std::string arm;
    std::uint64_t seed = 0;
    Files files;
    std::optional<double> final_gap;
    int first_epoch_95 = -1;
    double final_success = 0.0;
};

CellOutput run_training_cell(const Config& cfg, const std::string& arm, bool gcd, std::uint64_t seed) {
    const auto env_cfg = env_config_from(cfg);
    auto tc = train_config_from(cfg);
    tc.seed = seed;
    tc.gcd_enabled = gcd;
    const int checkpoint_every = cfg.get_int("train.checkpoint_every");
    const int probe_groups = cfg.get_int("train.probe_groups");

    train::Policy policy = train::make_initial_policy(env_cfg, tc);
    const auto probe = train::collect_probe_steps(policy, env_cfg, tc, probe_groups, tc.coupling_probe_steps);

    CellOutput cell;
    cell.arm = arm;
    cell.seed = seed;
    const std::string tag = arm + "_seed" + std::to_string(seed);
    std::ostringstream records, consistency, rooms;
    train::write_train_header(records);
    CsvWriter cons(consistency);
    cons.field("epoch").field("modal_count").field("steps");
    cons.end_row();
    CsvWriter rp(rooms);
    rp.field("epoch").field("room").field("action").field("prob");
    rp.end_row();

    train::train(policy, env_cfg, tc, probe, [&](const train::TrainRecord& rec, const train::Policy& pol) {
        train::write_train_row(records, rec);
        for (std::size_t k = 0; k < rec.consistency_histogram.size(); ++k) {
            cons.field(rec.epoch).field(k).field(rec.consistency_histogram[k]);
            cons.end_row();
        }
        for (std::size_t room = 0; room < rec.room_action_probs.size(); ++room)
            for (std::size_t a = 0; a < rec.room_action_probs[room].size(); ++a) {
                rp.field(rec.epoch).field(room).field(a).field(rec.room_action_probs[room][a]);
                rp.end_row();
            }
        if (cell.first_epoch_95 < 0 && rec.success_rate >= 0.95) cell.first_epoch_95 = rec.epoch;
        cell.final_success = rec.success_rate;
        cell.final_gap = rec.coupling_gap;
        if (checkpoint_every > 0 && (rec.epoch + 1) % checkpoint_every == 0) {
            std::ostringstream ck;
            nn::save_checkpoint(ck, pol.params);
            cell.files["policy_" + tag + "_epoch" + std::to_string(rec.epoch + 1) + ".txt"] = ck.str();
        }
    });
    cell.files["train_" + tag + ".csv"] = records.str();
    cell.files["consistency_" + tag + ".csv"] = consistency.str();
    cell.files["room_probs_" + tag + ".csv"] = rooms.str();
    return cell;
}

Files run_grpo(const Config& cfg, int jobs, Fault) {
    const int seeds = cfg.get_int("train.seeds");
    if (seeds < 1) throw UsageError("train.seeds must be >= 1");
    const auto base_seed = cfg.get_u64("seed");
    const bool compare = cfg.get_bool("train.compare_gcd");
    const bool gcd = cfg.get_bool("train.gcd_enabled");
    std::vector<std::pair<std::string, bool>> arms;
    if (compare)
        arms = {{"vanilla", false}, {"gcd", true}};
    else
        arms = {{gcd ? "gcd" : "vanilla", gcd}};

    const int n_cells = seeds * static_cast<int>(arms.size());
    std::vector<CellOutput> cells(static_cast<std::size_t>(n_cells));
    parallel_for(n_cells, jobs, [&](int i) {
        const auto& [arm, use_gcd] = arms[static_cast<std::size_t>(i) % arms.size()];
        const auto seed = base_seed + static_cast<std::uint64_t>(i) / arms.size();
        cells[static_cast<std::size_t>(i)] = run_training_cell(cfg, arm, use_gcd, seed);
    });

    Files files;
    std::ostringstream learning;
    CsvWriter lc(learning);
    lc.field("arm").field("seed").field("first_epoch_success_95").field("final_success_rate").field("final_coupling_gap");
    lc.end_row();
    for (auto& cell : cells) {
        lc.field(cell.arm).field(static_cast<std::size_t>(cell.seed)).field(cell.first_epoch_95).field(cell.final_success);
        lc.field(cell.final_gap ? num(*cell.final_gap) : std::string());
        lc.end_row();
        files.merge(cell.files);
    }
    files["learning_summary.csv"] = learning.str();

    if (compare) {
        std::ostringstream gaps;
        CsvWriter gc(gaps);
        gc.field("seed").field("gap_vanilla").field("gap_gcd").field("gcd_larger");
        gc.end_row();
        int wins = 0;
        for (int s = 0; s < seeds; ++s) {
            const auto& v = cells[static_cast<std::size_t>(2 * s)];
            const auto& g = cells[static_cast<std::size_t>(2 * s + 1)];
            const bool larger = v.final_gap && g.final_gap && *g.final_gap > *v.final_gap;
            wins += larger;
            gc.field(static_cast<std::size_t>(v.seed));
            gc.field(v.final_gap ? num(*v.final_gap) : std::string()).field(g.final_gap ? num(*g.final_gap) : std::string());
            gc.field(flag(larger));
            gc.end_row();
        }
        files["coupling_gap_summary.csv"] = gaps.str();
        files["coupling_gap_wins.csv"] =
            metric_table({{"pairs", std::to_string(seeds)}, {"gcd_larger", std::to_string(wins)}});
    }
    return files;
}

// ---------------------------------------------------------------- influence probe

// Two orthogonal inputs routed to disjoint hidden units: every gradient on one
// leaves the other's log-probability unchanged.
double zero_overlap_delta(double learning_rate) {
    nn::PolicyParams params;
    params.n_actions = 2;
    params.w1 = Eigen::MatrixXd::Zero(4, 4);
    params.w1(0, 0) = 0.8;
    params.w1(1, 1) = -0.6;
    params.w2.resize(4, params.n_actions + nn::kJudgeClasses);
    Rng rng = make_stream(0, "zero-overlap");
    for (Eigen::Index j = 0; j < params.w2.cols(); ++j)
        for (Eigen::Index i = 0; i < params.w2.rows(); ++i) params.w2(i, j) = rng.symmetric(0.5);
    train::Policy policy{params, {}};
    train::StepSample a{{1.0, 0.0, 0.0, 0.0}, 0, 0, 0, env::Label::Unlabeled};
    train::StepSample b{{0.0, 1.0, 0.0, 0.0}, 1, 1, 1, env::Label::Unlabeled};
    return train::influence_probe(policy, a, b, learning_rate);
}

Files run_influence(const Config& cfg, int, Fault) {
    const auto env_cfg = env_config_from(cfg);
    const auto tc = train_config_from(cfg);
    const double lr = cfg.get_double("influence.learning_rate");
    const auto policy = train::make_initial_policy(env_cfg, tc);
    const auto table = env::room_feature_table(env_cfg);
    std::vector<train::StepSample> items;
    for (int room = 0; room < env_cfg.n_rooms; ++room)
        for (int a = 0; a < env_cfg.n_actions(); ++a)
            items.push_back({table[static_cast<std::size_t>(room)], env_cfg.aliased_observations ? 2 * room : room, room,
                             a, env::Label::Unlabeled});

    std::ostringstream out;
    CsvWriter csv(out);
    for (const char* h : {"i_room", "i_action", "j_room", "j_action", "delta_logp"}) csv.field(h);
    csv.end_row();
    double same_sum = 0, cross_sum = 0, self_sum = 0;
    std::size_t same_n = 0, cross_n = 0, self_n = 0;
    for (const auto& si : items)
        for (const auto& sj : items) {
            const double d = train::influence_probe(policy, si, sj, lr);
            csv.field(si.room).field(si.action).field(sj.room).field(sj.action).field(d);
            csv.end_row();
            if (si.room == sj.room && si.action == sj.action) {
                self_sum += d;
                ++self_n;
            } else if (si.room != sj.room && si.action == sj.action) {
                same_sum += d;
                ++same_n;
            } else if (si.room != sj.room) {
                cross_sum += d;
                ++cross_n;
            }
        }
    return {{"influence.csv", out.str()},
            {"influence_summary.csv",
             metric_table({{"shared_feature_weight", num(env_cfg.shared_feature_weight)},
                           {"learning_rate", num(lr)},
                           {"self_mean", num(self_sum / static_cast<double>(self_n))},
                           {"same_action_cross_room_mean", num(same_sum / static_cast<double>(same_n))},
                           {"cross_action_cross_room_mean", num(cross_sum / static_cast<double>(cross_n))},
                           {"zero_overlap_delta", num(zero_overlap_delta(lr))}})}};
}

// ---------------------------------------------------------------- correction

Files run_correction(const Config& cfg, int, Fault) {
    const auto env_cfg = env_config_from(cfg);
    auto tc = train_config_from(cfg);
    const int room = cfg.get_int("correction.room");
    const int action = cfg.get_int("correction.action");
    const double flawed = cfg.get_double("correction.flawed_prob");
    const int epochs = cfg.get_int("correction.epochs");
    const int push_groups = cfg.get_int("correction.push_groups");
    if (room < 0 || room >= env_cfg.n_rooms) throw UsageError("correction.room out of range");
    if (action < 0 || action >= env_cfg.n_actions()) throw UsageError("correction.action out of range");
    const int obs = env_cfg.aliased_observations ? 2 * room : room;

    const auto table = env::room_feature_table(env_cfg);
    train::Policy policy = stage("correction/setup", [&] {
        auto p = train::make_initial_policy(env_cfg, tc);
        const std::vector<std::vector<double>> inputs{table[static_cast<std::size_t>(room)]};
        nn::cold_start(p.params, inputs, action, flawed, tc.cold_start_lr, 100000);
        return p;
    });
    auto flawed_prob = [&](const train::Policy& p) {
        return p.act(table[static_cast<std::size_t>(room)], obs).probs(action);
    };
    const double before = flawed_prob(policy);

    // One observation epoch without updates supplies the labeled steps.
    train::TrainConfig observe = tc;
    observe.learning_rate = 0.0;
    const auto er = train::grpo_epoch(policy, env_cfg, observe, 0);
    const auto steps = train::labeled_steps(er.episodes);
    const std::size_t corrections = train::apply_training_correction(policy, steps, tc);
    const double after = flawed_prob(policy);

    const auto push = stage("correction/push", [&] {
        return train::measure_coupling_push(policy, env_cfg, tc, obs, action, push_groups);
    });
    std::vector<double> roots;
    if (std::isfinite(push.risk) && push.risk > 0.0 && std::isfinite(push.push) && push.push >= 0.0)
        roots = risk::danger_zone_roots(push.risk, push.push);

    tc.epochs = epochs;
    tc.correction_enabled = false;
    std::ostringstream trace;
    CsvWriter csv(trace);
    csv.field("epoch").field("flawed_prob").field("success_rate");
    csv.end_row();
    csv.field(-1).field(after).field(er.record.success_rate);
    csv.end_row();
    double max_after = after;
    train::train(policy, env_cfg, tc, {}, [&](const train::TrainRecord& rec, const train::Policy& p) {
        const double q = flawed_prob(p);
        max_after = std::max(max_after, q);
        csv.field(rec.epoch).field(q).field(rec.success_rate);
        csv.end_row();
    });

    const double nan = std::nan("");
    return {{"correction_trace.csv", trace.str()},
            {"correction_summary.csv",
             metric_table({{"flawed_prob_before", num(before)},
                           {"corrections", std::to_string(corrections)},
                           {"target", num(tc.correction_target)},
                           {"flawed_prob_after", num(after)},
                           {"abs_error_to_target", num(std::abs(after - tc.correction_target))},
                           {"measured_q", num(push.q)},
                           {"measured_risk", num(push.risk)},
                           {"self_drift", num(push.self_drift)},
                           {"other_drift", num(push.other_drift)},
                           {"push", num(push.push)},
                           {"self_correction", num(push.self_correction)},
                           {"push_below_self_correction", flag(push.push_below_self_correction)},
                           {"root_low", num(roots.empty() ? nan : roots.front())},
                           {"root_high", num(roots.empty() ? nan : roots.back())},
                           {"epochs", std::to_string(epochs)},
                           {"max_flawed_prob_after", num(max_after)},
                           {"stayed_below_half", flag(max_after < 0.5)}})}};
}

// ---------------------------------------------------------------- Monte Carlo distractor advantage

Files run_lemma1_mc(const Config& cfg, int, Fault) {
    const auto env_cfg = env_config_from(cfg);
    const auto table = parse_prob_table(cfg.get_string("mc.room_probs"));
    const auto seed = cfg.get_u64("seed");
    const auto policy = fixed_probability_policy(env_cfg, table, seed);
    const auto res = train::monte_carlo_step_advantage(
        policy, env_cfg, cfg.get_int("mc.observation"), cfg.get_int("mc.action"), cfg.get_int("mc.group_size"),
        cfg.get_int("mc.groups"), cfg.get_double("train.epsilon_std"), seed);
    const double z = (res.empirical_mean - res.predicted) / res.standard_error;
    return {{"mc_summary.csv",
             metric_table({{"groups", std::to_string(res.groups)},
                           {"p", num(res.exact.p())},
                           {"q", num(res.exact.q())},
                           {"r", num(res.exact.r())},
                           {"q_measured", num(res.q_measured)},
                           {"empirical_mean", num(res.empirical_mean)},
                           {"standard_error", num(res.standard_error)},
                           {"predicted", num(res.predicted)},
                           {"first_order_prediction", num(res.first_order_prediction)},
                           {"z_score", num(z)},
                           {"within_3_se", flag(std::abs(z) <= 3.0)},
                           {"negative", flag(res.empirical_mean < 0.0)}})}};
}

// ---------------------------------------------------------------- registry

struct PresetEntry {
    PresetInfo info;
    std::vector<std::pair<std::string, std::string>> values;
    Files (*run)(const Config&, int, Fault);
};

const std::vector<PresetEntry>& registry() {
    static const std::vector<PresetEntry> entries = {
        {{"lemma1", "expected-advantage grid against the branch-enumeration oracle"}, {}, run_lemma1},
        {{"theorem1", "three-action simulations versus the p1 condition and the gap direction"}, {}, run_theorem1},
        {{"danger-zone", "advantage parabola, roots and convergence sweep of the scalar push dynamics"}, {}, run_danger},
        {{"coupled-pair", "coupled good/flawed pair traces and the turning-point report"}, {}, run_coupled},
        {{"grpo-vanilla", "GRPO on the chain environment"}, {}, run_grpo},
        {{"grpo-gcd", "matched-seed GRPO with and without the judge objective (coupling gap)"},
         {{"train.gcd_enabled", "true"}, {"train.compare_gcd", "true"}, {"train.seeds", "10"}},
         run_grpo},
        {{"influence-probe", "one-step log-probability influence between room/action pairs"},
         {{"env.shared_feature_weight", "0.9"}},
         run_influence},
        {{"correction", "logit correction of a flawed action followed by GRPO epochs"},
         {{"train.correction_enabled", "true"}},
         run_correction},
        {{"lemma1-mc", "Monte Carlo group-normalized advantage of a distractor step"},
         {{"env.n_rooms", "3"}, {"env.max_steps", "4"}, {"env.n_distractor_actions", "1"}, {"env.feature_dim", "6"}},
         run_lemma1_mc},
    };
    return entries;
}

const PresetEntry& find_entry(std::string_view name) {
    for (const auto& e : registry())
        if (e.info.name == name) return e;
    throw UsageError("unknown preset '" + std::string(name) + "' (see list-presets)");
}

}  // namespace

const std::vector<PresetInfo>& presets() {
    static const std::vector<PresetInfo> infos = [] {
        std::vector<PresetInfo> out;
        for (const auto& e : registry()) out.push_back(e.info);
        return out;
    }();
    return infos;
}

bool is_preset(std::string_view name) {
    const auto& all = registry();
    return std::any_of(all.begin(), all.end(), [&](const PresetEntry& e) { return e.info.name == name; });
}

Config preset_config(std::string_view name) {
    const auto& entry = find_entry(name);
    Config cfg = Config::defaults();
    for (const auto& [k, v] : entry.values) cfg.set(k, v);
    return cfg;
}

Fault parse_fault(std::string_view name) {
    if (name.empty() || name == "none") return Fault::None;
    if (name == "advantage-sign") return Fault::AdvantageSign;
    throw UsageError("unknown fault '" + std::string(name) + "' (known: advantage-sign)");
}

std::map<std::string, std::string> compute_preset_outputs(const std::string& preset, const Config& cfg, int jobs,
                                                          Fault fault) {
    const auto& entry = find_entry(preset);
    Files files = stage(preset, [&] { return entry.run(cfg, std::max(1, jobs), fault); });
    files["config.txt"] = cfg.dump();
    return files;
}

RunResult run_preset(const RunOptions& opts) {
    if (opts.out_dir.empty()) throw UsageError("--out is required");
    if (opts.jobs < 1) throw UsageError("--jobs must be >= 1");
    const Config cfg = effective_config(opts);
    const auto files = compute_preset_outputs(opts.preset, cfg, opts.jobs, opts.fault);

    RunResult result;
    result.config_hash = sha256_hex(cfg.dump());
    std::map<std::string, std::string> hashes;
    stage("write", [&] {
        namespace fs = std::filesystem;
        fs::create_directories(opts.out_dir);
        for (const auto& [name, content] : files) {
            std::ofstream out(fs::path(opts.out_dir) / name, std::ios::binary);
            out << content;
            if (!out) throw std::runtime_error("cannot write " + name);
            hashes[name] = sha256_hex(content);
            result.files.push_back(name);
        }
        const auto manifest = render_manifest(opts.preset, cfg.get_u64("seed"), result.config_hash, hashes);
        result.manifest_path = (fs::path(opts.out_dir) / "manifest.txt").string();
        std::ofstream out(result.manifest_path, std::ios::binary);
        out << manifest;
        if (!out) throw std::runtime_error("cannot write manifest.txt");
        return 0;
    });
    return result;
}

risk::ThreeActionScenario sample_three_action(Rng& rng) {
    for (;;) {
        risk::ThreeActionScenario s;
        s.q = rng.uniform();
        s.q_hat = rng.uniform();
        if (s.q <= 0.0 || s.q_hat <= 0.0 || s.q + s.q_hat >= 1.0) continue;
        s.p = rng.uniform();
        s.r = (1.0 - s.p) * rng.uniform();
        s.r_hat = (1.0 - s.p) * rng.uniform();
        if (s.r <= 0.0 || s.r_hat <= 0.0) continue;
        try {
            s.validate();
        } catch (const InvalidInput&) {
            continue;
        }
        return s;
    }
}

std::vector<AdvantageGridRow> advantage_grid(int n, Fault fault) {
    if (n < 2) throw UsageError("lemma1.grid must be >= 2");
    std::vector<AdvantageGridRow> rows;
    rows.reserve(static_cast<std::size_t>(n) * n * n);
    const double step = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const double p = i * step, q = j * step, r = k * step * (1.0 - p);
                const risk::RiskScenario s{p, {{q, r}}};
                double analytic = risk::expected_advantage(s, 0);
                if (fault == Fault::AdvantageSign) analytic = -analytic;
                const double oracle = risk::enumerated_expected_advantage(s, 0);
                rows.push_back({p, q, r, analytic, oracle, std::abs(analytic - oracle)});
            }
    return rows;
}

train::Policy fixed_probability_policy(const env::EnvConfig& env_cfg, const std::vector<std::vector<double>>& probs,
                                       std::uint64_t seed) {
    env_cfg.validate();
    ORL_REQUIRE(static_cast<int>(probs.size()) == env_cfg.n_rooms, "probability table needs one row per room");
    train::TrainConfig tc;
    tc.seed = seed;
    tc.cold_start = false;
    train::Policy policy = train::make_initial_policy(env_cfg, tc);
    policy.params.w2.leftCols(env_cfg.n_actions()).setZero();
    for (int room = 0; room < env_cfg.n_rooms; ++room) {
        const auto& row = probs[static_cast<std::size_t>(room)];
        ORL_REQUIRE(static_cast<int>(row.size()) == env_cfg.n_actions(),
                    "probability row " + std::to_string(room) + " needs one entry per action");
        std::vector<double> bias;
        for (double p : row) {
            ORL_REQUIRE(p > 0.0 && p <= 1.0, "table probabilities must lie in (0,1]");
            bias.push_back(std::log(p));
        }
        if (env_cfg.aliased_observations) {
            policy.action_bias[2 * room] = bias;
            policy.action_bias[2 * room + 1] = bias;
        } else {
            policy.action_bias[room] = bias;
        }
    }
    return policy;
}

}  // namespace orl::exp
