#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "orl/csv.hpp"
#include "orl/dynamics.hpp"
#include "orl/error.hpp"
#include "orl/experiment.hpp"
#include "orl/policy_net.hpp"

namespace orl::exp {
namespace {

std::string num(double v) { return format_double(v); }

class Suite {
public:
    void add(std::string module, std::string property, bool passed, std::string inputs, std::string observed,
             std::string expected) {
        report.checks.push_back({std::move(module), std::move(property), passed, std::move(inputs),
                                 std::move(observed), std::move(expected)});
    }
    // Runs a check body; an exception counts as a failure with its message as the observation.
    template <class F>
    void run(const std::string& module, const std::string& property, F&& body) {
        try {
            body();
        } catch (const std::exception& e) {
            add(module, property, false, "", std::string("exception: ") + e.what(), "no exception");
        }
    }
    VerifyReport report;
};

double log_prob_at(const nn::PolicyParams& p, const std::vector<double>& x, nn::Head head, int chosen) {
    return nn::forward(p, x, head, chosen).log_prob;
}

// Max relative error of analytic against central differences over every parameter.
double gradient_rel_error(const nn::PolicyParams& params, const std::vector<double>& x, nn::Head head, int chosen) {
    const auto g = nn::grad_log_prob(params, x, head, chosen);
    double worst = 0.0;
    auto probe = [&](Eigen::MatrixXd nn::PolicyParams::*member, const Eigen::MatrixXd& analytic) {
        nn::PolicyParams p = params;
        auto& m = p.*member;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const double orig = m(i, j);
                const double h = 1e-6 * std::max(1.0, std::abs(orig));
                m(i, j) = orig + h;
                const double up = log_prob_at(p, x, head, chosen);
                m(i, j) = orig - h;
                const double down = log_prob_at(p, x, head, chosen);
                m(i, j) = orig;
                const double fd = (up - down) / (2 * h);
                const double rel = std::abs(fd - analytic(i, j)) / std::max(1e-3, std::abs(fd) + std::abs(analytic(i, j)));
                worst = std::max(worst, rel);
            }
    };
    probe(&nn::PolicyParams::w1, g.w1);
    probe(&nn::PolicyParams::w2, g.w2);
    return worst;
}

}  // namespace

bool VerifyReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string VerifyReport::to_json() const {
    nlohmann::ordered_json j;
    j["passed"] = passed();
    j["total"] = checks.size();
    j["failed"] = std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; });
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        nlohmann::ordered_json e;
        e["module"] = c.module;
        e["property"] = c.property;
        e["passed"] = c.passed;
        e["inputs"] = c.inputs;
        e["observed"] = c.observed;
        e["expected"] = c.expected;
        arr.push_back(std::move(e));
    }
    j["checks"] = std::move(arr);
    return j.dump(2) + "\n";
}

VerifyReport verify(std::uint64_t seed, Fault fault) {
    Suite s;

    s.run("risk_model", "advantage_oracle_equivalence", [&] {
        const auto rows = advantage_grid(20, fault);
        double worst = 0.0;
        const AdvantageGridRow* at = &rows.front();
        for (const auto& r : rows)
            if (r.abs_diff > worst) {
                worst = r.abs_diff;
                at = &r;
            }
        std::ostringstream in;
        in << "20x20x20 grid, worst at p=" << num(at->p) << " q=" << num(at->q) << " r=" << num(at->r);
        s.add("risk_model", "advantage_oracle_equivalence", worst <= 1e-12, in.str(), "max |analytic-oracle| = " + num(worst),
              "<= 1e-12");
    });

    s.run("risk_model", "advantage_sign_law", [&] {
        std::size_t bad = 0, total = 0;
        for (int i = 0; i <= 20; ++i)
            for (int k = 0; k <= 20; ++k) {
                const double q = i / 20.0, r = k / 20.0 * 0.5;
                const double a = risk::expected_advantage({0.3, {{q, r}}}, 0);
                const bool interior = q > 0.0 && q < 1.0 && r > 0.0;
                bad += interior ? !(a < 0.0) : a != 0.0;
                ++total;
            }
        s.add("risk_model", "advantage_sign_law", bad == 0, "p=0.3, 21x21 (q,r) grid",
              std::to_string(bad) + " of " + std::to_string(total) + " violations", "advantage < 0 inside, 0 on boundary");
    });

    s.run("risk_model", "zero_sum_and_gap_widening", [&] {
        Rng rng = make_stream(seed, "verify-theorem1");
        double worst = 0.0;
        std::size_t nonpositive = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto t = sample_three_action(rng);
            const auto a = risk::three_action_advantages(t);
            worst = std::max(worst, std::abs(a.a1 + a.a2 + a.a3));
            nonpositive += !(risk::gap_widening_value(t) > 0.0);
        }
        s.add("risk_model", "zero_sum_and_gap_widening", worst <= 1e-12 && nonpositive == 0,
              "1000 random three-action scenarios",
              "max |A1+A2+A3| = " + num(worst) + ", nonpositive gap values = " + std::to_string(nonpositive),
              "<= 1e-12 and 0");
    });

    s.run("dynamics", "three_action_gap_and_drift_sign", [&] {
        Rng rng = make_stream(seed, "verify-simulation");
        std::size_t gap_fail = 0, checked = 0, disagree = 0;
        for (int i = 0; i < 100; ++i) {
            const auto t = sample_three_action(rng);
            const auto run = dynamics::simulate_three_action(t, 1e-4, 200);
            gap_fail += !run.gap_always_increasing;
            const double drift = risk::p1_first_order_drift(t);
            if (std::abs(drift) > dynamics::kConditionMargin) {
                ++checked;
                disagree += (run.p1_step0_change > 0.0) != (drift > 0.0);
            }
        }
        s.add("dynamics", "three_action_gap_and_drift_sign", gap_fail == 0 && disagree == 0,
              "100 scenarios, C=1e-4, 200 steps",
              "gap failures = " + std::to_string(gap_fail) + ", drift sign disagreements = " + std::to_string(disagree) +
                  " of " + std::to_string(checked),
              "0 and 0");
    });

    s.run("dynamics", "danger_zone", [&] {
        const auto roots = risk::danger_zone_roots(0.2, 0.01);
        const bool roots_ok = roots.size() == 2 && std::abs(roots[0] - 0.0527864045) < 1e-6 &&
                              std::abs(roots[1] - 0.9472135955) < 1e-6;
        const std::vector<double> start{0.5, 0.5};
        const auto st = dynamics::DynamicsState::from_probs(start, 0.5);
        const double fq = dynamics::simulate_push(st, 0, 0.2, 0.01, 20000).final_q;
        const bool conv = roots_ok && std::abs(fq - roots[0]) < 1e-6;
        s.add("dynamics", "danger_zone", roots_ok && conv, "r=0.2, c=0.01, q0=0.5, C=0.5, 20000 steps",
              "roots = (" + (roots.empty() ? std::string("none") : num(roots.front()) + ", " + num(roots.back())) +
                  "), final q = " + num(fq),
              "roots (0.052786, 0.947214), final q at the lower root within 1e-6");
    });

    s.run("dynamics", "coupled_pair_logit_gap", [&] {
        const risk::CoupledPair pair{0.6, 0.7, 0.2, 4.0, 0.5};
        const auto run = dynamics::simulate_coupled_pair(pair, 0.05, 2000);
        s.add("dynamics", "coupled_pair_logit_gap", run.logit_gap_monotone && run.turning_point.has_value(),
              "q1=0.6 q2=0.7 r2=0.2 xi=4 delta=0.5 C=0.05",
              std::string("logit gap monotone = ") + (run.logit_gap_monotone ? "true" : "false") +
                  ", turning point = " + (run.turning_point ? std::to_string(*run.turning_point) : "none"),
              "monotone and a turning point");
    });

    s.run("dynamics", "correction_inversion", [&] {
        const std::vector<double> probs{0.8, 0.15, 0.05};
        const auto st = dynamics::apply_correction(dynamics::DynamicsState::from_probs(probs, 1e-4), 0, 0.2);
        const double after = st.probs()[0];
        s.add("dynamics", "correction_inversion", std::abs(after - 0.2) < 1e-12, "probs (0.8, 0.15, 0.05), target 0.2",
              "corrected prob = " + num(after), "0.2 within 1e-12");
    });

    s.run("policy_net", "gradient_check", [&] {
        Rng rng = make_stream(seed, "verify-gradient");
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const auto params = nn::PolicyParams::init(6, 5, 4, rng);
            std::vector<double> x(6);
            for (double& v : x) v = rng.symmetric(1.0);
            const auto head = i % 2 ? nn::Head::Judge : nn::Head::Action;
            const int chosen = static_cast<int>(rng.next() % static_cast<std::uint64_t>(params.head_size(head)));
            worst = std::max(worst, gradient_rel_error(params, x, head, chosen));
        }
        s.add("policy_net", "gradient_check", worst < 1e-5, "20 random (params, input, choice), both heads",
              "max relative error = " + num(worst), "< 1e-5");
    });

    s.run("policy_net", "checkpoint_roundtrip", [&] {
        Rng rng = make_stream(seed, "verify-checkpoint");
        const auto params = nn::PolicyParams::init(6, 4, 3, rng);
        std::stringstream buf;
        nn::save_checkpoint(buf, params);
        const auto back = nn::load_checkpoint(buf);
        const bool same = back.n_actions == params.n_actions && back.w1 == params.w1 && back.w2 == params.w2;
        s.add("policy_net", "checkpoint_roundtrip", same, "6x4 / 4x5 parameters", same ? "bitwise equal" : "differs",
              "bitwise equal");
    });

    s.run("toy_env", "shortest_path", [&] {
        env::EnvConfig e;
        e.n_rooms = 3;
        e.max_steps = 10;
        const std::vector<int> actions(10, 0);
        const auto ep = env::replay_episode(e, 0, actions);
        s.add("toy_env", "shortest_path", ep.reward == 1 && ep.actions.size() == 3, "n_rooms=3, always advance",
              "reward " + std::to_string(ep.reward) + " after " + std::to_string(ep.actions.size()) + " steps",
              "reward 1 after 3 steps");
    });

    s.run("grpo_trainer", "group_advantages", [&] {
        Rng rng = make_stream(seed, "verify-advantages");
        double worst_mean = 0.0;
        for (int i = 0; i < 200; ++i) {
            std::vector<double> r(8);
            for (double& v : r) v = static_cast<double>(rng.next() % 2);
            const auto a = train::group_advantages(r, 1e-8);
            double m = 0.0;
            for (double v : a) m += v;
            worst_mean = std::max(worst_mean, std::abs(m / 8.0));
        }
        s.add("grpo_trainer", "group_advantages", worst_mean <= 1e-10, "200 random binary groups of 8",
              "max |mean advantage| = " + num(worst_mean), "<= 1e-10");
    });

    env::EnvConfig e;
    train::TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 3;
    tc.gcd_enabled = true;

    s.run("grpo_trainer", "coupling_symmetry", [&] {
        const auto policy = train::make_initial_policy(e, tc);
        const auto probe = train::collect_probe_steps(policy, e, tc, 4, 32);
        const auto rep = train::coupling_matrix(policy, probe);
        const double asym = (rep.matrix - rep.matrix.transpose()).cwiseAbs().maxCoeff();
        const double min_diag = rep.matrix.diagonal().minCoeff();
        s.add("grpo_trainer", "coupling_symmetry", asym <= 1e-10 && min_diag >= 0.0,
              std::to_string(probe.size()) + " probe steps",
              "max asymmetry = " + num(asym) + ", min diagonal = " + num(min_diag), "<= 1e-10 and >= 0");
    });

    s.run("grpo_trainer", "zero_weight_matches_vanilla", [&] {
        train::TrainConfig zero = tc;
        zero.gcd_weight = 0.0;
        train::TrainConfig vanilla = tc;
        vanilla.gcd_enabled = false;
        auto a = train::make_initial_policy(e, zero);
        auto b = train::make_initial_policy(e, vanilla);
        train::train(a, e, zero);
        train::train(b, e, vanilla);
        const bool same = a.params.w1 == b.params.w1 && a.params.w2 == b.params.w2;
        s.add("grpo_trainer", "zero_weight_matches_vanilla", same, "3 epochs, gcd_weight=0 vs judge objective off",
              same ? "bitwise equal parameters" : "parameters differ", "bitwise equal parameters");
    });

    s.run("grpo_trainer", "determinism", [&] {
        auto run = [&] {
            auto p = train::make_initial_policy(e, tc);
            std::ostringstream out;
            for (const auto& r : train::train(p, e, tc)) train::write_train_row(out, r);
            return out.str();
        };
        const bool same = run() == run();
        s.add("grpo_trainer", "determinism", same, "3 epochs with the judge objective, same seed",
              same ? "identical records" : "records differ", "identical records");
    });

    s.run("exp_cli", "preset_determinism", [&] {
        Config cfg = preset_config("lemma1");
        cfg.set("lemma1.grid", "6");
        cfg.set("seed", std::to_string(seed));
        const auto a = compute_preset_outputs("lemma1", cfg, 1, Fault::None);
        const auto b = compute_preset_outputs("lemma1", cfg, 2, Fault::None);
        s.add("exp_cli", "preset_determinism", a == b, "lemma1 preset, grid 6, jobs 1 vs 2",
              a == b ? "identical outputs" : "outputs differ", "identical outputs");
    });

    s.run("exp_cli", "config_precedence", [&] {
        const Config dumped = Config::parse(preset_config("grpo-gcd").dump());
        RunOptions opts;
        opts.preset = "grpo-gcd";
        opts.overrides = {"train.seeds=3"};
        const Config eff = effective_config(opts);
        const bool ok = dumped.get_int("train.seeds") == 10 && eff.get_int("train.seeds") == 3 &&
                        eff.get_bool("train.gcd_enabled") && Config::defaults().get_int("train.seeds") == 1;
        s.add("exp_cli", "config_precedence", ok, "grpo-gcd preset with train.seeds=3",
              "defaults 1, preset " + dumped.raw("train.seeds") + ", effective " + eff.raw("train.seeds"),
              "defaults 1, preset 10, effective 3");
    });

    return s.report;
}

}  // namespace orl::exp
