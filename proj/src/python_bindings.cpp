#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "orl/dynamics.hpp"
#include "orl/grpo_trainer.hpp"
#include "orl/risk_model.hpp"
#include "orl/toy_env.hpp"

namespace py = pybind11;
using namespace orl;

namespace {

risk::RiskScenario single(double p, double q, double r) { return {p, {{q, r}}}; }

risk::ThreeActionScenario three(double p, double q, double r, double q_hat, double r_hat) {
    risk::ThreeActionScenario t{p, q, r, q_hat, r_hat};
    t.validate();
    return t;
}

py::dict observation_dict(const env::Observation& o) {
    py::dict d;
    d["id"] = o.id;
    d["room"] = o.room;
    d["features"] = o.features;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Outcome-based RL analysis core";
    m.attr("__version__") = ORL_VERSION;

    m.def("expected_advantage", [](double p, double q, double r) { return risk::expected_advantage(single(p, q, r), 0); },
          py::arg("p"), py::arg("q"), py::arg("r"), "Closed-form expected advantage q r (q - 1).");
    m.def("enumerated_expected_advantage",
          [](double p, double q, double r) { return risk::enumerated_expected_advantage(single(p, q, r), 0); },
          py::arg("p"), py::arg("q"), py::arg("r"), "Expected advantage by summing the four outcome branches.");
    m.def("success_prob", [](double p, double q, double r) { return risk::success_prob(single(p, q, r), 0); },
          py::arg("p"), py::arg("q"), py::arg("r"));
    m.def(
        "branch_probs",
        [](double p, double q, double r) {
            const auto b = risk::branch_probs(single(p, q, r), 0);
            py::dict d;
            d["no_mistake_success"] = b.no_mistake_success;
            d["no_mistake_fail"] = b.no_mistake_fail;
            d["mistake_success"] = b.mistake_success;
            d["mistake_fail"] = b.mistake_fail;
            return d;
        },
        py::arg("p"), py::arg("q"), py::arg("r"));
    m.def(
        "three_action_advantages",
        [](double p, double q, double r, double q_hat, double r_hat) {
            const auto a = risk::three_action_advantages(three(p, q, r, q_hat, r_hat));
            return py::make_tuple(a.a1, a.a2, a.a3);
        },
        py::arg("p"), py::arg("q"), py::arg("r"), py::arg("q_hat"), py::arg("r_hat"));
    m.def(
        "p1_increase_condition",
        [](double p, double q, double r, double q_hat, double r_hat) {
            return risk::p1_increase_condition(three(p, q, r, q_hat, r_hat));
        },
        py::arg("p"), py::arg("q"), py::arg("r"), py::arg("q_hat"), py::arg("r_hat"));
    m.def(
        "p1_first_order_drift",
        [](double p, double q, double r, double q_hat, double r_hat) {
            return risk::p1_first_order_drift(three(p, q, r, q_hat, r_hat));
        },
        py::arg("p"), py::arg("q"), py::arg("r"), py::arg("q_hat"), py::arg("r_hat"));
    m.def(
        "gap_widening_value",
        [](double p, double q, double r, double q_hat, double r_hat) {
            return risk::gap_widening_value(three(p, q, r, q_hat, r_hat));
        },
        py::arg("p"), py::arg("q"), py::arg("r"), py::arg("q_hat"), py::arg("r_hat"));
    m.def("danger_zone_roots", &risk::danger_zone_roots, py::arg("risk"), py::arg("push"));
    m.def(
        "effective_advantages",
        [](double q1, double q2, double r2, double xi, double delta) {
            const auto e = risk::effective_advantages({q1, q2, r2, xi, delta});
            return py::make_tuple(e.good, e.flawed);
        },
        py::arg("q1"), py::arg("q2"), py::arg("r2"), py::arg("xi"), py::arg("delta"));
    m.def("group_normalized_expected_advantage", &risk::group_normalized_expected_advantage, py::arg("p"),
          py::arg("q"), py::arg("r"), py::arg("group_size"), py::arg("epsilon_std") = 1e-8);

    m.def("softmax", [](const std::vector<double>& z) { return dynamics::softmax(z); }, py::arg("logits"));
    m.def(
        "simulate_three_action",
        [](double p, double q, double r, double q_hat, double r_hat, double step_const, int steps) {
            const auto run = dynamics::simulate_three_action(three(p, q, r, q_hat, r_hat), step_const, steps);
            py::dict d;
            d["gap_always_increasing"] = run.gap_always_increasing;
            d["min_gap_increment"] = run.min_gap_increment;
            d["p1_step0_change"] = run.p1_step0_change;
            d["condition_at_start"] = run.condition_at_start;
            d["drift_at_start"] = run.drift_at_start;
            std::vector<std::vector<double>> probs;
            for (const auto& rec : run.trace.records) probs.push_back(rec.probs);
            d["probs"] = probs;
            return d;
        },
        py::arg("p"), py::arg("q"), py::arg("r"), py::arg("q_hat"), py::arg("r_hat"), py::arg("step_const") = 1e-4,
        py::arg("steps") = 1000);
    m.def(
        "simulate_push",
        [](const std::vector<double>& probs, std::size_t action, double risk_value, double push, double step_const,
           int steps) {
            const auto st = dynamics::DynamicsState::from_probs(probs, step_const);
            return dynamics::simulate_push(st, action, risk_value, push, steps).final_q;
        },
        py::arg("probs"), py::arg("action"), py::arg("risk"), py::arg("push"), py::arg("step_const"), py::arg("steps"),
        "Final probability of `action` under the scalar push dynamics.");
    m.def(
        "theorem3_threshold_check",
        [](double q1, double q2, double r2, double xi, double delta, double step_const, int steps) {
            const auto rep = dynamics::theorem3_threshold_check({q1, q2, r2, xi, delta}, step_const, steps);
            py::dict d;
            d["turning_found"] = rep.turning_found;
            d["turning_step"] = rep.turning_step;
            d["empirical_ratio"] = rep.empirical_ratio;
            d["delta_zhat"] = rep.delta_zhat;
            d["candidate_log_form"] = rep.candidate_log_form;
            d["candidate_linear_form"] = rep.candidate_linear_form;
            d["rel_dev_log_form"] = rep.rel_dev_log_form;
            d["rel_dev_linear_form"] = rep.rel_dev_linear_form;
            d["variance_ratio_at_turn"] = rep.variance_ratio_at_turn;
            return d;
        },
        py::arg("q1"), py::arg("q2"), py::arg("r2"), py::arg("xi"), py::arg("delta"), py::arg("step_const"),
        py::arg("steps"));
    m.def("correction_logit_shift", &dynamics::correction_logit_shift, py::arg("current_prob"), py::arg("target_prob"));

    m.def(
        "group_advantages",
        [](const std::vector<double>& rewards, double eps) { return train::group_advantages(rewards, eps); },
        py::arg("rewards"), py::arg("epsilon_std") = 1e-8);

    py::class_<env::EnvConfig>(m, "EnvConfig")
        .def(py::init<>())
        .def_readwrite("n_rooms", &env::EnvConfig::n_rooms)
        .def_readwrite("max_steps", &env::EnvConfig::max_steps)
        .def_readwrite("n_distractor_actions", &env::EnvConfig::n_distractor_actions)
        .def_readwrite("shared_feature_weight", &env::EnvConfig::shared_feature_weight)
        .def_readwrite("feature_dim", &env::EnvConfig::feature_dim)
        .def_readwrite("seed", &env::EnvConfig::seed)
        .def_readwrite("aliased_observations", &env::EnvConfig::aliased_observations)
        .def_readwrite("random_start", &env::EnvConfig::random_start)
        .def("validate", &env::EnvConfig::validate)
        .def_property_readonly("n_actions", &env::EnvConfig::n_actions);

    py::class_<env::ChainEnv>(m, "ChainEnv")
        .def(py::init<env::EnvConfig, std::uint64_t>(), py::arg("config"), py::arg("task_seed") = 0)
        .def("reset", [](env::ChainEnv& e) { return observation_dict(e.reset()); })
        .def("step",
             [](env::ChainEnv& e, int action) {
                 const auto r = e.step(action);
                 return py::make_tuple(observation_dict(r.observation), r.reward, r.done);
             })
        .def_property_readonly("done", &env::ChainEnv::done)
        .def_property_readonly("steps_taken", &env::ChainEnv::steps_taken);

    m.def(
        "label_steps",
        [](const env::EnvConfig& cfg, const std::vector<int>& actions, std::uint64_t task_seed) {
            const auto ep = env::replay_episode(cfg, task_seed, actions);
            std::vector<std::string> out;
            for (auto l : ep.labels) out.emplace_back(env::to_string(l));
            return out;
        },
        py::arg("config"), py::arg("actions"), py::arg("task_seed") = 0,
        "Replays an action sequence and returns good/bad/unlabeled per step.");
    m.def(
        "room_feature_table", [](const env::EnvConfig& cfg) { return env::room_feature_table(cfg); }, py::arg("config"));
}
