#include "orl/toy_env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "orl/csv.hpp"
#include "orl/error.hpp"

namespace orl::env {

void EnvConfig::validate() const {
    ORL_REQUIRE(n_rooms >= 2, "n_rooms must be >= 2, got " + std::to_string(n_rooms));
    ORL_REQUIRE(max_steps >= n_rooms, "max_steps must be >= n_rooms, got " + std::to_string(max_steps));
    ORL_REQUIRE(n_distractor_actions >= 0, "n_distractor_actions must be >= 0");
    ORL_REQUIRE(shared_feature_weight >= 0.0 && shared_feature_weight <= 1.0,
                "shared_feature_weight must lie in [0,1]");
    ORL_REQUIRE(feature_dim >= n_rooms + 2,
                "feature_dim must be >= n_rooms + 2, got " + std::to_string(feature_dim));
}

std::string_view to_string(Label label) {
    switch (label) {
        case Label::Good: return "good";
        case Label::Bad: return "bad";
        default: return "unlabeled";
    }
}

std::vector<std::vector<double>> room_feature_table(const EnvConfig& cfg) {
    cfg.validate();
    const auto dim = static_cast<std::size_t>(cfg.feature_dim);
    std::vector<double> shared(dim, 0.0);
    Rng rng = make_stream(cfg.seed, "shared-feature");
    double norm = 0.0;
    while (norm < 1e-6) {
        norm = 0.0;
        for (std::size_t i = static_cast<std::size_t>(cfg.n_rooms); i < dim; ++i) {
            shared[i] = rng.normal();
            norm += shared[i] * shared[i];
        }
    }
    norm = std::sqrt(norm);
    for (double& v : shared) v /= norm;

    const double w = cfg.shared_feature_weight;
    std::vector<std::vector<double>> table;
    for (int room = 0; room < cfg.n_rooms; ++room) {
        std::vector<double> f(dim);
        for (std::size_t i = 0; i < dim; ++i) f[i] = w * shared[i];
        f[static_cast<std::size_t>(room)] += 1.0 - w;
        double n2 = 0.0;
        for (double v : f) n2 += v * v;
        const double n = std::sqrt(n2);
        for (double& v : f) v /= n;
        table.push_back(std::move(f));
    }
    table.push_back(shared);  // goal
    return table;
}

ChainEnv::ChainEnv(EnvConfig cfg, std::uint64_t task_seed)
    : cfg_(std::move(cfg)), task_seed_(task_seed), room_features_(room_feature_table(cfg_)) {
    if (cfg_.random_start) {
        Rng rng = make_stream(cfg_.seed, "start-room", {task_seed_});
        start_room_ = static_cast<int>(rng.next() % static_cast<std::uint64_t>(cfg_.n_rooms));
    }
    reset();
}

Observation ChainEnv::reset() {
    visits_.assign(static_cast<std::size_t>(cfg_.n_rooms), 0);
    room_ = start_room_;
    visits_[static_cast<std::size_t>(room_)] = 1;
    steps_ = 0;
    done_ = false;
    return observe();
}

Observation ChainEnv::observe() const {
    Observation o;
    o.room = room_;
    if (room_ == cfg_.n_rooms) {
        o.id = cfg_.goal_observation();
    } else if (cfg_.aliased_observations) {
        o.id = 2 * room_ + (visits_[static_cast<std::size_t>(room_)] % 2);
    } else {
        o.id = room_;
    }
    o.features = room_features_[static_cast<std::size_t>(room_)];
    return o;
}

StepResult ChainEnv::step(int action) {
    ORL_REQUIRE(!done_, "step called on a finished episode");
    ORL_REQUIRE(action >= 0 && action < cfg_.n_actions(),
                "action id " + std::to_string(action) + " out of range [0," + std::to_string(cfg_.n_actions()) + ")");
    if (action == cfg_.advance_action()) {
        ++room_;
    } else if (action == cfg_.reset_action()) {
        room_ = start_room_;
    }
    ++steps_;
    if (room_ < cfg_.n_rooms) ++visits_[static_cast<std::size_t>(room_)];

    StepResult out;
    const bool at_goal = room_ == cfg_.n_rooms;
    out.done = at_goal || steps_ >= cfg_.max_steps;
    out.reward = at_goal ? 1 : 0;
    done_ = out.done;
    out.observation = observe();
    return out;
}

namespace {

Episode start_episode(ChainEnv& env, std::uint64_t task_seed) {
    Episode ep;
    ep.task_seed = task_seed;
    Observation o = env.reset();
    ep.observations.push_back(o.id);
    ep.rooms.push_back(o.room);
    ep.features.push_back(std::move(o.features));
    return ep;
}

void record_step(Episode& ep, int action, StepResult&& r) {
    ep.actions.push_back(action);
    ep.observations.push_back(r.observation.id);
    ep.rooms.push_back(r.observation.room);
    ep.features.push_back(std::move(r.observation.features));
    ep.reward = r.reward;
}

}  // namespace

Episode run_episode(const EnvConfig& cfg, std::uint64_t task_seed, const ActionSampler& sampler, Rng& rng) {
    ChainEnv env(cfg, task_seed);
    Episode ep = start_episode(env, task_seed);
    while (!env.done()) {
        const int action = sampler(ep.features.back(), ep.observations.back(), rng);
        record_step(ep, action, env.step(action));
    }
    ep.labels = label_steps(ep);
    return ep;
}

Episode replay_episode(const EnvConfig& cfg, std::uint64_t task_seed, std::span<const int> actions) {
    ChainEnv env(cfg, task_seed);
    Episode ep = start_episode(env, task_seed);
    for (int a : actions) {
        if (env.done()) break;
        record_step(ep, a, env.step(a));
    }
    ep.labels = label_steps(ep);
    return ep;
}

std::vector<Label> label_steps(const Episode& ep) {
    const std::size_t n = ep.actions.size();
    std::vector<Label> labels(n, Label::Unlabeled);
    for (std::size_t t = 0; t < n; ++t) {
        const int obs = ep.observations[t];
        const auto later = ep.observations.begin() + static_cast<std::ptrdiff_t>(t + 1);
        if (std::find(later, ep.observations.end(), obs) != ep.observations.end()) labels[t] = Label::Bad;
    }
    if (n > 0 && ep.reward == 1) labels[n - 1] = Label::Good;
    return labels;
}

ConsistencyResult consistency(const ActionSampler& sampler, std::span<const double> features, int observation,
                              int k_trials, Rng& rng) {
    ORL_REQUIRE(k_trials >= 1, "k_trials must be >= 1");
    std::map<int, int> counts;
    for (int i = 0; i < k_trials; ++i) ++counts[sampler(features, observation, rng)];
    ConsistencyResult res;
    for (const auto& [action, count] : counts) {
        if (count > res.count) {
            res.count = count;
            res.modal_action = action;
        }
    }
    res.high = res.count >= (k_trials + 1) / 2;
    return res;
}

RepetitionStats repetition_stats(std::span<const Episode> episodes) {
    ORL_REQUIRE(!episodes.empty(), "repetition_stats needs at least one episode");
    std::size_t rep_s = 0, rep_f = 0;
    RepetitionStats st;
    for (const auto& ep : episodes) {
        std::set<std::pair<int, int>> seen;
        std::size_t repeats = 0;
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            if (!seen.insert({ep.observations[t], ep.actions[t]}).second) ++repeats;
        }
        if (ep.reward == 1) {
            rep_s += repeats;
            st.success_steps += ep.actions.size();
        } else {
            rep_f += repeats;
            st.failure_steps += ep.actions.size();
        }
    }
    if (st.success_steps > 0) st.success_frequency = static_cast<double>(rep_s) / static_cast<double>(st.success_steps);
    if (st.failure_steps > 0) st.failure_frequency = static_cast<double>(rep_f) / static_cast<double>(st.failure_steps);
    return st;
}

void write_episodes_csv(std::ostream& out, std::span<const Episode> episodes, std::size_t first_id) {
    CsvWriter csv(out);
    csv.field("episode_id").field("step").field("obs_id").field("action_id").field("reward").field("label");
    csv.end_row();
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const Episode& ep = episodes[e];
        const auto labels = ep.labels.size() == ep.actions.size() ? ep.labels : label_steps(ep);
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            csv.field(first_id + e).field(t).field(ep.observations[t]).field(ep.actions[t]).field(ep.reward);
            csv.field(to_string(labels[t]));
            csv.end_row();
        }
    }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    ORL_REQUIRE(a.size() == b.size(), "cosine_similarity needs equal lengths");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

}  // namespace orl::env
