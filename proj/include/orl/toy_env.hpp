#pragma once

// Chain-of-rooms episodic environment with outcome-only reward.
//
// Rooms 0..n_rooms-1 lie on a chain; the goal follows the last room. Action 0
// advances one room, actions 1..n_distractor_actions stay in place and action
// n_distractor_actions+1 returns to the start room. An episode succeeds
// (reward 1) iff the goal is reached within max_steps actions.

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "orl/rng.hpp"

namespace orl::env {

struct EnvConfig {
    int n_rooms = 4;
    int max_steps = 6;
    int n_distractor_actions = 2;
    /// Weight of the room-independent feature component; controls how similar
    /// the observation features of different rooms are.
    double shared_feature_weight = 0.5;
    int feature_dim = 8;
    std::uint64_t seed = 0;
    /// Observation ids carry the visit-count parity of the room.
    bool aliased_observations = false;
    /// Start room drawn from the task seed instead of room 0.
    bool random_start = false;

    void validate() const;
    int n_actions() const { return n_distractor_actions + 2; }
    int advance_action() const { return 0; }
    int reset_action() const { return n_distractor_actions + 1; }
    bool is_stay_action(int a) const { return a >= 1 && a <= n_distractor_actions; }
    int goal_observation() const { return aliased_observations ? 2 * n_rooms : n_rooms; }
};

enum class Label : std::int8_t { Unlabeled = 0, Good = 1, Bad = 2 };

std::string_view to_string(Label label);

struct Episode {
    std::uint64_t task_seed = 0;
    std::vector<int> observations;  // length actions + 1
    std::vector<int> rooms;         // room index per observation, n_rooms for the goal
    std::vector<int> actions;
    int reward = 0;
    std::vector<std::vector<double>> features;  // per observation
    std::vector<Label> labels;                  // per action step, filled by label_steps
};

struct Observation {
    int id = 0;
    int room = 0;
    std::vector<double> features;
};

struct StepResult {
    Observation observation;
    bool done = false;
    int reward = 0;
};

class ChainEnv {
public:
    ChainEnv(EnvConfig cfg, std::uint64_t task_seed);

    /// Deterministic for fixed (config, task seed).
    Observation reset();
    StepResult step(int action);

    bool done() const { return done_; }
    int steps_taken() const { return steps_; }
    const EnvConfig& config() const { return cfg_; }
    const std::vector<double>& room_features(int room) const { return room_features_.at(room); }

private:
    Observation observe() const;

    EnvConfig cfg_;
    std::uint64_t task_seed_;
    std::vector<std::vector<double>> room_features_;  // n_rooms + 1 entries, last is the goal
    std::vector<int> visits_;
    int room_ = 0;
    int start_room_ = 0;
    int steps_ = 0;
    bool done_ = false;
};

/// Unit feature vectors for each room plus the goal:
/// normalize(w * shared + (1 - w) * one_hot(room)), with `shared` a unit vector
/// orthogonal to all room one-hots and drawn from the config seed.
std::vector<std::vector<double>> room_feature_table(const EnvConfig& cfg);

/// Chooses an action from (observation features, observation id, rng).
using ActionSampler = std::function<int(std::span<const double>, int, Rng&)>;

Episode run_episode(const EnvConfig& cfg, std::uint64_t task_seed, const ActionSampler& sampler, Rng& rng);

/// Replays a fixed action sequence; stops early if the episode ends.
Episode replay_episode(const EnvConfig& cfg, std::uint64_t task_seed, std::span<const int> actions);

/// Step t is Bad if observations[t] reappears later in the episode; the last
/// step of a successful episode is Good; everything else is Unlabeled.
std::vector<Label> label_steps(const Episode& ep);

struct ConsistencyResult {
    int modal_action = -1;
    int count = 0;
    bool high = false;
};

inline constexpr int kDefaultConsistencyTrials = 10;

/// Samples k actions at one observation; high consistency means the modal
/// count reaches ceil(k / 2). Ties resolve to the smallest action id.
ConsistencyResult consistency(const ActionSampler& sampler, std::span<const double> features, int observation,
                              int k_trials, Rng& rng);

struct RepetitionStats {
    double success_frequency = 0.0;
    double failure_frequency = 0.0;
    std::size_t success_steps = 0;
    std::size_t failure_steps = 0;
};

/// Fraction of steps whose (observation, action) pair already occurred earlier
/// in the same episode, pooled separately over successful and failed episodes.
RepetitionStats repetition_stats(std::span<const Episode> episodes);

/// episode_id,step,obs_id,action_id,reward,label
void write_episodes_csv(std::ostream& out, std::span<const Episode> episodes, std::size_t first_id = 0);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace orl::env
