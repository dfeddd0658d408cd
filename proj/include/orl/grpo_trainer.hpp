#pragma once

// Group-relative policy optimization on the chain environment, with the
// generative classification objective (the actor's judge head learns to label
// its own steps good or bad), gradient-coupling diagnostics and a persistent
// per-observation logit correction.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "orl/policy_net.hpp"
#include "orl/rng.hpp"
#include "orl/toy_env.hpp"

namespace orl::train {

struct TrainConfig {
    int group_size = 8;
    int tasks_per_epoch = 8;
    double learning_rate = 0.05;
    int epochs = 200;
    bool gcd_enabled = false;
    /// Coefficient on the classification loss. The combined objective is an
    /// unweighted sum at the default of 1.
    double gcd_weight = 1.0;
    int gcd_judge_samples = 4;
    double epsilon_std = 1e-8;
    bool correction_enabled = false;
    double correction_threshold = 0.5;
    env::Label correction_label = env::Label::Bad;
    double correction_target = 0.2;
    std::uint64_t seed = 0;

    int hidden_dim = 8;
    bool cold_start = true;
    /// Cold start raises p(advance) to this value in every room.
    double cold_start_target = 0.5;
    double cold_start_lr = 0.1;
    int consistency_trials = env::kDefaultConsistencyTrials;
    /// Cap on the labeled steps used for the coupling matrix.
    int coupling_probe_steps = 64;

    void validate() const;
};

/// Action-head logit bias per observation id.
using BiasTable = std::map<int, std::vector<double>>;

/// Network parameters plus the persistent correction table.
struct Policy {
    nn::PolicyParams params;
    BiasTable action_bias;

    std::span<const double> bias_for(int observation) const;
    nn::ForwardRecord act(std::span<const double> features, int observation, int chosen = -1) const;
    int sample(std::span<const double> features, int observation, Rng& rng) const;
    env::ActionSampler sampler() const;
};

/// Seeded initialization (stream "init") followed by the optional cold start.
Policy make_initial_policy(const env::EnvConfig& env_cfg, const TrainConfig& cfg);

struct StepSample {
    std::vector<double> features;
    int observation = 0;
    int room = 0;
    int action = 0;
    env::Label label = env::Label::Unlabeled;
};

/// Steps labeled Good or Bad, in episode order.
std::vector<StepSample> labeled_steps(std::span<const env::Episode> episodes);

/// (r_i - mean) / (std + eps) with the population std; all-equal rewards give zeros.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon_std);

struct GroupBatch {
    std::uint64_t task_seed = 0;
    std::vector<env::Episode> episodes;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

/// Rolls G episodes of one task. Episode g draws from stream
/// ("rollout", epoch, task, g) of the config seed.
GroupBatch roll_group(const Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg, int epoch,
                      int task);

struct CouplingReport {
    /// coupling(i,j) = err_i err_j <h_i, h_j>, err = 1 - p(chosen).
    Eigen::MatrixXd matrix;
    std::optional<double> same_class_mean;
    std::optional<double> cross_class_mean;
    std::optional<double> gap;
    std::size_t same_pairs = 0;
    std::size_t cross_pairs = 0;
};

CouplingReport coupling_matrix(const Policy& policy, std::span<const StepSample> steps);

/// Change of log p(a_j | x_j) after one ascent step of size learning_rate on
/// log p(a_i | x_i), evaluated on a copy of the parameters.
double influence_probe(const Policy& policy, const StepSample& step_i, const StepSample& step_j, double learning_rate);

struct GcdMetrics {
    std::size_t labeled_steps = 0;
    std::size_t judgments = 0;
    /// Fraction of sampled judgments that matched the label.
    double judge_accuracy = 0.0;
    double label_bad_fraction = 0.0;
    double predicted_bad_fraction = 0.0;
    /// Every labeled step has the same class; the judge can be right without learning anything.
    bool single_class_labels = false;
    /// The judge answers BAD on nearly everything while GOOD labels exist.
    bool all_negative_collapse = false;
    bool skipped = false;
    double loss = 0.0;
};

/// One classification pass: each labeled step is a group of judge samples
/// rewarded 1 on an exact label match, normalized within the group; a single
/// ascent step of learning_rate * gcd_weight is taken on the mean gradient.
GcdMetrics gcd_epoch(Policy& policy, std::span<const StepSample> steps, const TrainConfig& cfg, Rng& rng);

/// Adds a logit bias to every (observation, action) carrying the trigger label
/// whose probability exceeds the trigger threshold, bringing it to the target.
/// Returns the number of corrections made.
std::size_t apply_training_correction(Policy& policy, std::span<const StepSample> steps, const TrainConfig& cfg);

struct TrainRecord {
    int epoch = 0;
    double success_rate = 0.0;
    double mean_entropy = 0.0;
    double judge_accuracy = 0.0;
    std::optional<double> coupling_same;
    std::optional<double> coupling_cross;
    std::optional<double> coupling_gap;
    double high_consistency_fraction = 0.0;
    double loss_grpo = 0.0;
    double loss_gcd = 0.0;

    std::vector<int> consistency_histogram;               // modal count 0..k over repeated steps
    std::vector<std::vector<double>> room_action_probs;  // [room][action]
    std::size_t corrections = 0;
    GcdMetrics gcd;
};

/// epoch,success_rate,mean_entropy,judge_accuracy,coupling_same,coupling_cross,
/// coupling_gap,high_consistency_fraction,loss_grpo,loss_gcd
void write_train_header(std::ostream& out);
void write_train_row(std::ostream& out, const TrainRecord& rec);

struct EpochResult {
    TrainRecord record;
    std::vector<env::Episode> episodes;
};

/// One GRPO pass: tasks_per_epoch groups, one parameter update per group.
/// Fills success rate, entropy and loss_grpo of the record.
EpochResult grpo_epoch(Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg, int epoch);

using EpochCallback = std::function<void(const TrainRecord&, const Policy&)>;

/// Full run: GRPO, then GCD and correction when enabled, then diagnostics.
/// Coupling is measured on `coupling_probe` when non-empty, otherwise on the
/// epoch's own labeled steps.
std::vector<TrainRecord> train(Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                               std::span<const StepSample> coupling_probe = {}, const EpochCallback& on_epoch = {});

/// Labeled steps from rollouts of `policy` (stream "probe"), capped at max_steps
/// with GOOD and BAD steps interleaved so both classes survive the cap.
std::vector<StepSample> collect_probe_steps(const Policy& policy, const env::EnvConfig& env_cfg,
                                            const TrainConfig& cfg, int n_groups, int max_steps);

/// Exact outcome law of the event "the episode takes `action` at observation
/// `observation`", enumerated over every action sequence.
struct EventOutcomeProbs {
    double event_success = 0.0;
    double event_fail = 0.0;
    double no_event_success = 0.0;
    double no_event_fail = 0.0;

    double q() const { return event_success + event_fail; }
    double p() const { return no_event_fail / (no_event_success + no_event_fail); }
    double r() const { return event_fail / q() - p(); }
};

EventOutcomeProbs enumerate_event_outcomes(const Policy& policy, const env::EnvConfig& env_cfg,
                                           std::uint64_t task_seed, int observation, int action);

struct AdvantageRealization {
    double empirical_mean = 0.0;
    double standard_error = 0.0;
    double predicted = 0.0;
    double first_order_prediction = 0.0;
    double q_measured = 0.0;
    EventOutcomeProbs exact;
    std::size_t groups = 0;
};

/// Monte Carlo mean of A * 1{event} under group normalization, compared with
/// the exact group-normalized expectation for the enumerated (p, q, r).
AdvantageRealization monte_carlo_step_advantage(const Policy& policy, const env::EnvConfig& env_cfg, int observation,
                                                int action, int group_size, int n_groups, double epsilon_std,
                                                std::uint64_t seed);

struct PushMeasurement {
    double q = 0.0;
    double risk = 0.0;
    /// First-order change of log p(action | obs) from one GRPO update, split by
    /// whether the contributing step was at the same observation.
    double self_drift = 0.0;
    double other_drift = 0.0;
    /// other_drift expressed in expected-advantage units: other_drift / kappa with
    /// kappa = self_drift / (q r (q - 1)).
    double push = 0.0;
    double self_correction = 0.0;  // q r (1 - q)
    bool push_below_self_correction = false;
};

PushMeasurement measure_coupling_push(const Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                                      int observation, int action, int n_groups);

}  // namespace orl::train
