#pragma once

// Two-layer softmax policy with an action head and a two-class judge head.
//
//   h = tanh(W1^T x)          hidden embedding, W1 is feature_dim x hidden_dim
//   z = W2^T h                W2 is hidden_dim x (n_actions + 2)
//
// Columns [0, n_actions) of W2 form the action head; the last two columns are
// the judge classes GOOD and BAD. Each head is a softmax over its own columns,
// so judge columns are never sampled as environment actions.

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "orl/rng.hpp"

namespace orl::nn {

enum class Head { Action, Judge };

inline constexpr int kJudgeGood = 0;
inline constexpr int kJudgeBad = 1;
inline constexpr int kJudgeClasses = 2;

struct PolicyParams {
    Eigen::MatrixXd w1;
    Eigen::MatrixXd w2;
    int n_actions = 0;

    int feature_dim() const { return static_cast<int>(w1.rows()); }
    int hidden_dim() const { return static_cast<int>(w1.cols()); }
    int head_size(Head head) const { return head == Head::Action ? n_actions : kJudgeClasses; }
    int head_offset(Head head) const { return head == Head::Action ? 0 : n_actions; }
    void validate() const;

    /// Entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static PolicyParams init(int feature_dim, int hidden_dim, int n_actions, Rng& rng);
};

struct ForwardRecord {
    Eigen::VectorXd input;
    Eigen::VectorXd hidden;
    Eigen::VectorXd logits;  // active head only
    Eigen::VectorXd probs;   // active head only
    int chosen = -1;
    double log_prob = 0.0;
};

/// `logit_bias` (empty or one entry per head class) is added to the head's
/// logits before the softmax. `chosen` fills the record's log_prob when >= 0.
ForwardRecord forward(const PolicyParams& params, std::span<const double> features, Head head, int chosen = -1,
                      std::span<const double> logit_bias = {});

struct Gradient {
    Eigen::MatrixXd w1;
    Eigen::MatrixXd w2;

    static Gradient zeros_like(const PolicyParams& params);
    Gradient& add_scaled(const Gradient& other, double scale);
    double max_abs() const;
};

/// d log p(chosen) / d(W1, W2) for the given head.
Gradient grad_log_prob(const PolicyParams& params, std::span<const double> features, Head head, int chosen,
                       std::span<const double> logit_bias = {});

/// out += weight * d log p(chosen). Returns the forward record it used.
ForwardRecord accumulate_grad_log_prob(const PolicyParams& params, std::span<const double> features, Head head,
                                       int chosen, double weight, Gradient& out,
                                       std::span<const double> logit_bias = {});

/// params + learning_rate * gradient (ascent).
PolicyParams apply_update(const PolicyParams& params, const Gradient& gradient, double learning_rate);
void apply_update_in_place(PolicyParams& params, const Gradient& gradient, double learning_rate);

/// tanh(W1^T x).
Eigen::VectorXd embed(const PolicyParams& params, std::span<const double> features);

/// Supervised warm start: ascends log p(action | x) on every feature vector
/// until each reaches target_prob or max_iters passes are done. Returns the
/// number of passes used.
int cold_start(PolicyParams& params, std::span<const std::vector<double>> inputs, int action, double target_prob,
               double learning_rate, int max_iters);

/// Text checkpoint:
///   orl-policy 1
///   n_actions <n>
///   w1 <rows> <cols>
///   <rows lines of cols values>
///   w2 <rows> <cols>
///   <rows lines of cols values>
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams load_checkpoint(std::istream& in);

}  // namespace orl::nn
