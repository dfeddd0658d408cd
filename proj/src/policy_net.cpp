#include "orl/policy_net.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "orl/csv.hpp"
#include "orl/error.hpp"

namespace orl::nn {
namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
    return {x.data(), static_cast<Eigen::Index>(x.size())};
}

void check_input(const PolicyParams& params, std::span<const double> features) {
    ORL_REQUIRE(static_cast<int>(features.size()) == params.feature_dim(),
                "feature vector has " + std::to_string(features.size()) + " entries, policy expects " +
                    std::to_string(params.feature_dim()));
}

void check_bias(const PolicyParams& params, Head head, std::span<const double> bias) {
    ORL_REQUIRE(bias.empty() || static_cast<int>(bias.size()) == params.head_size(head),
                "logit bias length must match the head size");
}

}  // namespace

void PolicyParams::validate() const {
    ORL_REQUIRE(n_actions >= 1, "policy needs at least one action");
    ORL_REQUIRE(w1.cols() >= 2, "hidden_dim must be >= 2");
    ORL_REQUIRE(w2.rows() == w1.cols(), "W2 rows must equal hidden_dim");
    ORL_REQUIRE(w2.cols() == n_actions + kJudgeClasses, "W2 needs n_actions + 2 columns");
    ORL_REQUIRE(w1.allFinite() && w2.allFinite(), "policy parameters must be finite");
}

PolicyParams PolicyParams::init(int feature_dim, int hidden_dim, int n_actions, Rng& rng) {
    ORL_REQUIRE(feature_dim >= 1 && hidden_dim >= 2 && n_actions >= 1, "invalid policy shape");
    PolicyParams p;
    p.n_actions = n_actions;
    p.w1.resize(feature_dim, hidden_dim);
    p.w2.resize(hidden_dim, n_actions + kJudgeClasses);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    // Column-major fill order is part of the seeded contract.
    for (Eigen::Index j = 0; j < p.w1.cols(); ++j)
        for (Eigen::Index i = 0; i < p.w1.rows(); ++i) p.w1(i, j) = rng.symmetric(s1);
    for (Eigen::Index j = 0; j < p.w2.cols(); ++j)
        for (Eigen::Index i = 0; i < p.w2.rows(); ++i) p.w2(i, j) = rng.symmetric(s2);
    return p;
}

ForwardRecord forward(const PolicyParams& params, std::span<const double> features, Head head, int chosen,
                      std::span<const double> logit_bias) {
    params.validate();
    check_input(params, features);
    check_bias(params, head, logit_bias);
    const int k = params.head_size(head);
    ORL_REQUIRE(chosen < k, "chosen index out of range for head");

    ForwardRecord rec;
    rec.input = as_vector(features);
    rec.hidden = (params.w1.transpose() * rec.input).array().tanh();
    rec.logits = params.w2.middleCols(params.head_offset(head), k).transpose() * rec.hidden;
    if (!logit_bias.empty()) rec.logits += as_vector(logit_bias);
    const double mx = rec.logits.maxCoeff();
    rec.probs = (rec.logits.array() - mx).unaryExpr([](double v) { return std::exp(v); });
    const double total = rec.probs.sum();
    rec.probs /= total;
    rec.chosen = chosen;
    if (chosen >= 0) rec.log_prob = rec.logits(chosen) - mx - std::log(total);
    return rec;
}

Gradient Gradient::zeros_like(const PolicyParams& params) {
    return {Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols()),
            Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols())};
}

Gradient& Gradient::add_scaled(const Gradient& other, double scale) {
    w1 += scale * other.w1;
    w2 += scale * other.w2;
    return *this;
}

double Gradient::max_abs() const { return std::max(w1.cwiseAbs().maxCoeff(), w2.cwiseAbs().maxCoeff()); }

ForwardRecord accumulate_grad_log_prob(const PolicyParams& params, std::span<const double> features, Head head,
                                       int chosen, double weight, Gradient& out, std::span<const double> logit_bias) {
    ORL_REQUIRE(chosen >= 0, "chosen index must be >= 0");
    ForwardRecord rec = forward(params, features, head, chosen, logit_bias);
    const int k = params.head_size(head);
    const int off = params.head_offset(head);

    Eigen::VectorXd err = -rec.probs;  // e_chosen - p
    err(chosen) += 1.0;
    out.w2.middleCols(off, k).noalias() += weight * rec.hidden * err.transpose();
    const Eigen::VectorXd g_hidden = params.w2.middleCols(off, k) * err;
    const Eigen::VectorXd g_pre = g_hidden.array() * (1.0 - rec.hidden.array().square());
    out.w1.noalias() += weight * rec.input * g_pre.transpose();
    return rec;
}

Gradient grad_log_prob(const PolicyParams& params, std::span<const double> features, Head head, int chosen,
                       std::span<const double> logit_bias) {
    Gradient g = Gradient::zeros_like(params);
    accumulate_grad_log_prob(params, features, head, chosen, 1.0, g, logit_bias);
    return g;
}

void apply_update_in_place(PolicyParams& params, const Gradient& gradient, double learning_rate) {
    ORL_REQUIRE(gradient.w1.rows() == params.w1.rows() && gradient.w1.cols() == params.w1.cols() &&
                    gradient.w2.rows() == params.w2.rows() && gradient.w2.cols() == params.w2.cols(),
                "gradient shape does not match parameters");
    params.w1 += learning_rate * gradient.w1;
    params.w2 += learning_rate * gradient.w2;
}

PolicyParams apply_update(const PolicyParams& params, const Gradient& gradient, double learning_rate) {
    PolicyParams out = params;
    apply_update_in_place(out, gradient, learning_rate);
    return out;
}

Eigen::VectorXd embed(const PolicyParams& params, std::span<const double> features) {
    check_input(params, features);
    return (params.w1.transpose() * as_vector(features)).array().tanh();
}

int cold_start(PolicyParams& params, std::span<const std::vector<double>> inputs, int action, double target_prob,
               double learning_rate, int max_iters) {
    ORL_REQUIRE(action >= 0 && action < params.n_actions, "cold-start action out of range");
    ORL_REQUIRE(target_prob > 0.0 && target_prob < 1.0, "cold-start target must lie in (0,1)");
    for (int iter = 0; iter < max_iters; ++iter) {
        Gradient g = Gradient::zeros_like(params);
        bool all_reached = true;
        for (const auto& x : inputs) {
            const ForwardRecord rec = forward(params, x, Head::Action, action);
            if (rec.probs(action) >= target_prob) continue;
            all_reached = false;
            accumulate_grad_log_prob(params, x, Head::Action, action, 1.0, g);
        }
        if (all_reached) return iter;
        apply_update_in_place(params, g, learning_rate);
    }
    return max_iters;
}

namespace {

void write_matrix(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, const char* name) {
    std::string tag;
    Eigen::Index rows = 0, cols = 0;
    ORL_REQUIRE(static_cast<bool>(in >> tag >> rows >> cols) && tag == name,
                std::string("checkpoint: expected '") + name + " <rows> <cols>'");
    ORL_REQUIRE(rows > 0 && cols > 0 && rows < 1'000'000 && cols < 1'000'000, "checkpoint: bad matrix shape");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            std::string tok;
            ORL_REQUIRE(static_cast<bool>(in >> tok), std::string("checkpoint: truncated ") + name);
            m(i, j) = std::stod(tok);
        }
    return m;
}

}  // namespace

void save_checkpoint(std::ostream& out, const PolicyParams& params) {
    params.validate();
    out << "orl-policy " << kCheckpointVersion << '\n';
    out << "n_actions " << params.n_actions << '\n';
    write_matrix(out, "w1", params.w1);
    write_matrix(out, "w2", params.w2);
}

PolicyParams load_checkpoint(std::istream& in) {
    std::string magic, key;
    int version = 0;
    ORL_REQUIRE(static_cast<bool>(in >> magic >> version) && magic == "orl-policy", "checkpoint: bad header");
    ORL_REQUIRE(version == kCheckpointVersion, "checkpoint: unsupported version " + std::to_string(version));
    PolicyParams p;
    ORL_REQUIRE(static_cast<bool>(in >> key >> p.n_actions) && key == "n_actions", "checkpoint: missing n_actions");
    p.w1 = read_matrix(in, "w1");
    p.w2 = read_matrix(in, "w2");
    p.validate();
    return p;
}

}  // namespace orl::nn
