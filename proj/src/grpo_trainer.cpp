#include "orl/grpo_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "orl/csv.hpp"
#include "orl/dynamics.hpp"
#include "orl/error.hpp"
#include "orl/risk_model.hpp"

namespace orl::train {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::span<const double> probs_span(const nn::ForwardRecord& rec) {
    return {rec.probs.data(), static_cast<std::size_t>(rec.probs.size())};
}

double frobenius_dot(const nn::Gradient& a, const nn::Gradient& b) {
    return a.w1.cwiseProduct(b.w1).sum() + a.w2.cwiseProduct(b.w2).sum();
}

double entropy(const Eigen::VectorXd& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

int room_of(const env::EnvConfig& cfg, int observation) {
    if (observation == cfg.goal_observation()) return cfg.n_rooms;
    return cfg.aliased_observations ? observation / 2 : observation;
}

std::vector<double> features_of(const env::EnvConfig& cfg, int observation) {
    const auto table = env::room_feature_table(cfg);
    const int room = room_of(cfg, observation);
    ORL_REQUIRE(room >= 0 && room <= cfg.n_rooms, "observation id " + std::to_string(observation) + " out of range");
    return table[static_cast<std::size_t>(room)];
}

bool took_action_at(const env::Episode& ep, int observation, int action) {
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
        if (ep.observations[t] == observation && ep.actions[t] == action) return true;
    return false;
}

// sum_g (A_g / G) sum_t d log p(a_t | x_t) over a group, routed to `self_out`
// for steps at `split_obs` and to `other_out` otherwise. Returns the surrogate loss.
double accumulate_group(const Policy& policy, const GroupBatch& batch, nn::Gradient& self_out,
                        nn::Gradient& other_out, int split_obs, double* entropy_sum, std::size_t* step_count) {
    const double g_size = static_cast<double>(batch.episodes.size());
    double loss = 0.0;
    for (std::size_t g = 0; g < batch.episodes.size(); ++g) {
        const env::Episode& ep = batch.episodes[g];
        const double w = batch.advantages[g] / g_size;
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            const int obs = ep.observations[t];
            nn::Gradient& out = obs == split_obs ? self_out : other_out;
            const auto rec = nn::accumulate_grad_log_prob(policy.params, ep.features[t], nn::Head::Action,
                                                          ep.actions[t], w, out, policy.bias_for(obs));
            loss -= w * rec.log_prob;
            if (entropy_sum) *entropy_sum += entropy(rec.probs);
            if (step_count) ++*step_count;
        }
    }
    return loss;
}

GroupBatch roll_batch(const Policy& policy, const env::EnvConfig& env_cfg, std::uint64_t task_seed, int group_size,
                      double epsilon_std, std::uint64_t root, std::string_view label, std::uint64_t a,
                      std::uint64_t b) {
    GroupBatch batch;
    batch.task_seed = task_seed;
    const auto sampler = policy.sampler();
    for (int g = 0; g < group_size; ++g) {
        Rng rng = make_stream(root, label, {a, b, static_cast<std::uint64_t>(g)});
        batch.episodes.push_back(env::run_episode(env_cfg, task_seed, sampler, rng));
        batch.rewards.push_back(batch.episodes.back().reward);
    }
    batch.advantages = group_advantages(batch.rewards, epsilon_std);
    return batch;
}

std::optional<double> mean_or_absent(double sum, std::size_t n) {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace

void TrainConfig::validate() const {
    ORL_REQUIRE(group_size >= 2, "group_size must be >= 2, got " + std::to_string(group_size));
    ORL_REQUIRE(tasks_per_epoch >= 1, "tasks_per_epoch must be >= 1");
    ORL_REQUIRE(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be finite and >= 0");
    ORL_REQUIRE(epochs >= 0, "epochs must be >= 0");
    ORL_REQUIRE(std::isfinite(gcd_weight) && gcd_weight >= 0.0, "gcd_weight must be >= 0");
    ORL_REQUIRE(gcd_judge_samples >= 2, "gcd_judge_samples must be >= 2");
    ORL_REQUIRE(epsilon_std > 0.0, "epsilon_std must be > 0");
    ORL_REQUIRE(correction_threshold > 0.0 && correction_threshold < 1.0, "correction_threshold must lie in (0,1)");
    ORL_REQUIRE(correction_target > 0.0 && correction_target < correction_threshold,
                "correction_target must lie in (0, correction_threshold)");
    ORL_REQUIRE(correction_label != env::Label::Unlabeled, "correction_label must be good or bad");
    ORL_REQUIRE(hidden_dim >= 2, "hidden_dim must be >= 2");
    ORL_REQUIRE(cold_start_target > 0.0 && cold_start_target < 1.0, "cold_start_target must lie in (0,1)");
    ORL_REQUIRE(cold_start_lr > 0.0, "cold_start_lr must be > 0");
    ORL_REQUIRE(consistency_trials >= 1, "consistency_trials must be >= 1");
    ORL_REQUIRE(coupling_probe_steps >= 2, "coupling_probe_steps must be >= 2");
}

std::span<const double> Policy::bias_for(int observation) const {
    const auto it = action_bias.find(observation);
    if (it == action_bias.end()) return {};
    return it->second;
}

nn::ForwardRecord Policy::act(std::span<const double> features, int observation, int chosen) const {
    return nn::forward(params, features, nn::Head::Action, chosen, bias_for(observation));
}

int Policy::sample(std::span<const double> features, int observation, Rng& rng) const {
    const auto rec = act(features, observation);
    return static_cast<int>(rng.categorical(probs_span(rec)));
}

env::ActionSampler Policy::sampler() const {
    return [this](std::span<const double> features, int observation, Rng& rng) {
        return sample(features, observation, rng);
    };
}

Policy make_initial_policy(const env::EnvConfig& env_cfg, const TrainConfig& cfg) {
    env_cfg.validate();
    cfg.validate();
    Rng rng = make_stream(cfg.seed, "init");
    Policy policy;
    policy.params = nn::PolicyParams::init(env_cfg.feature_dim, cfg.hidden_dim, env_cfg.n_actions(), rng);
    if (cfg.cold_start) {
        auto table = env::room_feature_table(env_cfg);
        table.pop_back();  // goal
        nn::cold_start(policy.params, table, env_cfg.advance_action(), cfg.cold_start_target, cfg.cold_start_lr, 10000);
    }
    return policy;
}

std::vector<StepSample> labeled_steps(std::span<const env::Episode> episodes) {
    std::vector<StepSample> out;
    for (const auto& ep : episodes) {
        const auto labels = ep.labels.size() == ep.actions.size() ? ep.labels : env::label_steps(ep);
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            if (labels[t] == env::Label::Unlabeled) continue;
            out.push_back({ep.features[t], ep.observations[t], ep.rooms[t], ep.actions[t], labels[t]});
        }
    }
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon_std) {
    ORL_REQUIRE(rewards.size() >= 2, "group_advantages needs at least 2 rewards");
    ORL_REQUIRE(epsilon_std > 0.0, "epsilon_std must be > 0");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> adv(rewards.size(), 0.0);
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + epsilon_std);
    return adv;
}

GroupBatch roll_group(const Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg, int epoch,
                      int task) {
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto k = static_cast<std::uint64_t>(task);
    return roll_batch(policy, env_cfg, stream_seed(cfg.seed, "task", {e, k}), cfg.group_size, cfg.epsilon_std,
                      cfg.seed, "rollout", e, k);
}

CouplingReport coupling_matrix(const Policy& policy, std::span<const StepSample> steps) {
    ORL_REQUIRE(steps.size() >= 2, "coupling_matrix needs at least 2 steps");
    const auto n = static_cast<Eigen::Index>(steps.size());
    Eigen::MatrixXd h(policy.params.hidden_dim(), n);
    Eigen::VectorXd err(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = steps[static_cast<std::size_t>(i)];
        const auto rec = policy.act(s.features, s.observation, s.action);
        h.col(i) = rec.hidden;
        err(i) = 1.0 - rec.probs(s.action);
    }
    CouplingReport rep;
    rep.matrix.resize(n, n);
    double same = 0.0, cross = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double c = err(i) * err(j) * h.col(i).dot(h.col(j));
            rep.matrix(i, j) = c;
            rep.matrix(j, i) = c;
            if (i == j) continue;
            const auto li = steps[static_cast<std::size_t>(i)].label;
            const auto lj = steps[static_cast<std::size_t>(j)].label;
            if (li == env::Label::Unlabeled || lj == env::Label::Unlabeled) continue;
            if (li == lj) {
                same += c;
                ++rep.same_pairs;
            } else {
                cross += c;
                ++rep.cross_pairs;
            }
        }
    }
    rep.same_class_mean = mean_or_absent(same, rep.same_pairs);
    rep.cross_class_mean = mean_or_absent(cross, rep.cross_pairs);
    if (rep.same_class_mean && rep.cross_class_mean) rep.gap = *rep.same_class_mean - *rep.cross_class_mean;
    return rep;
}

double influence_probe(const Policy& policy, const StepSample& step_i, const StepSample& step_j, double learning_rate) {
    ORL_REQUIRE(std::isfinite(learning_rate), "learning_rate must be finite");
    const double before = policy.act(step_j.features, step_j.observation, step_j.action).log_prob;
    const auto grad = nn::grad_log_prob(policy.params, step_i.features, nn::Head::Action, step_i.action,
                                        policy.bias_for(step_i.observation));
    Policy probe = policy;
    nn::apply_update_in_place(probe.params, grad, learning_rate);
    return probe.act(step_j.features, step_j.observation, step_j.action).log_prob - before;
}

GcdMetrics gcd_epoch(Policy& policy, std::span<const StepSample> steps, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    GcdMetrics m;
    std::size_t bad_labels = 0, good_labels = 0, correct = 0, predicted_bad = 0, good_hits = 0;
    nn::Gradient grad = nn::Gradient::zeros_like(policy.params);
    double loss = 0.0;
    const int n = cfg.gcd_judge_samples;
    for (const auto& s : steps) {
        if (s.label == env::Label::Unlabeled) continue;
        ++m.labeled_steps;
        const bool is_bad = s.label == env::Label::Bad;
        (is_bad ? bad_labels : good_labels) += 1;
        const int target = is_bad ? nn::kJudgeBad : nn::kJudgeGood;
        const auto rec = nn::forward(policy.params, s.features, nn::Head::Judge);

        std::vector<int> judgments(static_cast<std::size_t>(n));
        std::vector<double> rewards(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            const int y = static_cast<int>(rng.categorical(probs_span(rec)));
            judgments[static_cast<std::size_t>(j)] = y;
            rewards[static_cast<std::size_t>(j)] = y == target ? 1.0 : 0.0;
            correct += y == target;
            predicted_bad += y == nn::kJudgeBad;
            good_hits += !is_bad && y == nn::kJudgeGood;
        }
        const auto adv = group_advantages(rewards, cfg.epsilon_std);
        for (int j = 0; j < n; ++j) {
            const double a = adv[static_cast<std::size_t>(j)];
            const int y = judgments[static_cast<std::size_t>(j)];
            loss -= a * (std::log(rec.probs(y))) / n;
            if (a != 0.0) nn::accumulate_grad_log_prob(policy.params, s.features, nn::Head::Judge, y, a / n, grad);
        }
    }
    if (m.labeled_steps == 0) {
        m.skipped = true;
        return m;
    }
    const double labeled = static_cast<double>(m.labeled_steps);
    m.judgments = m.labeled_steps * static_cast<std::size_t>(n);
    m.judge_accuracy = static_cast<double>(correct) / static_cast<double>(m.judgments);
    m.label_bad_fraction = static_cast<double>(bad_labels) / labeled;
    m.predicted_bad_fraction = static_cast<double>(predicted_bad) / static_cast<double>(m.judgments);
    m.single_class_labels = bad_labels == 0 || good_labels == 0;
    m.all_negative_collapse = good_labels > 0 && good_hits == 0;
    m.loss = cfg.gcd_weight * loss / labeled;
    if (cfg.gcd_weight > 0.0)
        nn::apply_update_in_place(policy.params, grad, cfg.learning_rate * cfg.gcd_weight / labeled);
    return m;
}

std::size_t apply_training_correction(Policy& policy, std::span<const StepSample> steps, const TrainConfig& cfg) {
    cfg.validate();
    std::set<std::pair<int, int>> seen;
    std::size_t count = 0;
    for (const auto& s : steps) {
        if (s.label != cfg.correction_label) continue;
        if (!seen.insert({s.observation, s.action}).second) continue;
        const double p = policy.act(s.features, s.observation).probs(s.action);
        if (!(p > cfg.correction_threshold) || p >= 1.0) continue;
        auto& bias = policy.action_bias[s.observation];
        if (bias.empty()) bias.assign(static_cast<std::size_t>(policy.params.n_actions), 0.0);
        bias[static_cast<std::size_t>(s.action)] += dynamics::correction_logit_shift(p, cfg.correction_target);
        ++count;
    }
    return count;
}

void write_train_header(std::ostream& out) {
    CsvWriter csv(out);
    for (const char* name : {"epoch", "success_rate", "mean_entropy", "judge_accuracy", "coupling_same",
                             "coupling_cross", "coupling_gap", "high_consistency_fraction", "loss_grpo", "loss_gcd"})
        csv.field(name);
    csv.end_row();
}

void write_train_row(std::ostream& out, const TrainRecord& rec) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    CsvWriter csv(out);
    csv.field(rec.epoch).field(rec.success_rate).field(rec.mean_entropy).field(rec.judge_accuracy);
    csv.field(opt(rec.coupling_same)).field(opt(rec.coupling_cross)).field(opt(rec.coupling_gap));
    csv.field(rec.high_consistency_fraction).field(rec.loss_grpo).field(rec.loss_gcd);
    csv.end_row();
}

EpochResult grpo_epoch(Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg, int epoch) {
    cfg.validate();
    EpochResult res;
    res.record.epoch = epoch;
    std::size_t successes = 0, steps = 0;
    double entropy_sum = 0.0, loss = 0.0;
    for (int task = 0; task < cfg.tasks_per_epoch; ++task) {
        try {
            GroupBatch batch = roll_group(policy, env_cfg, cfg, epoch, task);
            nn::Gradient grad = nn::Gradient::zeros_like(policy.params);
            loss += accumulate_group(policy, batch, grad, grad, -1, &entropy_sum, &steps);
            nn::apply_update_in_place(policy.params, grad, cfg.learning_rate);
            for (auto& ep : batch.episodes) {
                successes += static_cast<std::size_t>(ep.reward);
                res.episodes.push_back(std::move(ep));
            }
        } catch (const InvalidInput& e) {
            throw InvalidInput("epoch " + std::to_string(epoch) + ", task " + std::to_string(task) + ": " + e.what());
        }
    }
    res.record.success_rate = static_cast<double>(successes) / static_cast<double>(res.episodes.size());
    res.record.mean_entropy = steps ? entropy_sum / static_cast<double>(steps) : 0.0;
    res.record.loss_grpo = loss / cfg.tasks_per_epoch;
    return res;
}

namespace {

void fill_diagnostics(TrainRecord& rec, const Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                      std::span<const env::Episode> episodes, std::span<const StepSample> steps,
                      std::span<const StepSample> probe) {
    // Judge accuracy: argmax of the judge head against the recurrence labels.
    std::size_t correct = 0;
    for (const auto& s : steps) {
        const auto rec_j = nn::forward(policy.params, s.features, nn::Head::Judge);
        const int predicted = rec_j.probs(nn::kJudgeBad) > rec_j.probs(nn::kJudgeGood) ? nn::kJudgeBad : nn::kJudgeGood;
        correct += predicted == (s.label == env::Label::Bad ? nn::kJudgeBad : nn::kJudgeGood);
    }
    rec.judge_accuracy = steps.empty() ? kNaN : static_cast<double>(correct) / static_cast<double>(steps.size());

    std::vector<StepSample> capped;
    if (probe.empty()) {
        const auto cap = std::min<std::size_t>(steps.size(), static_cast<std::size_t>(cfg.coupling_probe_steps));
        capped.assign(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(cap));
        probe = capped;
    }
    if (probe.size() >= 2) {
        const auto rep = coupling_matrix(policy, probe);
        rec.coupling_same = rep.same_class_mean;
        rec.coupling_cross = rep.cross_class_mean;
        rec.coupling_gap = rep.gap;
    }

    // Consistency over steps that repeat an earlier (observation, action) pair.
    const int k = cfg.consistency_trials;
    rec.consistency_histogram.assign(static_cast<std::size_t>(k) + 1, 0);
    Rng rng = make_stream(cfg.seed, "consistency", {static_cast<std::uint64_t>(rec.epoch)});
    const auto sampler = policy.sampler();
    std::size_t repeats = 0, high = 0;
    for (const auto& ep : episodes) {
        std::set<std::pair<int, int>> seen;
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            if (seen.insert({ep.observations[t], ep.actions[t]}).second) continue;
            const auto c = env::consistency(sampler, ep.features[t], ep.observations[t], k, rng);
            ++rec.consistency_histogram[static_cast<std::size_t>(c.count)];
            ++repeats;
            high += c.high && c.modal_action == ep.actions[t];
        }
    }
    rec.high_consistency_fraction = repeats ? static_cast<double>(high) / static_cast<double>(repeats) : 0.0;

    const auto table = env::room_feature_table(env_cfg);
    rec.room_action_probs.clear();
    for (int room = 0; room < env_cfg.n_rooms; ++room) {
        const int obs = env_cfg.aliased_observations ? 2 * room : room;
        const auto r = policy.act(table[static_cast<std::size_t>(room)], obs);
        rec.room_action_probs.emplace_back(r.probs.data(), r.probs.data() + r.probs.size());
    }
}

}  // namespace

std::vector<TrainRecord> train(Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                               std::span<const StepSample> coupling_probe, const EpochCallback& on_epoch) {
    env_cfg.validate();
    cfg.validate();
    std::vector<TrainRecord> records;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochResult er = grpo_epoch(policy, env_cfg, cfg, epoch);
        TrainRecord& rec = er.record;
        const auto steps = labeled_steps(er.episodes);
        if (cfg.gcd_enabled) {
            Rng judge_rng = make_stream(cfg.seed, "judge", {static_cast<std::uint64_t>(epoch)});
            rec.gcd = gcd_epoch(policy, steps, cfg, judge_rng);
            rec.loss_gcd = rec.gcd.loss;
        }
        if (cfg.correction_enabled) rec.corrections = apply_training_correction(policy, steps, cfg);
        fill_diagnostics(rec, policy, env_cfg, cfg, er.episodes, steps, coupling_probe);
        if (on_epoch) on_epoch(rec, policy);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<StepSample> collect_probe_steps(const Policy& policy, const env::EnvConfig& env_cfg,
                                            const TrainConfig& cfg, int n_groups, int max_steps) {
    ORL_REQUIRE(n_groups >= 1 && max_steps >= 2, "collect_probe_steps needs n_groups >= 1 and max_steps >= 2");
    std::vector<StepSample> good, bad;
    for (int grp = 0; grp < n_groups; ++grp) {
        const auto k = static_cast<std::uint64_t>(grp);
        const auto batch = roll_batch(policy, env_cfg, stream_seed(cfg.seed, "probe-task", {k}), cfg.group_size,
                                      cfg.epsilon_std, cfg.seed, "probe", k, 0);
        for (auto& s : labeled_steps(batch.episodes)) (s.label == env::Label::Good ? good : bad).push_back(std::move(s));
    }
    std::vector<StepSample> out;
    const auto cap = static_cast<std::size_t>(max_steps);
    std::size_t gi = 0, bi = 0;
    while (out.size() < cap && (gi < good.size() || bi < bad.size())) {
        if (gi < good.size()) out.push_back(good[gi++]);
        if (out.size() < cap && bi < bad.size()) out.push_back(bad[bi++]);
    }
    return out;
}

namespace {

void enumerate_from(const Policy& policy, const env::ChainEnv& env, const env::Observation& obs, double prob,
                    bool event, int event_obs, int event_action, EventOutcomeProbs& acc) {
    if (env.done()) {
        const bool success = obs.room == env.config().n_rooms;
        if (event)
            (success ? acc.event_success : acc.event_fail) += prob;
        else
            (success ? acc.no_event_success : acc.no_event_fail) += prob;
        return;
    }
    const auto rec = policy.act(obs.features, obs.id);
    for (int a = 0; a < policy.params.n_actions; ++a) {
        const double pa = rec.probs(a);
        if (pa == 0.0) continue;
        env::ChainEnv next = env;
        const auto step = next.step(a);
        enumerate_from(policy, next, step.observation, prob * pa, event || (obs.id == event_obs && a == event_action),
                       event_obs, event_action, acc);
    }
}

}  // namespace

EventOutcomeProbs enumerate_event_outcomes(const Policy& policy, const env::EnvConfig& env_cfg,
                                           std::uint64_t task_seed, int observation, int action) {
    ORL_REQUIRE(action >= 0 && action < env_cfg.n_actions(), "event action out of range");
    env::ChainEnv env(env_cfg, task_seed);
    const auto start = env.reset();
    EventOutcomeProbs acc;
    enumerate_from(policy, env, start, 1.0, false, observation, action, acc);
    return acc;
}

AdvantageRealization monte_carlo_step_advantage(const Policy& policy, const env::EnvConfig& env_cfg, int observation,
                                                int action, int group_size, int n_groups, double epsilon_std,
                                                std::uint64_t seed) {
    ORL_REQUIRE(group_size >= 2 && n_groups >= 2, "monte carlo needs group_size >= 2 and n_groups >= 2");
    const std::uint64_t task_seed = stream_seed(seed, "mc-task");
    AdvantageRealization out;
    out.exact = enumerate_event_outcomes(policy, env_cfg, task_seed, observation, action);
    const double q = out.exact.q();
    ORL_REQUIRE(q > 0.0 && q < 1.0, "event probability must lie strictly inside (0,1)");
    const double p = out.exact.p();
    const double r = out.exact.r();
    out.predicted = risk::group_normalized_expected_advantage(p, q, r, group_size, epsilon_std);
    const double s = 1.0 - p - q * r;
    out.first_order_prediction = q * r * (q - 1.0) / (std::sqrt(s * (1.0 - s)) + epsilon_std);

    const auto sampler = policy.sampler();
    double sum = 0.0, sum_sq = 0.0;
    std::size_t events = 0;
    std::vector<double> rewards(static_cast<std::size_t>(group_size));
    std::vector<bool> hit(static_cast<std::size_t>(group_size));
    for (int grp = 0; grp < n_groups; ++grp) {
        for (int g = 0; g < group_size; ++g) {
            Rng rng = make_stream(seed, "mc", {static_cast<std::uint64_t>(grp), static_cast<std::uint64_t>(g)});
            const auto ep = env::run_episode(env_cfg, task_seed, sampler, rng);
            rewards[static_cast<std::size_t>(g)] = ep.reward;
            hit[static_cast<std::size_t>(g)] = took_action_at(ep, observation, action);
            events += hit[static_cast<std::size_t>(g)];
        }
        const auto adv = group_advantages(rewards, epsilon_std);
        double x = 0.0;
        for (int g = 0; g < group_size; ++g)
            if (hit[static_cast<std::size_t>(g)]) x += adv[static_cast<std::size_t>(g)];
        x /= group_size;
        sum += x;
        sum_sq += x * x;
    }
    const double n = static_cast<double>(n_groups);
    out.groups = static_cast<std::size_t>(n_groups);
    out.empirical_mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * out.empirical_mean * out.empirical_mean) / (n - 1.0));
    out.standard_error = std::sqrt(var / n);
    out.q_measured = static_cast<double>(events) / (n * group_size);
    return out;
}

PushMeasurement measure_coupling_push(const Policy& policy, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                                      int observation, int action, int n_groups) {
    cfg.validate();
    ORL_REQUIRE(n_groups >= 1, "n_groups must be >= 1");
    ORL_REQUIRE(action >= 0 && action < env_cfg.n_actions(), "action out of range");
    const auto features = features_of(env_cfg, observation);
    const auto bias = policy.bias_for(observation);
    PushMeasurement m;
    m.q = policy.act(features, observation).probs(action);
    const auto direction = nn::grad_log_prob(policy.params, features, nn::Head::Action, action, bias);

    nn::Gradient self_grad = nn::Gradient::zeros_like(policy.params);
    nn::Gradient other_grad = nn::Gradient::zeros_like(policy.params);
    std::size_t took = 0, took_fail = 0, missed = 0, missed_fail = 0;
    for (int grp = 0; grp < n_groups; ++grp) {
        const auto k = static_cast<std::uint64_t>(grp);
        const auto batch = roll_batch(policy, env_cfg, stream_seed(cfg.seed, "push-task", {k}), cfg.group_size,
                                      cfg.epsilon_std, cfg.seed, "push", k, 0);
        accumulate_group(policy, batch, self_grad, other_grad, observation, nullptr, nullptr);
        for (const auto& ep : batch.episodes) {
            if (took_action_at(ep, observation, action)) {
                ++took;
                took_fail += ep.reward == 0;
            } else {
                ++missed;
                missed_fail += ep.reward == 0;
            }
        }
    }
    m.self_drift = frobenius_dot(direction, self_grad) / n_groups;
    m.other_drift = frobenius_dot(direction, other_grad) / n_groups;
    m.risk = (took && missed) ? static_cast<double>(took_fail) / static_cast<double>(took) -
                                    static_cast<double>(missed_fail) / static_cast<double>(missed)
                              : kNaN;
    m.self_correction = m.q * m.risk * (1.0 - m.q);
    const double kappa = m.self_drift / (m.q * m.risk * (m.q - 1.0));
    m.push = (std::isfinite(kappa) && kappa > 0.0) ? m.other_drift / kappa : kNaN;
    m.push_below_self_correction = std::isfinite(m.push) && m.push < m.self_correction;
    return m;
}

}  // namespace orl::train
