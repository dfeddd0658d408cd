#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "orl/error.hpp"
#include "orl/toy_env.hpp"

using namespace orl::env;

namespace {

using L = Label;

EnvConfig small(int rooms, int steps) {
    EnvConfig c;
    c.n_rooms = rooms;
    c.max_steps = steps;
    c.feature_dim = rooms + 4;
    return c;
}

ActionSampler constant(int action) {
    return [action](std::span<const double>, int, orl::Rng&) { return action; };
}

TEST(EnvConfig, Validation) {
    EXPECT_NO_THROW(small(3, 10).validate());
    EXPECT_THROW(small(1, 10).validate(), orl::InvalidInput);
    EXPECT_THROW(small(4, 3).validate(), orl::InvalidInput);
    auto c = small(3, 10);
    c.feature_dim = 4;
    EXPECT_THROW(c.validate(), orl::InvalidInput);
    c = small(3, 10);
    c.shared_feature_weight = 1.5;
    EXPECT_THROW(c.validate(), orl::InvalidInput);
}

TEST(ChainEnv, ResetIsDeterministic) {
    auto c = small(4, 8);
    c.random_start = true;
    ChainEnv a(c, 17), b(c, 17);
    const auto oa = a.reset(), ob = b.reset();
    EXPECT_EQ(oa.id, ob.id);
    EXPECT_EQ(oa.features, ob.features);
}

TEST(ChainEnv, FeatureSimilarityControl) {
    auto mean_cos = [](double w) {
        auto c = small(4, 8);
        c.shared_feature_weight = w;
        const auto t = room_feature_table(c);
        double s = 0.0;
        int n = 0;
        for (int i = 0; i < 4; ++i) {
            double norm = 0.0;
            for (double v : t[i]) norm += v * v;
            EXPECT_NEAR(norm, 1.0, 1e-12);
            for (int j = i + 1; j < 4; ++j, ++n) s += cosine_similarity(t[i], t[j]);
        }
        return s / n;
    };
    const double c0 = mean_cos(0.0), c5 = mean_cos(0.5), c1 = mean_cos(1.0);
    EXPECT_NEAR(c0, 0.0, 1e-15);
    EXPECT_NEAR(c1, 1.0, 1e-12);
    EXPECT_GT(c5, c0);
    EXPECT_LT(c5, c1);
}

TEST(ChainEnv, AlwaysAdvanceSucceedsOnShortestPath) {
    const auto c = small(3, 10);
    orl::Rng rng(1);
    const auto ep = run_episode(c, 0, constant(c.advance_action()), rng);
    EXPECT_EQ(ep.reward, 1);
    EXPECT_EQ(ep.actions.size(), 3u);
    EXPECT_EQ(ep.observations.back(), c.goal_observation());
    EXPECT_EQ(ep.observations.size(), ep.actions.size() + 1);
}

TEST(ChainEnv, AlwaysStayFailsAtBudget) {
    const auto c = small(3, 10);
    orl::Rng rng(1);
    const auto ep = run_episode(c, 0, constant(1), rng);
    EXPECT_EQ(ep.reward, 0);
    EXPECT_EQ(ep.actions.size(), 10u);
    for (std::size_t t = 0; t < ep.labels.size(); ++t) EXPECT_EQ(ep.labels[t], L::Bad) << t;
}

TEST(ChainEnv, FlawedStepInsideSuccess) {
    const auto c = small(3, 4);
    const std::vector<int> actions{1, 0, 0, 0};
    const auto ep = replay_episode(c, 0, actions);
    EXPECT_EQ(ep.reward, 1);
    EXPECT_EQ(ep.labels[0], L::Bad);
    EXPECT_EQ(ep.labels[3], L::Good);
    // Same detour with one step less of budget fails.
    const auto tight = replay_episode(small(3, 3), 0, actions);
    EXPECT_EQ(tight.reward, 0);
}

TEST(ChainEnv, StepErrors) {
    ChainEnv e(small(2, 2), 0);
    EXPECT_THROW(e.step(-1), orl::InvalidInput);
    EXPECT_THROW(e.step(4), orl::InvalidInput);
    e.step(0);
    const auto last = e.step(0);
    EXPECT_TRUE(last.done);
    EXPECT_EQ(last.reward, 1);
    EXPECT_THROW(e.step(0), orl::InvalidInput);
}

TEST(ChainEnv, ReplayIsByteIdentical) {
    auto c = small(4, 8);
    c.aliased_observations = true;
    const std::vector<int> actions{0, 1, 3, 0, 0, 2, 0, 0};
    const auto a = replay_episode(c, 5, actions), b = replay_episode(c, 5, actions);
    std::ostringstream sa, sb;
    write_episodes_csv(sa, std::vector<Episode>{a});
    write_episodes_csv(sb, std::vector<Episode>{b});
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a.features, b.features);
}

TEST(Labeler, HandWorkedRecurrence) {
    Episode ep;
    ep.observations = {0, 1, 0, 1, 9};
    ep.actions = {0, 3, 0, 0};
    ep.reward = 1;
    EXPECT_EQ(label_steps(ep), (std::vector<Label>{L::Bad, L::Bad, L::Unlabeled, L::Good}));
    // The same trajectory produced by the environment.
    const auto c = small(2, 6);
    const auto real = replay_episode(c, 0, ep.actions);
    EXPECT_EQ(real.observations, (std::vector<int>{0, 1, 0, 1, c.goal_observation()}));
    EXPECT_EQ(real.labels, label_steps(ep));
}

TEST(Labeler, MonotoneAndFailedEpisodes) {
    Episode ep;
    ep.observations = {0, 1, 2, 3};
    ep.actions = {0, 0, 0};
    ep.reward = 1;
    EXPECT_EQ(label_steps(ep), (std::vector<Label>{L::Unlabeled, L::Unlabeled, L::Good}));
    ep.reward = 0;
    for (auto l : label_steps(ep)) EXPECT_NE(l, L::Good);
}

TEST(Labeler, EveryStayStepIsBadOnRandomEpisodes) {
    const auto c = small(4, 8);
    orl::Rng rng(9);
    ActionSampler uniform = [&](std::span<const double>, int, orl::Rng& r) {
        return static_cast<int>(r.next() % static_cast<std::uint64_t>(c.n_actions()));
    };
    for (int i = 0; i < 500; ++i) {
        const auto ep = run_episode(c, static_cast<std::uint64_t>(i), uniform, rng);
        for (std::size_t t = 0; t < ep.actions.size(); ++t) {
            if (c.is_stay_action(ep.actions[t])) {
                ASSERT_EQ(ep.labels[t], L::Bad);
            }
        }
        if (ep.reward == 1) {
            ASSERT_EQ(ep.labels.back(), L::Good);
        }
        ASSERT_TRUE(ep.reward == 0 || ep.reward == 1);
        ASSERT_EQ(ep.reward == 1, ep.observations.back() == c.goal_observation());
    }
}

TEST(Consistency, DeterministicAndThreshold) {
    orl::Rng rng(2);
    const std::vector<double> f(6, 0.0);
    const auto det = consistency(constant(2), f, 0, 10, rng);
    EXPECT_EQ(det.count, 10);
    EXPECT_EQ(det.modal_action, 2);
    EXPECT_TRUE(det.high);
    int i = 0;
    ActionSampler five = [&](std::span<const double>, int, orl::Rng&) { return (i++ < 5) ? 0 : 1 + i % 3; };
    const auto half = consistency(five, f, 0, 10, rng);
    EXPECT_EQ(half.count, 5);
    EXPECT_TRUE(half.high);
    EXPECT_THROW(consistency(constant(0), f, 0, 0, rng), orl::InvalidInput);
}

TEST(Consistency, UniformPolicyModalCount) {
    orl::Rng rng(3);
    ActionSampler uniform = [](std::span<const double>, int, orl::Rng& r) { return static_cast<int>(r.next() % 4); };
    const std::vector<double> f(6, 0.0);
    double total = 0.0;
    int high = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const auto res = consistency(uniform, f, 0, 10, rng);
        total += res.count;
        high += res.high;
    }
    // Exact law of the largest cell of Multinomial(10; 1/4 x 4).
    double mean = 0.0, p_high = 0.0;
    for (int a = 0; a <= 10; ++a)
        for (int b = 0; a + b <= 10; ++b)
            for (int c = 0; a + b + c <= 10; ++c) {
                const int d = 10 - a - b - c;
                const double ways = std::tgamma(11) / (std::tgamma(a + 1) * std::tgamma(b + 1) * std::tgamma(c + 1) *
                                                       std::tgamma(d + 1));
                const double prob = ways / std::pow(4.0, 10);
                const int top = std::max({a, b, c, d});
                mean += prob * top;
                p_high += top >= 5 ? prob : 0.0;
            }
    EXPECT_NEAR(mean, 4.1975, 1e-4);
    EXPECT_NEAR(total / n, mean, 0.03);
    EXPECT_NEAR(high / double(n), p_high, 0.015);
}

TEST(Repetition, Counting) {
    Episode clean;
    clean.observations = {0, 1, 2};
    clean.actions = {0, 0};
    clean.reward = 1;
    Episode twice;
    twice.observations = {0, 0, 0};
    twice.actions = {1, 1};
    twice.reward = 0;
    const auto none = repetition_stats(std::vector<Episode>{clean});
    EXPECT_EQ(none.success_frequency, 0.0);
    EXPECT_EQ(none.failure_frequency, 0.0);
    const auto st = repetition_stats(std::vector<Episode>{clean, twice});
    EXPECT_DOUBLE_EQ(st.failure_frequency, 0.5);
    EXPECT_EQ(st.failure_steps, 2u);
    EXPECT_THROW(repetition_stats(std::vector<Episode>{}), orl::InvalidInput);
}

TEST(Repetition, StayBiasedPolicyRepeatsMoreInFailures) {
    const auto c = small(4, 7);
    orl::Rng rng(4);
    ActionSampler biased = [](std::span<const double>, int, orl::Rng& r) { return r.uniform() < 0.7 ? 0 : 1; };
    std::vector<Episode> eps;
    for (int i = 0; i < 2000; ++i) eps.push_back(run_episode(c, static_cast<std::uint64_t>(i), biased, rng));
    const auto st = repetition_stats(eps);
    ASSERT_GT(st.success_steps, 0u);
    ASSERT_GT(st.failure_steps, 0u);
    EXPECT_GT(st.failure_frequency, st.success_frequency);
}

TEST(EpisodesCsv, Header) {
    std::ostringstream out;
    const auto ep = replay_episode(small(2, 3), 0, std::vector<int>{0, 0});
    write_episodes_csv(out, std::vector<Episode>{ep}, 7);
    EXPECT_EQ(out.str(), "episode_id,step,obs_id,action_id,reward,label\n7,0,0,0,1,unlabeled\n7,1,1,0,1,good\n");
}

}  // namespace
