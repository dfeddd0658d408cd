#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "orl/error.hpp"
#include "orl/policy_net.hpp"

using namespace orl::nn;

namespace {

// Plain-loop re-evaluation of log p(chosen), independent of the Eigen forward pass.
double reference_log_prob(const PolicyParams& p, const std::vector<double>& x, Head head, int chosen) {
    const int hd = p.hidden_dim();
    std::vector<double> h(hd);
    for (int j = 0; j < hd; ++j) {
        double a = 0.0;
        for (int i = 0; i < p.feature_dim(); ++i) a += p.w1(i, j) * x[i];
        h[j] = std::tanh(a);
    }
    const int off = p.head_offset(head), k = p.head_size(head);
    std::vector<double> z(k);
    for (int c = 0; c < k; ++c) {
        z[c] = 0.0;
        for (int j = 0; j < hd; ++j) z[c] += p.w2(j, off + c) * h[j];
    }
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return z[chosen] - mx - std::log(s);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-3, std::abs(a) + std::abs(b)); }

std::vector<double> random_input(int n, orl::Rng& rng) {
    std::vector<double> x(n);
    double norm = 0.0;
    for (double& v : x) {
        v = rng.normal();
        norm += v * v;
    }
    for (double& v : x) v /= std::sqrt(norm);
    return x;
}

TEST(Forward, ZeroReadoutIsUniform) {
    orl::Rng rng(1);
    auto p = PolicyParams::init(6, 4, 3, rng);
    p.w2.setZero();
    const auto x = random_input(6, rng);
    const auto a = forward(p, x, Head::Action);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.probs(i), 1.0 / 3.0, 1e-15);
    const auto j = forward(p, x, Head::Judge);
    EXPECT_EQ(j.probs.size(), 2);
    EXPECT_NEAR(j.probs(0), 0.5, 1e-15);
}

TEST(Forward, CommonColumnShiftLeavesProbabilitiesUnchanged) {
    orl::Rng rng(2);
    auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng);
    const auto before = forward(p, x, Head::Action);
    Eigen::VectorXd shift(4);
    shift << 0.3, -0.7, 1.1, 0.2;
    for (int c = 0; c < 3; ++c) p.w2.col(c) += shift;
    const auto after = forward(p, x, Head::Action);
    EXPECT_LT((before.probs - after.probs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, LogProbMatchesReference) {
    orl::Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto p = PolicyParams::init(7, 5, 4, rng);
        const auto x = random_input(7, rng);
        for (Head head : {Head::Action, Head::Judge}) {
            for (int c = 0; c < p.head_size(head); ++c) {
                const auto rec = forward(p, x, head, c);
                ASSERT_NEAR(rec.log_prob, reference_log_prob(p, x, head, c), 1e-12);
                ASSERT_NEAR(std::exp(rec.log_prob), rec.probs(c), 1e-12);
            }
            const auto rec = forward(p, x, head);
            ASSERT_NEAR(rec.probs.sum(), 1.0, 1e-12);
        }
    }
}

TEST(Forward, HeadIsolation) {
    orl::Rng rng(4);
    auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng);
    const auto act = forward(p, x, Head::Action).probs;
    const auto judge = forward(p, x, Head::Judge).probs;
    auto q = p;
    q.w2.col(3).setRandom();
    q.w2.col(4).setRandom();
    EXPECT_EQ(forward(q, x, Head::Action).probs, act);
    auto r = p;
    r.w2.leftCols(3).setRandom();
    EXPECT_EQ(forward(r, x, Head::Judge).probs, judge);
}

TEST(Forward, Errors) {
    orl::Rng rng(5);
    auto p = PolicyParams::init(6, 4, 3, rng);
    EXPECT_THROW(forward(p, std::vector<double>(5, 0.1), Head::Action), orl::InvalidInput);
    EXPECT_THROW(forward(p, std::vector<double>(6, 0.1), Head::Judge, 2), orl::InvalidInput);
    EXPECT_THROW(forward(p, std::vector<double>(6, 0.1), Head::Action, -1, std::vector<double>{1.0}),
                 orl::InvalidInput);
    p.w1(0, 0) = NAN;
    EXPECT_THROW(forward(p, std::vector<double>(6, 0.1), Head::Action), orl::InvalidInput);
}

TEST(Gradient, CentralDifferencesBothHeadsBothLayers) {
    orl::Rng rng(6);
    double worst = 0.0;
    const double h = 1e-5;
    for (int t = 0; t < 100; ++t) {
        const auto p = PolicyParams::init(7, 5, 4, rng);
        const auto x = random_input(7, rng);
        const Head head = t % 2 ? Head::Judge : Head::Action;
        const int chosen = static_cast<int>(rng.next() % static_cast<std::uint64_t>(p.head_size(head)));
        const auto g = grad_log_prob(p, x, head, chosen);
        for (int layer = 0; layer < 2; ++layer) {
            const Eigen::MatrixXd& analytic = layer == 0 ? g.w1 : g.w2;
            for (Eigen::Index i = 0; i < analytic.rows(); ++i)
                for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
                    PolicyParams up = p, down = p;
                    (layer == 0 ? up.w1 : up.w2)(i, j) += h;
                    (layer == 0 ? down.w1 : down.w2)(i, j) -= h;
                    const double fd = (reference_log_prob(up, x, head, chosen) -
                                       reference_log_prob(down, x, head, chosen)) / (2 * h);
                    worst = std::max(worst, relative_error(analytic(i, j), fd));
                }
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Gradient, ReadoutGradientFormula) {
    orl::Rng rng(7);
    const auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng);
    const auto rec = forward(p, x, Head::Action, 1);
    const auto g = grad_log_prob(p, x, Head::Action, 1);
    Eigen::VectorXd e = -rec.probs;
    e(1) += 1.0;
    const Eigen::MatrixXd expect = rec.hidden * e.transpose();
    EXPECT_LT((g.w2.leftCols(3) - expect).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(g.w2.rightCols(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, ScoreFunctionIdentity) {
    orl::Rng rng(8);
    const auto p = PolicyParams::init(6, 4, 5, rng);
    const auto x = random_input(6, rng);
    const auto probs = forward(p, x, Head::Action).probs;
    auto total = Gradient::zeros_like(p);
    for (int c = 0; c < 5; ++c) total.add_scaled(grad_log_prob(p, x, Head::Action, c), probs(c));
    EXPECT_LT(total.max_abs(), 1e-10);
}

TEST(Gradient, SaturatedChoiceHasZeroGradient) {
    orl::Rng rng(9);
    auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng);
    std::vector<double> bias{2000.0, 0.0, 0.0};
    const auto rec = forward(p, x, Head::Action, 0, bias);
    ASSERT_EQ(rec.probs(0), 1.0);
    EXPECT_EQ(grad_log_prob(p, x, Head::Action, 0, bias).max_abs(), 0.0);
}

TEST(Update, ZeroLinearityAndAscent) {
    orl::Rng rng(10);
    const auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng);
    const auto zero = apply_update(p, Gradient::zeros_like(p), 0.5);
    EXPECT_EQ(zero.w1, p.w1);
    EXPECT_EQ(zero.w2, p.w2);

    const auto g = grad_log_prob(p, x, Head::Action, 2);
    const auto half = apply_update(apply_update(p, g, 0.05), g, 0.05);
    const auto full = apply_update(p, g, 0.1);
    EXPECT_LT((half.w1 - full.w1).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((half.w2 - full.w2).cwiseAbs().maxCoeff(), 1e-15);

    const auto stepped = apply_update(p, g, 1e-3);
    EXPECT_GT(forward(stepped, x, Head::Action).probs(2), forward(p, x, Head::Action).probs(2));

    Gradient bad{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(4, 5)};
    EXPECT_THROW(apply_update(p, bad, 0.1), orl::InvalidInput);
}

TEST(Embed, Properties) {
    orl::Rng rng(11);
    auto p = PolicyParams::init(6, 4, 3, rng);
    const auto x = random_input(6, rng), y = random_input(6, rng);
    EXPECT_EQ(embed(p, x), embed(p, x));
    EXPECT_LT((embed(p, x) - forward(p, x, Head::Action).hidden).cwiseAbs().maxCoeff(), 1e-15);
    const auto hx = embed(p, x), hy = embed(p, y);
    const double cos = hx.dot(hy) / (hx.norm() * hy.norm());
    EXPECT_LE(std::abs(cos), 1.0);
    p.w1.setZero();
    EXPECT_EQ(embed(p, x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ColdStart, ReachesTarget) {
    orl::Rng rng(12);
    auto p = PolicyParams::init(6, 6, 3, rng);
    std::vector<std::vector<double>> inputs{random_input(6, rng), random_input(6, rng), random_input(6, rng)};
    const int passes = cold_start(p, inputs, 0, 0.6, 0.2, 5000);
    EXPECT_LT(passes, 5000);
    for (const auto& x : inputs) EXPECT_GE(forward(p, x, Head::Action).probs(0), 0.6);
}

TEST(Checkpoint, RoundTripAndErrors) {
    orl::Rng rng(13);
    const auto p = PolicyParams::init(6, 4, 3, rng);
    std::stringstream buf;
    save_checkpoint(buf, p);
    const auto back = load_checkpoint(buf);
    EXPECT_EQ(back.w1, p.w1);
    EXPECT_EQ(back.w2, p.w2);
    EXPECT_EQ(back.n_actions, 3);
    std::stringstream wrong("orl-policy 2\n");
    EXPECT_THROW(load_checkpoint(wrong), orl::InvalidInput);
    std::stringstream junk("hello");
    EXPECT_THROW(load_checkpoint(junk), orl::InvalidInput);
}

}  // namespace
