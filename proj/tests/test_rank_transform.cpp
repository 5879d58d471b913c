#include <gtest/gtest.h>

#include <random>

#include "mile/rank_transform.hpp"
#include "oracles.hpp"

using namespace mile;

namespace {

RankData simulate(std::mt19937_64& rng, Eigen::Index n, Eigen::Index t, double beta)
{
    std::normal_distribution<double> n01;
    RankData d;
    d.y.resize(n, t);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::MatrixXd xi(t, 1);
        for (Eigen::Index s = 0; s < t; ++s) xi(s, 0) = n01(rng);
        const double shift = 3.0 * n01(rng);
        for (Eigen::Index s = 0; s < t; ++s) d.y(i, s) = std::exp(0.3 * (xi(s, 0) * beta + n01(rng)) + shift);
        d.x.push_back(xi);
    }
    return d;
}

std::vector<RankVector> all_orderings(int t)
{
    std::vector<int> p(static_cast<std::size_t>(t));
    std::iota(p.begin(), p.end(), 1);
    std::vector<RankVector> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

}  // namespace

TEST(ComputeRanks, Examples)
{
    EXPECT_EQ(compute_ranks(Eigen::Vector3d(3.1, -2.0, 7.0)), (RankVector{2, 1, 3}));
    const Eigen::Vector4d row(0.3, -1.2, 2.5, 0.1);
    EXPECT_EQ(compute_ranks(row), compute_ranks(row.array().exp().matrix()));
    EXPECT_THROW(compute_ranks(Eigen::Vector3d(1.0, 2.0, 1.0)), TieError);
}

TEST(ComputeRanks, MatchesCountingOracle)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::VectorXd row(9);
        for (auto& v : row) v = n01(rng);
        const RankVector r = compute_ranks(row);
        for (Eigen::Index t = 0; t < row.size(); ++t) {
            int count = 0;
            for (Eigen::Index s = 0; s < row.size(); ++s) count += row(s) <= row(t) ? 1 : 0;
            EXPECT_EQ(r[static_cast<std::size_t>(t)], count);
        }
    }
}

TEST(RankPmf, ZeroBetaIsUniform)
{
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 2);
    EXPECT_NEAR(rank_log_pmf_mc({3, 1, 4, 2}, x, Eigen::Vector2d::Zero(), 50, rng), -std::log(24.0), 1e-14);
}

TEST(RankPmf, TwoPeriodNormalCdf)
{
    std::mt19937_64 rng(3);
    Eigen::MatrixXd x(2, 1);
    x << -0.4, 0.7;
    const double beta = 1.0;
    // Ranks (1, 2): y_1 < y_2.
    const double p12 = std::exp(rank_log_pmf_mc({1, 2}, x, Eigen::VectorXd::Constant(1, beta), 100000, rng));
    EXPECT_NEAR(p12, oracle::normal_cdf((x(1, 0) - x(0, 0)) * beta / std::sqrt(2.0)), 0.005);
}

TEST(RankPmf, ImportanceFormAgreesWithClosedForm)
{
    std::mt19937_64 rng(31);
    Eigen::MatrixXd x(2, 1);
    x << -0.4, 0.7;
    const Eigen::MatrixXd raw = raw_normal_draws(2, 100000, rng);
    for (double beta : {0.0, 1.0, 3.0}) {
        const double p12 = std::exp(rank_log_pmf_importance({1, 2}, x, Eigen::VectorXd::Constant(1, beta), raw));
        EXPECT_NEAR(p12, oracle::normal_cdf((x(1, 0) - x(0, 0)) * beta / std::sqrt(2.0)), 0.002) << beta;
    }
    const Eigen::MatrixXd x3 = Eigen::MatrixXd::Random(3, 1);
    EXPECT_NEAR(rank_log_pmf_importance({2, 3, 1}, x3, Eigen::VectorXd::Zero(1), raw_normal_draws(3, 10, rng)),
                -std::log(6.0), 1e-13);
    double total = 0.0;
    const Eigen::MatrixXd raw3 = raw_normal_draws(3, 50000, rng);
    for (const auto& m : all_orderings(3)) total += std::exp(rank_log_pmf_importance(m, x3, Eigen::VectorXd::Ones(1), raw3));
    EXPECT_NEAR(total, 1.0, 0.01);
}

TEST(RankPmf, OrderingsSumToOneInExpectation)
{
    std::mt19937_64 rng(4);
    for (int t : {2, 3, 4}) {
        const Eigen::MatrixXd x = 0.6 * Eigen::MatrixXd::Random(t, 2);
        const Eigen::Vector2d beta(0.8, -0.5);
        const Eigen::MatrixXd draws = ordered_normal_draws(t, 200000, rng);
        double total = 0.0;
        for (const auto& m : all_orderings(t)) total += std::exp(rank_log_pmf(m, x, beta, draws));
        EXPECT_NEAR(total, 1.0, 0.01) << "T=" << t;
    }
}

TEST(RankPmf, CommonRandomNumbersAreDeterministic)
{
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 1);
    std::mt19937_64 a(99);
    std::mt19937_64 b(99);
    for (double beta : {-1.0, 0.3, 2.0}) {
        const Eigen::VectorXd bv = Eigen::VectorXd::Constant(1, beta);
        std::mt19937_64 ra(99);
        std::mt19937_64 rb(99);
        EXPECT_EQ(rank_log_pmf_mc({2, 3, 1}, x, bv, 500, ra), rank_log_pmf_mc({2, 3, 1}, x, bv, 500, rb));
    }
    EXPECT_EQ(ordered_normal_draws(3, 10, a), ordered_normal_draws(3, 10, b));
}

TEST(EstimateRank, RecoversBeta)
{
    std::mt19937_64 rng(5);
    const RankData d = simulate(rng, 2000, 2, 1.0);
    std::mt19937_64 draw_rng(6);
    const auto rep = estimate_rank(d, 2000, draw_rng);
    EXPECT_NEAR(rep.theta.beta(0), 1.0, 0.05);
}

TEST(EstimateRank, OrderStatisticFormIsSelectable)
{
    std::mt19937_64 rng(12);
    const RankData d = simulate(rng, 400, 3, 0.5);
    std::mt19937_64 draw_rng(13);
    const auto rep = estimate_rank(d, 4000, draw_rng, RankSimulator::order_statistics);
    EXPECT_NEAR(rep.theta.beta(0), 0.5, 0.2);
}

TEST(EstimateRank, ZeroBetaDesign)
{
    std::mt19937_64 rng(7);
    const RankData d = simulate(rng, 2000, 2, 0.0);
    std::mt19937_64 draw_rng(8);
    const auto rep = estimate_rank(d, 2000, draw_rng);
    // At beta = 0 the T = 2 model is a probit in dx / sqrt(2); Fisher information
    // per individual is phi(0)^2 / (1/4) * E[dx^2] / 2 with E[dx^2] = 2.
    const double info = std::pow(1.0 / std::sqrt(2.0 * M_PI), 2) * 4.0;
    EXPECT_LE(std::fabs(rep.theta.beta(0)), 3.0 / std::sqrt(info * 2000.0));
}

TEST(EstimateRank, MonotoneInvarianceIsBitExact)
{
    std::mt19937_64 rng(9);
    RankData d = simulate(rng, 300, 3, 1.0);
    std::mt19937_64 r1(10);
    const auto a = estimate_rank(d, 300, r1);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double scale = 0.5 + static_cast<double>(i % 7);
        for (Eigen::Index s = 0; s < d.t(); ++s) d.y(i, s) = std::log(d.y(i, s)) * scale + std::pow(d.y(i, s), 3.0);
    }
    std::mt19937_64 r2(10);
    const auto b = estimate_rank(d, 300, r2);
    EXPECT_EQ(a.theta.beta(0), b.theta.beta(0));
    EXPECT_EQ(a.objective, b.objective);
}

TEST(EstimateRank, Errors)
{
    std::mt19937_64 rng(11);
    RankData d = simulate(rng, 50, 3, 1.0);
    for (auto& xi : d.x) xi.setConstant(1.0);
    EXPECT_THROW(estimate_rank(d, 100, rng), EstimationError);
    RankData tie = simulate(rng, 5, 3, 1.0);
    tie.y(2, 1) = tie.y(2, 0);
    EXPECT_THROW(estimate_rank(tie, 100, rng), TieError);
}
