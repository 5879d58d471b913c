#include <gtest/gtest.h>

#include <random>

#include "mile/comparators.hpp"

using namespace mile;

namespace {

DynPanelData baseline_panel(std::mt19937_64& rng, Eigen::Index n, Eigen::Index t, double rho = 0.5)
{
    return simulate_dyn(n, t, rho, 1.0, DynEffects::random_normal(4.0), DynErrors::normal, rng);
}

void expect_centred(const Eigen::MatrixXd& g)
{
    const double n = static_cast<double>(g.rows());
    const Eigen::RowVectorXd mean = g.colwise().mean();
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const double sd = std::sqrt((g.col(j).array() - mean(j)).square().sum() / (n - 1.0));
        EXPECT_LT(std::fabs(mean(j)), 3.0 * sd / std::sqrt(n)) << "moment " << j;
    }
}

}  // namespace

TEST(WithinOls, MatchesWishartForm)
{
    std::mt19937_64 rng(1);
    const DynPanelData d = baseline_panel(rng, 50, 6);
    EXPECT_NEAR(within_ols(d), within_ols_w(wishart_stat_dyn(d)), 1e-12);
}

TEST(WithinOls, NickellBiasAndLargeT)
{
    std::mt19937_64 rng(2);
    EXPECT_LT(within_ols(baseline_panel(rng, 5000, 5)), 0.45);
    EXPECT_NEAR(within_ols(baseline_panel(rng, 10000, 100)), 0.5, 0.02);
}

TEST(WithinOls, Degenerate)
{
    // Constant paths: the demeaned outcome vanishes and so does the estimate.
    const DynPanelData flat{Eigen::MatrixXd::Constant(6, 4, 2.5)};
    EXPECT_NEAR(within_ols(flat), 0.0, 1e-15);
    EXPECT_THROW(within_ols(DynPanelData{Eigen::MatrixXd::Zero(6, 4)}), EstimationError);
    EXPECT_THROW(within_ols(DynPanelData{Eigen::MatrixXd::Ones(6, 1)}), DomainError);
}

TEST(Bcols, AffineInWithinOls)
{
    std::mt19937_64 rng(3);
    for (Eigen::Index t : {2, 5, 25}) {
        const DynPanelData d = baseline_panel(rng, 30, t);
        const double td = static_cast<double>(t);
        const ComparatorResult r = bcols(d);
        EXPECT_TRUE(r.available);
        EXPECT_NEAR(r.rho, (td + 1.0) / td * within_ols(d) + 1.0 / td, 1e-14);
    }
}

TEST(Bcols, ReferenceMeans)
{
    std::mt19937_64 rng(4);
    const int reps = 300;
    double sum25 = 0.0;
    double sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
        sum25 += bcols(baseline_panel(rng, 100, 25)).rho;
        sum2 += bcols(baseline_panel(rng, 100, 2)).rho;
    }
    EXPECT_NEAR(sum25 / reps, 0.5184, 0.01);
    EXPECT_NEAR(sum2 / reps, 0.9474, 0.03);
}

TEST(ArellanoBond, Availability)
{
    std::mt19937_64 rng(5);
    const ComparatorResult r2 = arellano_bond(baseline_panel(rng, 20, 2));
    EXPECT_FALSE(r2.available);
    EXPECT_TRUE(std::isnan(r2.rho));
    EXPECT_FALSE(ahn_schmidt(baseline_panel(rng, 20, 2)).available);
    for (Eigen::Index t : {3, 4, 10}) {
        const ComparatorResult r = arellano_bond(baseline_panel(rng, 100, t));
        EXPECT_TRUE(r.available) << t;
        EXPECT_EQ(r.condition_numbers.size(), 2u);
        EXPECT_TRUE(ahn_schmidt(baseline_panel(rng, 100, t)).available) << t;
    }
}

TEST(ArellanoBond, InstrumentLayout)
{
    // T = 4: equations t = 3, 4 with instruments {y1} and {y1, y2}.
    const Eigen::RowVector4d y(1.0, 3.0, 6.0, 10.0);
    const DynPanelData d{Eigen::MatrixXd(y)};
    const Eigen::MatrixXd g = ab_moments(d, 0.5);
    ASSERT_EQ(g.cols(), 3);
    const double e3 = (6.0 - 3.0) - 0.5 * (3.0 - 1.0);
    const double e4 = (10.0 - 6.0) - 0.5 * (6.0 - 3.0);
    EXPECT_DOUBLE_EQ(g(0, 0), 1.0 * e3);
    EXPECT_DOUBLE_EQ(g(0, 1), 1.0 * e4);
    EXPECT_DOUBLE_EQ(g(0, 2), 3.0 * e4);

    const Eigen::MatrixXd a = as_moments(d, 0.5);
    ASSERT_EQ(a.cols(), 5);
    const double last = 10.0 - 0.5 * 6.0;
    EXPECT_DOUBLE_EQ(a(0, 3), ((3.0 - 1.0) - 0.5 * (1.0 - 0.0)) * last);
    EXPECT_DOUBLE_EQ(a(0, 4), e3 * last);
}

TEST(ArellanoBond, NoiselessRecovery)
{
    std::mt19937_64 rng(6);
    const Eigen::VectorXd eta = Eigen::VectorXd::LinSpaced(50, -2.0, 3.0);
    const DynPanelData exact = simulate_dyn(50, 5, 0.6, 1e-30, DynEffects::given(eta), DynErrors::normal, rng);
    EXPECT_LT(ab_moments(exact, 0.6).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(as_moments(exact, 0.6).cwiseAbs().maxCoeff(), 1e-12);

    const DynPanelData d = simulate_dyn(50, 5, 0.6, 1e-10, DynEffects::given(eta), DynErrors::normal, rng);
    EXPECT_NEAR(arellano_bond(d).rho, 0.6, 1e-3);
    EXPECT_NEAR(ahn_schmidt(d).rho, 0.6, 1e-3);
}

TEST(ArellanoBond, MomentsCentredAtTruth)
{
    std::mt19937_64 rng(7);
    const DynPanelData d = baseline_panel(rng, 20000, 5);
    expect_centred(ab_moments(d, 0.5));
    expect_centred(as_moments(d, 0.5));
    // and not centred away from it
    EXPECT_GT(std::fabs(ab_moments(d, 0.8).colwise().mean()(0)), 0.1);
}

TEST(ArellanoBond, ReferenceMeansLoose)
{
    std::mt19937_64 rng(8);
    const int reps = 200;
    double ab3 = 0.0;
    double mse_ab5 = 0.0;
    double mse_as5 = 0.0;
    for (int r = 0; r < reps; ++r) {
        ab3 += arellano_bond(baseline_panel(rng, 100, 3)).rho;
        const DynPanelData d = baseline_panel(rng, 100, 5);
        mse_ab5 += std::pow(arellano_bond(d).rho - 0.5, 2);
        mse_as5 += std::pow(ahn_schmidt(d).rho - 0.5, 2);
    }
    EXPECT_NEAR(ab3 / reps, 0.5372, 0.1);
    // The extra moments reduce dispersion relative to AB on the same samples.
    EXPECT_LT(mse_as5, mse_ab5);
}

TEST(ArellanoBond, RidgeRecordedWhenUnderdetermined)
{
    // N = 5 individuals cannot fill a 36 x 36 second-step weighting.
    std::mt19937_64 rng(9);
    const ComparatorResult r = arellano_bond(baseline_panel(rng, 5, 10));
    EXPECT_TRUE(r.ridged);
    EXPECT_TRUE(std::isfinite(r.rho));
}
