#pragma once

// Agent-specific monotone transformation model eta_i(y_it) = x_it' beta + u_it.
// The ranks of y_i are the maximal invariant; their probability involves an
// expectation over standard-normal order statistics, estimated by Monte Carlo
// with one shared draw table (common random numbers).
//
// For a normal sample the mean is independent of the sorted deviations, so
//   E exp(sum_j V_(j) c_j) = exp(T cbar^2 / 2) E exp(sum_j (V_(j) - Vbar)(c_j - cbar)).
// The first factor is applied exactly and only the centred order statistics
// are simulated. The estimate of the expectation stays unbiased.
//
// The plain average of exp(.) is heavy tailed once |x'beta| is of order one,
// and the log of a heavy-tailed average is biased downward. The estimator
// therefore defaults to an importance-sampling form: with W = Z + c, c(j) the
// index of the period ranked j, and v = sort(W),
//   f = E[ exp(sum_j v_j c_j) / perm(exp(v_j c_k)) ],
// whose integrand lies in (0, 1]. The permanent is enumerated, so this form is
// limited to T <= kMaxImportanceT.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "mile/numkern.hpp"

namespace mile {

struct RankData {
    Eigen::MatrixXd y;               // N x T
    std::vector<Eigen::MatrixXd> x;  // N entries, each T x K

    Eigen::Index n() const { return y.rows(); }
    Eigen::Index t() const { return y.cols(); }
    Eigen::Index k() const { return x.empty() ? 0 : x.front().cols(); }

    void validate() const
    {
        if (y.rows() < 1) throw DomainError("rank model: need N >= 1");
        if (static_cast<Eigen::Index>(x.size()) != y.rows()) throw DomainError("rank model: need one x block per individual");
        if (k() < 1) throw DomainError("rank model: need K >= 1");
        if (y.cols() <= k()) throw DomainError("rank model: need T > K");
        for (const auto& xi : x)
            if (xi.rows() != y.cols() || xi.cols() != k()) throw DomainError("rank model: inconsistent x block");
    }
};

using RankVector = std::vector<int>;  // 1-based ranks, a permutation of 1..T

struct ThetaRank {
    Eigen::VectorXd beta;
};

inline RankVector compute_ranks(const Eigen::VectorXd& row)
{
    const auto t = static_cast<std::size_t>(row.size());
    std::vector<std::size_t> order(t);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return row(static_cast<Eigen::Index>(a)) < row(static_cast<Eigen::Index>(b));
    });
    RankVector ranks(t);
    for (std::size_t pos = 0; pos < t; ++pos) {
        if (pos > 0 && row(static_cast<Eigen::Index>(order[pos])) == row(static_cast<Eigen::Index>(order[pos - 1]))) {
            throw TieError("compute_ranks: tied values");
        }
        ranks[order[pos]] = static_cast<int>(pos) + 1;
    }
    return ranks;
}

// R x T table; row r holds an ascending sample of T iid N(0, 1) draws with the
// sample mean subtracted.
template <class Rng>
Eigen::MatrixXd ordered_normal_draws(Eigen::Index t, Eigen::Index r, Rng& rng)
{
    if (r < 1) throw DomainError("ordered_normal_draws: need at least one draw");
    std::normal_distribution<double> n01;
    Eigen::MatrixXd v(r, t);
    std::vector<double> buf(static_cast<std::size_t>(t));
    for (Eigen::Index i = 0; i < r; ++i) {
        for (auto& b : buf) b = n01(rng);
        std::sort(buf.begin(), buf.end());
        const double mean = std::accumulate(buf.begin(), buf.end(), 0.0) / static_cast<double>(t);
        for (Eigen::Index j = 0; j < t; ++j) v(i, j) = buf[static_cast<std::size_t>(j)] - mean;
    }
    return v;
}

enum class RankSimulator { order_statistics, importance };

inline constexpr Eigen::Index kMaxImportanceT = 8;

// R x T table of iid N(0, 1) draws for the importance-sampling form.
template <class Rng>
Eigen::MatrixXd raw_normal_draws(Eigen::Index t, Eigen::Index r, Rng& rng)
{
    if (r < 1) throw DomainError("raw_normal_draws: need at least one draw");
    std::normal_distribution<double> n01;
    Eigen::MatrixXd v(r, t);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < t; ++j) v(i, j) = n01(rng);
    return v;
}

namespace detail {

inline std::vector<std::vector<int>> permutations(int t)
{
    std::vector<int> p(static_cast<std::size_t>(t));
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

// ln of the average importance weight for one individual; c is ordered by rank.
inline double log_importance_average(const Eigen::VectorXd& c, const Eigen::MatrixXd& raw,
                                     const std::vector<std::vector<int>>& perms)
{
    const Eigen::Index t = c.size();
    if (t == 2) {
        // The permanent has two terms; the weight is a logistic function of the gap.
        const double dc = c(1) - c(0);
        double acc = 0.0;
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
            const double gap = std::fabs(raw(r, 1) + c(1) - raw(r, 0) - c(0));
            acc += 1.0 / (1.0 + std::exp(-gap * dc));
        }
        return std::log(acc / static_cast<double>(raw.rows()));
    }
    std::vector<double> v(static_cast<std::size_t>(t));
    std::vector<double> terms(perms.size());
    double acc = 0.0;
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        for (Eigen::Index j = 0; j < t; ++j) v[static_cast<std::size_t>(j)] = raw(r, j) + c(j);
        std::sort(v.begin(), v.end());
        double num = 0.0;
        for (Eigen::Index j = 0; j < t; ++j) num += v[static_cast<std::size_t>(j)] * c(j);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < perms.size(); ++p) {
            double e = 0.0;
            for (Eigen::Index j = 0; j < t; ++j) e += v[static_cast<std::size_t>(j)] * c(perms[p][static_cast<std::size_t>(j)]);
            terms[p] = e;
            mx = std::max(mx, e);
        }
        double sum = 0.0;
        for (double e : terms) sum += std::exp(e - mx);
        acc += std::exp(num - mx) / sum;
    }
    return std::log(acc / static_cast<double>(raw.rows()));
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

inline void check_ranks(const RankVector& m, Eigen::Index t)
{
    if (static_cast<Eigen::Index>(m.size()) != t) throw DomainError("rank pmf: rank vector has wrong length");
    std::vector<bool> seen(m.size(), false);
    for (int v : m) {
        if (v < 1 || v > static_cast<int>(t) || seen[static_cast<std::size_t>(v - 1)]) {
            throw DomainError("rank pmf: ranks are not a permutation of 1..T");
        }
        seen[static_cast<std::size_t>(v - 1)] = true;
    }
}

}  // namespace detail

// Log probability of the ranks with the expectation replaced by the average
// over the rows of a fixed draw table.
inline double rank_log_pmf(const RankVector& m, const Eigen::MatrixXd& x_row, const Eigen::VectorXd& beta,
                           const Eigen::MatrixXd& draws)
{
    const Eigen::Index t = x_row.rows();
    detail::check_ranks(m, t);
    if (draws.cols() != t) throw DomainError("rank pmf: draw table has wrong width");
    Eigen::VectorXd a = x_row * beta;
    a.array() -= a.mean();  // exp(T abar^2 / 2) cancels against the abar part of -|a|^2 / 2
    Eigen::VectorXd c(t);   // c(j) = a_t for the period t of rank j + 1
    for (Eigen::Index s = 0; s < t; ++s) c(m[static_cast<std::size_t>(s)] - 1) = a(s);
    const Eigen::VectorXd e = draws * c;
    return -log_gamma(static_cast<double>(t) + 1.0) + detail::log_sum_exp(e) - std::log(static_cast<double>(draws.rows())) -
           0.5 * a.squaredNorm();
}

template <class Rng>
double rank_log_pmf_mc(const RankVector& m, const Eigen::MatrixXd& x_row, const Eigen::VectorXd& beta, Eigen::Index draws,
                       Rng& rng)
{
    return rank_log_pmf(m, x_row, beta, ordered_normal_draws(x_row.rows(), draws, rng));
}

// Importance-sampling form of the same log probability; raw holds unsorted draws.
inline double rank_log_pmf_importance(const RankVector& m, const Eigen::MatrixXd& x_row, const Eigen::VectorXd& beta,
                                      const Eigen::MatrixXd& raw)
{
    const Eigen::Index t = x_row.rows();
    detail::check_ranks(m, t);
    if (t > kMaxImportanceT) throw DomainError("rank pmf: importance form needs T <= 8");
    if (raw.cols() != t) throw DomainError("rank pmf: draw table has wrong width");
    const Eigen::VectorXd a = x_row * beta;
    Eigen::VectorXd c(t);
    for (Eigen::Index s = 0; s < t; ++s) c(m[static_cast<std::size_t>(s)] - 1) = a(s);
    return detail::log_importance_average(c, raw, detail::permutations(static_cast<int>(t)));
}

// Average log pmf over individuals. Individuals are processed in blocks so the
// order-statistic sums are a single matrix product per block.
inline double rank_objective(const std::vector<RankVector>& ranks, const std::vector<Eigen::MatrixXd>& x,
                             const Eigen::VectorXd& beta, const Eigen::MatrixXd& draws,
                             RankSimulator sim = RankSimulator::order_statistics)
{
    const auto n = static_cast<Eigen::Index>(ranks.size());
    if (sim == RankSimulator::importance) {
        const Eigen::Index t = draws.cols();
        if (t > kMaxImportanceT) throw DomainError("rank objective: importance form needs T <= 8");
        const auto perms = detail::permutations(static_cast<int>(t));
        double total = 0.0;
        Eigen::VectorXd c(t);
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            const Eigen::VectorXd a = x[i] * beta;
            for (Eigen::Index s = 0; s < t; ++s) c(ranks[i][static_cast<std::size_t>(s)] - 1) = a(s);
            total += detail::log_importance_average(c, draws, perms);
        }
        return total / static_cast<double>(n);
    }
    const Eigen::Index t = draws.cols();
    const double r = static_cast<double>(draws.rows());
    double total = 0.0;
    constexpr Eigen::Index kBlock = 256;
    Eigen::MatrixXd c(t, kBlock);
    for (Eigen::Index start = 0; start < n; start += kBlock) {
        const Eigen::Index len = std::min(kBlock, n - start);
        for (Eigen::Index j = 0; j < len; ++j) {
            const auto i = static_cast<std::size_t>(start + j);
            Eigen::VectorXd a = x[i] * beta;
            a.array() -= a.mean();
            for (Eigen::Index s = 0; s < t; ++s) c(ranks[i][static_cast<std::size_t>(s)] - 1, j) = a(s);
            total -= 0.5 * a.squaredNorm();
        }
        const Eigen::MatrixXd e = draws * c.leftCols(len);
        for (Eigen::Index j = 0; j < len; ++j) total += detail::log_sum_exp(e.col(j));
    }
    total += static_cast<double>(n) * (-log_gamma(static_cast<double>(t) + 1.0) - std::log(r));
    return total / static_cast<double>(n);
}

// sim defaults to the importance form when T <= kMaxImportanceT.
template <class Rng>
EstimateReport<ThetaRank> estimate_rank(const RankData& data, Eigen::Index draws, Rng& rng,
                                        std::optional<RankSimulator> sim = std::nullopt)
{
    data.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index t = data.t();
    const Eigen::Index k = data.k();

    Eigen::MatrixXd diffs(n * (t - 1), k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::MatrixXd& xi = data.x[static_cast<std::size_t>(i)];
        for (Eigen::Index s = 1; s < t; ++s) diffs.row(i * (t - 1) + s - 1) = xi.row(s) - xi.row(0);
    }
    if (numeric_rank(diffs) < k) throw EstimationError("estimate_rank: regressor differences are rank deficient");

    std::vector<RankVector> ranks;
    ranks.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ranks.push_back(compute_ranks(data.y.row(i).transpose()));

    const RankSimulator mode =
        sim.value_or(t <= kMaxImportanceT ? RankSimulator::importance : RankSimulator::order_statistics);
    const Eigen::MatrixXd table =
        mode == RankSimulator::importance ? raw_normal_draws(t, draws, rng) : ordered_normal_draws(t, draws, rng);
    Objective f = [&](const Eigen::VectorXd& b) { return rank_objective(ranks, data.x, b, table, mode); };

    OptimizerSpec spec;
    spec.lower = Eigen::VectorXd::Constant(k, -50.0);
    spec.upper = Eigen::VectorXd::Constant(k, 50.0);
    spec.starts = {Eigen::VectorXd::Zero(k), Eigen::VectorXd::Constant(k, 0.5), Eigen::VectorXd::Constant(k, -0.5)};
    spec.simplex_tol = 1e-6;  // far below the simulation noise in beta
    const OptResult r = maximize(f, std::nullopt, spec);

    EstimateReport<ThetaRank> rep;
    rep.theta.beta = r.argmax;
    rep.objective = r.value;
    rep.converged = r.converged;
    rep.at_boundary = r.at_boundary;
    rep.iterations = r.iterations;
    return rep;
}

}  // namespace mile
