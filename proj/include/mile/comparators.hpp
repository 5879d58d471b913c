#pragma once

// Fixed-effects comparators for the dynamic panel: within-group OLS, its
// bias-corrected version, Arellano-Bond and Ahn-Schmidt GMM. Periods are
// y_1..y_T with y_0 = 0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mile/dyn_panel.hpp"

namespace mile {

struct ComparatorResult {
    double rho = std::numeric_limits<double>::quiet_NaN();
    bool available = false;
    std::vector<double> condition_numbers;  // weighting matrices, in step order
    bool ridged = false;
};

inline double within_ols(const DynPanelData& data)
{
    data.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index t = data.t();
    if (t < 2) throw DomainError("within_ols: T must be >= 2");
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd y = data.y.row(i).transpose();
        Eigen::VectorXd lag(t);
        lag(0) = 0.0;
        lag.tail(t - 1) = y.head(t - 1);
        const Eigen::ArrayXd yc = y.array() - y.mean();
        const Eigen::ArrayXd lc = lag.array() - lag.mean();
        num += (lc * yc).sum();
        den += lc.square().sum();
    }
    if (!(den > 1e-300)) throw EstimationError("within_ols: demeaned lagged outcome has zero variation");
    return num / den;
}

inline ComparatorResult bcols(const DynPanelData& data)
{
    const double td = static_cast<double>(data.t());
    ComparatorResult r;
    r.rho = (td + 1.0) / td * within_ols(data) + 1.0 / td;
    r.available = true;
    return r;
}

namespace detail {

inline constexpr double kGmmRidge = 1e-10;
inline constexpr double kGmmCondLimit = 1e12;

// Number of Arellano-Bond instruments: y_1..y_{t-2} for t = 3..T.
inline Eigen::Index ab_instrument_count(Eigen::Index t) { return (t - 2) * (t - 1) / 2; }

// Per-individual pieces of the differenced equations t = 3..T:
// z (T-2 x L) block-diagonal instruments, dy and dy_lag (T-2).
struct AbBlock {
    Eigen::MatrixXd z;
    Eigen::VectorXd dy;
    Eigen::VectorXd dy_lag;
};

inline AbBlock ab_block(const Eigen::VectorXd& y)
{
    const Eigen::Index t = y.size();
    const Eigen::Index m = t - 2;
    auto level = [&](Eigen::Index s) { return s == 0 ? 0.0 : y(s - 1); };
    AbBlock b{Eigen::MatrixXd::Zero(m, ab_instrument_count(t)), Eigen::VectorXd(m), Eigen::VectorXd(m)};
    Eigen::Index col = 0;
    for (Eigen::Index s = 3; s <= t; ++s) {
        const Eigen::Index row = s - 3;
        b.dy(row) = level(s) - level(s - 1);
        b.dy_lag(row) = level(s - 1) - level(s - 2);
        for (Eigen::Index k = 1; k <= s - 2; ++k) b.z(row, col++) = level(k);
    }
    return b;
}

// Inverse of a PSD weighting matrix; a relative ridge is added when it is
// ill-conditioned.
inline Eigen::MatrixXd gmm_weight(const Eigen::MatrixXd& s, ComparatorResult& diag)
{
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    diag.condition_numbers.push_back(cond);
    Eigen::MatrixXd m = s;
    if (!(cond < kGmmCondLimit)) {
        const double scale = std::max(s.diagonal().mean(), std::numeric_limits<double>::min());
        m.diagonal().array() += kGmmRidge * scale;
        diag.ridged = true;
    }
    return m.ldlt().solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
}

inline Eigen::MatrixXd diff_error_cov(Eigen::Index m)
{
    Eigen::MatrixXd h = 2.0 * Eigen::MatrixXd::Identity(m, m);
    for (Eigen::Index i = 1; i < m; ++i) h(i, i - 1) = h(i - 1, i) = -1.0;
    return h;
}

// Extra Ahn-Schmidt moments (dy_t - rho dy_{t-1}) (y_T - rho y_{T-1}), t = 2..T-1.
inline Eigen::VectorXd as_extra(const Eigen::VectorXd& y, double rho)
{
    const Eigen::Index t = y.size();
    auto level = [&](Eigen::Index s) { return s == 0 ? 0.0 : y(s - 1); };
    const double last = level(t) - rho * level(t - 1);
    Eigen::VectorXd g(t - 2);
    for (Eigen::Index s = 2; s <= t - 1; ++s) {
        const double du = (level(s) - level(s - 1)) - rho * (level(s - 1) - level(s - 2));
        g(s - 2) = du * last;
    }
    return g;
}

}  // namespace detail

// N x L matrix of per-individual Arellano-Bond moments at rho.
inline Eigen::MatrixXd ab_moments(const DynPanelData& data, double rho)
{
    data.validate();
    if (data.t() < 3) throw DomainError("ab_moments: T must be >= 3");
    Eigen::MatrixXd g(data.n(), detail::ab_instrument_count(data.t()));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const detail::AbBlock b = detail::ab_block(data.y.row(i).transpose());
        g.row(i) = (b.z.transpose() * (b.dy - rho * b.dy_lag)).transpose();
    }
    return g;
}

// N x (L + T - 2) matrix of per-individual Ahn-Schmidt moments at rho.
inline Eigen::MatrixXd as_moments(const DynPanelData& data, double rho)
{
    const Eigen::MatrixXd lin = ab_moments(data, rho);
    const Eigen::Index extra = data.t() - 2;
    Eigen::MatrixXd g(data.n(), lin.cols() + extra);
    g.leftCols(lin.cols()) = lin;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        g.row(i).tail(extra) = detail::as_extra(data.y.row(i).transpose(), rho).transpose();
    }
    return g;
}

inline ComparatorResult arellano_bond(const DynPanelData& data)
{
    data.validate();
    ComparatorResult r;
    if (data.t() < 3) return r;
    const Eigen::Index n = data.n();
    const Eigen::Index l = detail::ab_instrument_count(data.t());
    const Eigen::MatrixXd h = detail::diff_error_cov(data.t() - 2);
    std::vector<detail::AbBlock> blocks;
    blocks.reserve(static_cast<std::size_t>(n));
    Eigen::VectorXd zx = Eigen::VectorXd::Zero(l);
    Eigen::VectorXd zy = Eigen::VectorXd::Zero(l);
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(l, l);
    for (Eigen::Index i = 0; i < n; ++i) {
        blocks.push_back(detail::ab_block(data.y.row(i).transpose()));
        const auto& b = blocks.back();
        zx += b.z.transpose() * b.dy_lag;
        zy += b.z.transpose() * b.dy;
        s1 += b.z.transpose() * h * b.z;
    }
    const double nd = static_cast<double>(n);
    zx /= nd;
    zy /= nd;
    s1 /= nd;

    auto solve = [&](const Eigen::MatrixXd& w) {
        const double den = zx.dot(w * zx);
        if (!(std::fabs(den) > 0.0)) throw EstimationError("arellano_bond: instruments are uninformative");
        return zx.dot(w * zy) / den;
    };
    const double rho1 = solve(detail::gmm_weight(s1, r));

    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(l, l);
    for (const auto& b : blocks) {
        const Eigen::VectorXd g = b.z.transpose() * (b.dy - rho1 * b.dy_lag);
        s2 += g * g.transpose();
    }
    s2 /= nd;
    r.rho = solve(detail::gmm_weight(s2, r));
    r.available = std::isfinite(r.rho);
    return r;
}

inline constexpr double kAhnSchmidtRhoBound = 5.0;

inline ComparatorResult ahn_schmidt(const DynPanelData& data)
{
    data.validate();
    ComparatorResult r;
    if (data.t() < 3) return r;
    const ComparatorResult first = arellano_bond(data);
    r.condition_numbers = first.condition_numbers;
    r.ridged = first.ridged;
    const double rho1 = std::clamp(first.rho, -kAhnSchmidtRhoBound, kAhnSchmidtRhoBound);

    const Eigen::MatrixXd g1 = as_moments(data, std::isfinite(rho1) ? rho1 : 0.0);
    const Eigen::MatrixXd s = g1.transpose() * g1 / static_cast<double>(data.n());
    const Eigen::MatrixXd w = detail::gmm_weight(s, r);

    const auto criterion = [&](double rho) {
        const Eigen::VectorXd gbar = as_moments(data, rho).colwise().mean().transpose();
        return -gbar.dot(w * gbar);
    };
    const ScalarOptResult best = maximize_scalar(criterion, -kAhnSchmidtRhoBound, kAhnSchmidtRhoBound, 200);
    r.rho = best.argmax;
    r.available = std::isfinite(r.rho);
    return r;
}

}  // namespace mile
