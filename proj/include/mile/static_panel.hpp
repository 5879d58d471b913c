#pragma once

// Linear stationary panel y_it = eta_i + x_it' beta + u_it with AR(1) errors.
// The fixed effects are removed by first differencing, which is the maximal
// invariant under y_i -> y_i + g 1_T.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mile/numkern.hpp"

namespace mile {

struct StaticPanelData {
    Eigen::MatrixXd y;               // N x T
    std::vector<Eigen::MatrixXd> x;  // N entries, each T x K

    Eigen::Index n() const { return y.rows(); }
    Eigen::Index t() const { return y.cols(); }
    Eigen::Index k() const { return x.empty() ? 0 : x.front().cols(); }

    void validate() const
    {
        if (y.rows() < 1) throw DomainError("static panel: need N >= 1");
        if (y.cols() < 2) throw DomainError("static panel: need T >= 2");
        if (!y.allFinite()) throw DomainError("static panel: y has non-finite values");
        if (!x.empty() && static_cast<Eigen::Index>(x.size()) != y.rows()) {
            throw DomainError("static panel: x must have one T x K block per individual");
        }
        for (const auto& xi : x) {
            if (xi.rows() != y.cols() || xi.cols() != k()) throw DomainError("static panel: inconsistent x block");
            if (!xi.allFinite()) throw DomainError("static panel: x has non-finite values");
        }
    }
};

struct ThetaStatic {
    Eigen::VectorXd beta;
    double sigma2 = 1.0;
    double rho = 0.0;
};

inline Eigen::MatrixXd diff_matrix(Eigen::Index t)
{
    if (t < 2) throw DomainError("diff_matrix: T must be >= 2");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(t - 1, t);
    for (Eigen::Index r = 0; r < t - 1; ++r) {
        d(r, r) = 1.0;
        d(r, r + 1) = -1.0;
    }
    return d;
}

inline SymMat ar1_cov(double rho, Eigen::Index t)
{
    if (!(std::fabs(rho) < 1.0)) throw DomainError("ar1_cov: |rho| must be < 1");
    if (t < 1) throw DomainError("ar1_cov: T must be >= 1");
    Eigen::MatrixXd s(t, t);
    const double scale = 1.0 / (1.0 - rho * rho);
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = 0; j < t; ++j) s(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j))) * scale;
    return SymMat(std::move(s));
}

namespace detail {

inline Eigen::MatrixXd differenced_cov(double rho, Eigen::Index t)
{
    const Eigen::MatrixXd d = diff_matrix(t);
    return d * ar1_cov(rho, t).matrix() * d.transpose();
}

// Differenced outcomes and regressors, laid out column-per-individual so that a
// single triangular solve whitens the whole panel.
struct DifferencedPanel {
    Eigen::MatrixXd dy;               // (T-1) x N
    std::vector<Eigen::MatrixXd> dx;  // K entries, each (T-1) x N
};

inline DifferencedPanel difference_panel(const StaticPanelData& data)
{
    const Eigen::Index n = data.n();
    const Eigen::Index t = data.t();
    const Eigen::Index k = data.k();
    DifferencedPanel out;
    const Eigen::MatrixXd d = diff_matrix(t);
    out.dy = d * data.y.transpose();
    out.dx.assign(static_cast<std::size_t>(k), Eigen::MatrixXd(t - 1, n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::MatrixXd dxi = d * data.x[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < k; ++j) out.dx[static_cast<std::size_t>(j)].col(i) = dxi.col(j);
    }
    return out;
}

struct StaticProfile {
    Eigen::VectorXd beta;
    double ssr = 0.0;
    double log_det = 0.0;
};

inline StaticProfile profile_at_rho(const DifferencedPanel& p, double rho)
{
    const Eigen::Index tm1 = p.dy.rows();
    const Eigen::LLT<Eigen::MatrixXd> llt(differenced_cov(rho, tm1 + 1));
    if (llt.info() != Eigen::Success) throw NumericError("static panel: differenced covariance is singular");
    const auto l = llt.matrixL();
    const Eigen::MatrixXd wy = l.solve(p.dy);
    const auto k = static_cast<Eigen::Index>(p.dx.size());
    std::vector<Eigen::MatrixXd> wx;
    wx.reserve(p.dx.size());
    for (const auto& m : p.dx) wx.push_back(l.solve(m));

    StaticProfile out;
    out.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.beta = Eigen::VectorXd::Zero(k);
    if (k > 0) {
        Eigen::MatrixXd xtx(k, k);
        Eigen::VectorXd xty(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            xty(a) = (wx[static_cast<std::size_t>(a)].array() * wy.array()).sum();
            for (Eigen::Index b = 0; b <= a; ++b) {
                xtx(a, b) = (wx[static_cast<std::size_t>(a)].array() * wx[static_cast<std::size_t>(b)].array()).sum();
                xtx(b, a) = xtx(a, b);
            }
        }
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
        out.beta = ldlt.solve(xty);
    }
    Eigen::MatrixXd resid = wy;
    for (Eigen::Index a = 0; a < k; ++a) resid -= out.beta(a) * wx[static_cast<std::size_t>(a)];
    out.ssr = resid.squaredNorm();
    return out;
}

inline constexpr double kStaticSigma2Min = 1e-8;
inline constexpr double kStaticSigma2Max = 1e8;
inline constexpr double kStaticRhoBound = 0.99;

}  // namespace detail

// Sum over individuals of the log density of D y_i.
inline double loglik_static(const StaticPanelData& data, const ThetaStatic& theta)
{
    data.validate();
    if (theta.beta.size() != data.k()) throw DomainError("loglik_static: beta has wrong length");
    if (!(theta.sigma2 > 0.0)) throw DomainError("loglik_static: sigma2 must be positive");
    const Eigen::Index t = data.t();
    const Eigen::Index n = data.n();
    const Eigen::LLT<Eigen::MatrixXd> llt(detail::differenced_cov(theta.rho, t));
    if (llt.info() != Eigen::Success) throw NumericError("loglik_static: differenced covariance is singular");
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::MatrixXd d = diff_matrix(t);
    double quad = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd e = data.y.row(i).transpose();
        if (data.k() > 0) e -= data.x[static_cast<std::size_t>(i)] * theta.beta;
        quad += llt.matrixL().solve(d * e).squaredNorm();
    }
    const double tm1 = static_cast<double>(t - 1);
    return static_cast<double>(n) * (-0.5 * tm1 * std::log(2.0 * std::numbers::pi * theta.sigma2) - 0.5 * log_det) -
           quad / (2.0 * theta.sigma2);
}

// MILE with beta and sigma2 profiled out; the numeric search is over rho only.
inline EstimateReport<ThetaStatic> estimate_static(const StaticPanelData& data)
{
    data.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index t = data.t();
    const Eigen::Index k = data.k();
    const double dof = static_cast<double>(n * (t - 1));
    if (!(dof > static_cast<double>(k + 2))) throw EstimationError("estimate_static: need N(T-1) > K + 2");

    const detail::DifferencedPanel panel = detail::difference_panel(data);
    if (k > 0) {
        Eigen::MatrixXd stacked(panel.dy.size(), k);
        for (Eigen::Index a = 0; a < k; ++a) {
            stacked.col(a) = Eigen::Map<const Eigen::VectorXd>(panel.dx[static_cast<std::size_t>(a)].data(), panel.dy.size());
        }
        if (numeric_rank(stacked) < k) throw EstimationError("estimate_static: differenced regressors are rank deficient");
    }

    auto sigma2_of = [&](double ssr) {
        return std::clamp(ssr / dof, detail::kStaticSigma2Min, detail::kStaticSigma2Max);
    };
    auto profile_value = [&](const detail::StaticProfile& p) {
        const double s2 = sigma2_of(p.ssr);
        return -0.5 * dof * std::log(2.0 * std::numbers::pi * s2) - 0.5 * static_cast<double>(n) * p.log_det -
               p.ssr / (2.0 * s2);
    };
    const ScalarOptResult best = maximize_scalar(
        [&](double rho) { return profile_value(detail::profile_at_rho(panel, rho)); }, -detail::kStaticRhoBound,
        detail::kStaticRhoBound, 80);

    const detail::StaticProfile p = detail::profile_at_rho(panel, best.argmax);
    EstimateReport<ThetaStatic> report;
    report.theta.beta = p.beta;
    report.theta.rho = best.argmax;
    const double raw_s2 = p.ssr / dof;
    report.theta.sigma2 = sigma2_of(p.ssr);
    report.objective = profile_value(p);
    report.converged = std::isfinite(report.objective);
    report.at_boundary.assign(static_cast<std::size_t>(k), false);
    report.at_boundary.push_back(raw_s2 <= detail::kStaticSigma2Min || raw_s2 >= detail::kStaticSigma2Max);
    report.at_boundary.push_back(best.at_boundary);
    return report;
}

}  // namespace mile
