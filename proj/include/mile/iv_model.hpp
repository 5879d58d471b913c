#pragma once

// IV model y1 = y2 beta + u, y2 = Z pi + v2 with known reduced-form covariance
// Sigma. Invariance under rotations of the instrument space reduces the data to
// W = Y' N_Z Y / N, a scaled noncentral Wishart with rank-one noncentrality
// lambda a a', a = (beta, 1)'.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "mile/numkern.hpp"

namespace mile {

struct IVData {
    Eigen::VectorXd y1;
    Eigen::VectorXd y2;
    Eigen::MatrixXd z;  // N x K
    SymMat sigma;       // 2 x 2 reduced-form error covariance
};

// W with its reduction metadata; construction rejects a matrix that is not PSD.
class WStatIV {
public:
    WStatIV(SymMat w, Eigen::Index k, Eigen::Index n) : w_(std::move(w)), k_(k), n_(n)
    {
        if (w_.dim() != 2) throw DomainError("WStatIV: W must be 2 x 2");
        if (k_ < 1 || n_ <= k_) throw DomainError("WStatIV: need N > K >= 1");
        if (!is_psd(w_)) throw DomainError("WStatIV: W is not positive semidefinite");
    }

    const SymMat& w() const { return w_; }
    const Eigen::MatrixXd& matrix() const { return w_.matrix(); }
    Eigen::Index k() const { return k_; }
    Eigen::Index n() const { return n_; }

private:
    SymMat w_;
    Eigen::Index k_;
    Eigen::Index n_;
};

struct ThetaIV {
    double beta = 0.0;
    double lambda = 0.0;
};

struct IVScoreRegime {
    enum class Kind { exact, siv, mwiv };
    Kind kind = Kind::exact;
    double alpha = 0.0;  // used by mwiv only

    static IVScoreRegime exact() { return {Kind::exact, 0.0}; }
    static IVScoreRegime siv() { return {Kind::siv, 0.0}; }
    static IVScoreRegime mwiv(double alpha) { return {Kind::mwiv, alpha}; }
};

namespace detail {

inline void check_sigma(const SymMat& sigma)
{
    if (sigma.dim() != 2) throw DomainError("iv: Sigma must be 2 x 2");
    if (sym_eig(sigma).values(1) <= 0.0) throw DomainError("iv: Sigma must be positive definite");
}

// Quadratic forms shared by the likelihood, scores and information.
struct IVForms {
    double c;  // a' S^-1 a
    double d;  // a' S^-1 e1
    double e;  // e1' S^-1 e1
    double q;  // a' S^-1 W S^-1 a
    double p;  // a' S^-1 W S^-1 e1
};

inline IVForms iv_forms(const Eigen::Matrix2d& w, double beta, const Eigen::Matrix2d& sigma_inv)
{
    const Eigen::Vector2d a(beta, 1.0);
    const Eigen::Vector2d sa = sigma_inv * a;
    const Eigen::Vector2d se1 = sigma_inv.col(0);
    IVForms f{};
    f.c = a.dot(sa);
    f.d = sa(0);
    f.e = sigma_inv(0, 0);
    f.q = std::max(0.0, sa.dot(w * sa));
    f.p = sa.dot(w * se1);
    return f;
}

}  // namespace detail

inline WStatIV wishart_stat_iv(const IVData& data)
{
    const Eigen::Index n = data.z.rows();
    const Eigen::Index k = data.z.cols();
    if (data.y1.size() != n || data.y2.size() != n) throw DomainError("wishart_stat_iv: y and Z lengths differ");
    if (k < 1 || n <= k) throw DomainError("wishart_stat_iv: need N > K >= 1");
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.z);
    if (qr.rank() < k) throw DomainError("wishart_stat_iv: Z is rank deficient");
    Eigen::MatrixXd y(n, 2);
    y.col(0) = data.y1;
    y.col(1) = data.y2;
    // Q' Y; the first K rows are the coordinates of Y in col(Z).
    const Eigen::MatrixXd qty = qr.householderQ().transpose() * y;
    const Eigen::MatrixXd r1 = qty.topRows(k);
    return WStatIV(SymMat(r1.transpose() * r1 / static_cast<double>(n)), k, n);
}

// theta-dependent part of the log-likelihood divided by N.
inline double loglik_iv(const WStatIV& w, const ThetaIV& theta, const SymMat& sigma)
{
    if (!(theta.lambda >= 0.0)) throw DomainError("loglik_iv: lambda must be >= 0");
    detail::check_sigma(sigma);
    const Eigen::Matrix2d sinv = sigma.matrix().inverse();
    const detail::IVForms f = detail::iv_forms(w.matrix(), theta.beta, sinv);
    const double nu = 0.5 * static_cast<double>(w.k() - 2);
    const double z = 2.0 * std::sqrt(theta.lambda * f.q);
    return -0.5 * theta.lambda * f.c + scaled_bessel_term(nu, z, static_cast<double>(w.n()));
}

inline Eigen::Vector2d score_iv(const WStatIV& w, const ThetaIV& theta, const SymMat& sigma,
                                IVScoreRegime regime = IVScoreRegime::exact())
{
    if (!(theta.lambda >= 0.0)) throw DomainError("score_iv: lambda must be >= 0");
    detail::check_sigma(sigma);
    const Eigen::Matrix2d sinv = sigma.matrix().inverse();
    const detail::IVForms f = detail::iv_forms(w.matrix(), theta.beta, sinv);
    const double lam = theta.lambda;
    Eigen::Vector2d s;
    switch (regime.kind) {
    case IVScoreRegime::Kind::exact: {
        const double n = static_cast<double>(w.n());
        const double nu = 0.5 * static_cast<double>(w.k() - 2);
        // kappa = I_{nu+1}(x) / (x I_nu(x)) with x = N sqrt(lambda q).
        const double kappa = bessel_i_ratio_over_x(nu, n * std::sqrt(lam * f.q));
        s(0) = -lam * f.d + lam * f.p * n * kappa;
        s(1) = -0.5 * f.c + 0.5 * f.q * n * kappa;
        break;
    }
    case IVScoreRegime::Kind::siv: {
        if (!(lam > 0.0)) throw DomainError("score_iv: the siv form needs lambda > 0");
        if (!(f.q > 0.0)) throw DomainError("score_iv: the siv form needs a' S^-1 W S^-1 a > 0");
        s(0) = -lam * f.d + std::sqrt(lam) * f.p / std::sqrt(f.q);
        s(1) = -0.5 * f.c + std::sqrt(f.q) / (2.0 * std::sqrt(lam));
        break;
    }
    case IVScoreRegime::Kind::mwiv: {
        const double alpha = regime.alpha;
        if (!(alpha > 0.0)) throw DomainError("score_iv: the mwiv form needs alpha > 0");
        const double root = std::sqrt(1.0 + 4.0 * lam * f.q / (alpha * alpha));
        s(0) = -lam * f.d + 2.0 * lam * f.p / (alpha * (1.0 + root));
        s(1) = -0.5 * f.c + f.q / (alpha * (1.0 + root));
        break;
    }
    }
    return s;
}

// Top eigenvector of S^-1/2 W S^-1/2 mapped back to a = (beta, 1)'.
inline double limlk(const WStatIV& w, const SymMat& sigma)
{
    detail::check_sigma(sigma);
    const Eigen::MatrixXd s_half = sym_sqrt(sigma);
    const Eigen::MatrixXd s_mhalf = sym_sqrt(sigma, true);
    const SymMat m(s_mhalf * w.matrix() * s_mhalf, 1e-8);
    const SymEig eig = sym_eig(m);
    const double trace = std::max(std::fabs(eig.values.sum()), std::numeric_limits<double>::min());
    if (eig.values(0) - eig.values(1) <= 1e-12 * trace) throw TieError("limlk: top eigenvalue is not simple");
    const Eigen::Vector2d a = s_half * eig.vectors.col(0);
    if (std::fabs(a(1)) < 1e-12) throw EstimationError("limlk: beta is unbounded (second coordinate vanishes)");
    return a(0) / a(1);
}

inline constexpr double kIVBetaBound = 50.0;
inline constexpr double kIVLambdaMax = 1e3;

inline InfoMatrix info_iv(const ThetaIV& theta, const SymMat& sigma, double alpha)
{
    if (!(theta.lambda > 0.0)) throw DomainError("info_iv: lambda must be > 0");
    if (!(alpha >= 0.0)) throw DomainError("info_iv: alpha must be >= 0");
    detail::check_sigma(sigma);
    const Eigen::Matrix2d sinv = sigma.matrix().inverse();
    const detail::IVForms f = detail::iv_forms(Eigen::Matrix2d::Zero(), theta.beta, sinv);
    const double lam = theta.lambda;
    const double a1 = alpha + lam * f.c;
    const double a2 = alpha + 2.0 * lam * f.c;
    Eigen::Matrix2d m;
    m(0, 0) = lam * lam * (f.c * f.e * a2 + alpha * f.d * f.d) / (a1 * a2);
    m(0, 1) = lam * f.d * f.c / a2;
    m(1, 0) = m(0, 1);
    m(1, 1) = f.c * f.c / (2.0 * a2);
    return InfoMatrix(m, {"beta", "lambda"});
}

// sigma_u^2 / lambda^2 (lambda + alpha / a' S^-1 a), sigma_u^2 = b' Sigma b, b = (1, -beta)'.
inline double asyvar_limlk(const ThetaIV& theta, const SymMat& sigma, double alpha)
{
    if (!(theta.lambda > 0.0)) throw DomainError("asyvar_limlk: lambda must be > 0");
    if (!(alpha >= 0.0)) throw DomainError("asyvar_limlk: alpha must be >= 0");
    detail::check_sigma(sigma);
    const Eigen::Vector2d b(1.0, -theta.beta);
    const double sigma_u2 = b.dot(sigma.matrix() * b);
    const Eigen::Vector2d a(theta.beta, 1.0);
    const double c = a.dot(sigma.matrix().inverse() * a);
    return sigma_u2 / (theta.lambda * theta.lambda) * (theta.lambda + alpha / c);
}

inline Eigen::Vector3d md_moment_iv(const WStatIV& w, const ThetaIV& theta, const SymMat& sigma)
{
    const Eigen::Vector2d a(theta.beta, 1.0);
    const double ratio = static_cast<double>(w.k()) / static_cast<double>(w.n());
    const Eigen::Matrix2d mean = theta.lambda * a * a.transpose() + ratio * sigma.matrix();
    return vech(Eigen::MatrixXd(w.matrix() - mean));
}

inline EstimateReport<ThetaIV> mile_iv(const WStatIV& w, const SymMat& sigma)
{
    detail::check_sigma(sigma);
    const Eigen::Matrix2d sinv = sigma.matrix().inverse();
    const double n = static_cast<double>(w.n());
    const double k = static_cast<double>(w.k());

    double beta0 = 0.0;
    try {
        beta0 = std::clamp(limlk(w, sigma), -kIVBetaBound, kIVBetaBound);
    } catch (const NumericError&) {
    } catch (const DomainError&) {
    }
    const detail::IVForms f0 = detail::iv_forms(w.matrix(), beta0, sinv);
    const double lambda0 = std::clamp(f0.q / (f0.c * f0.c) - k / (n * f0.c), 0.0, kIVLambdaMax);

    Objective obj = [&](const Eigen::VectorXd& x) { return loglik_iv(w, ThetaIV{x(0), x(1)}, sigma); };
    Gradient grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return score_iv(w, ThetaIV{x(0), x(1)}, sigma, IVScoreRegime::exact());
    };
    OptimizerSpec spec;
    spec.lower = Eigen::Vector2d(-kIVBetaBound, 0.0);
    spec.upper = Eigen::Vector2d(kIVBetaBound, kIVLambdaMax);
    const Eigen::Vector2d start(beta0, lambda0);
    spec.starts = {start, Eigen::Vector2d(beta0 * 1.1, lambda0 * 1.1), Eigen::Vector2d(beta0 * 0.9, lambda0 * 0.9)};
    OptResult r;
    try {
        r = maximize(obj, grad, spec);
    } catch (const OptimizationError& e) {
        throw EstimationError(std::string("mile_iv: ") + e.what());
    }

    EstimateReport<ThetaIV> rep;
    rep.theta = ThetaIV{r.argmax(0), r.argmax(1)};
    rep.objective = r.value;
    rep.converged = r.converged;
    rep.at_boundary = r.at_boundary;
    rep.iterations = r.iterations;
    if (rep.theta.lambda > 0.0 && !r.at_boundary[1]) {
        const Eigen::MatrixXd inv = info_iv(rep.theta, sigma, k / n).inverse();
        if (inv(0, 0) > 0.0 && inv(1, 1) > 0.0) {
            rep.std_errors = std::vector<double>{std::sqrt(inv(0, 0) / n), std::sqrt(inv(1, 1) / n)};
        }
    }
    return rep;
}

// Draws an IV sample with lambda_N fixed: pi is rescaled so that
// pi' Z' Z pi / N equals lambda exactly.
template <class Rng>
IVData simulate_iv(Eigen::Index n, Eigen::Index k, double beta, double lambda, const SymMat& sigma, Rng& rng)
{
    detail::check_sigma(sigma);
    std::normal_distribution<double> n01;
    IVData d{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::MatrixXd(n, k), sigma};
    for (Eigen::Index i = 0; i < d.z.size(); ++i) d.z.data()[i] = n01(rng);
    Eigen::VectorXd pi(k);
    for (auto& v : pi) v = n01(rng);
    const Eigen::VectorXd zpi = d.z * pi;
    const double scale = std::sqrt(lambda * static_cast<double>(n)) / std::max(zpi.norm(), 1e-300);
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma.matrix());
    const Eigen::MatrixXd l = llt.matrixL();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector2d v = l * Eigen::Vector2d(n01(rng), n01(rng));
        const double mean2 = scale * zpi(i);
        d.y2(i) = mean2 + v(1);
        d.y1(i) = beta * mean2 + v(0);
    }
    return d;
}

// W drawn through the canonical form R1 = eta a' + V1 with eta'eta = N lambda;
// same distribution as wishart_stat_iv(simulate_iv(...)) at O(K) cost.
template <class Rng>
WStatIV simulate_w_iv(Eigen::Index n, Eigen::Index k, double beta, double lambda, const SymMat& sigma, Rng& rng)
{
    detail::check_sigma(sigma);
    std::normal_distribution<double> n01;
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma.matrix());
    const Eigen::MatrixXd l = llt.matrixL();
    const Eigen::Vector2d a(beta, 1.0);
    Eigen::MatrixXd r1(k, 2);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Vector2d v = l * Eigen::Vector2d(n01(rng), n01(rng));
        r1.row(i) = v.transpose();
    }
    r1.row(0) += std::sqrt(static_cast<double>(n) * lambda) * a.transpose();
    return WStatIV(SymMat(r1.transpose() * r1 / static_cast<double>(n)), k, n);
}

}  // namespace mile
