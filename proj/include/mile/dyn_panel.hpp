#pragma once

// Dynamic panel y_it = rho y_i,t-1 + eta_i + u_it with y_i0 = 0 and fixed
// effects. Stacking periods, Y = eta (B 1)' + U B' with B = D^-1, D = I - rho J.
// Orthogonal transformations across individuals leave W = Y'Y / N invariant.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mile/numkern.hpp"

namespace mile {

struct DynPanelData {
    Eigen::MatrixXd y;  // N x T, periods 1..T

    Eigen::Index n() const { return y.rows(); }
    Eigen::Index t() const { return y.cols(); }

    void validate() const
    {
        if (y.rows() < 1 || y.cols() < 1) throw DomainError("dyn panel: need N >= 1 and T >= 1");
        if (!y.allFinite()) throw DomainError("dyn panel: y has non-finite values");
    }
};

class WStatDyn {
public:
    WStatDyn(SymMat w, Eigen::Index n) : w_(std::move(w)), n_(n)
    {
        if (n_ < 1) throw DomainError("WStatDyn: need N >= 1");
        if (w_.dim() < 1) throw DomainError("WStatDyn: need T >= 1");
        if (!is_psd(w_)) throw DomainError("WStatDyn: W is not positive semidefinite");
    }

    const SymMat& w() const { return w_; }
    const Eigen::MatrixXd& matrix() const { return w_.matrix(); }
    Eigen::Index n() const { return n_; }
    Eigen::Index t() const { return w_.dim(); }

private:
    SymMat w_;
    Eigen::Index n_;
};

struct ThetaDyn {
    double rho = 0.0;
    double sigma2 = 1.0;
    double lambda = 0.0;
};

inline Eigen::MatrixXd b_matrix(double rho, Eigen::Index t)
{
    if (t < 1) throw DomainError("b_matrix: T must be >= 1");
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(t, t);
    for (Eigen::Index j = 0; j < t; ++j) {
        double v = 1.0;
        for (Eigen::Index i = j; i < t; ++i) {
            b(i, j) = v;
            v *= rho;
        }
    }
    return b;
}

inline Eigen::MatrixXd shift_matrix(Eigen::Index t)
{
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(t, t);
    for (Eigen::Index i = 1; i < t; ++i) j(i, i - 1) = 1.0;
    return j;
}

inline Eigen::MatrixXd d_matrix(double rho, Eigen::Index t)
{
    if (t < 1) throw DomainError("d_matrix: T must be >= 1");
    return Eigen::MatrixXd::Identity(t, t) - rho * shift_matrix(t);
}

struct DynEffects {
    enum class Kind { random_normal, nonconvergent, given };
    Kind kind = Kind::random_normal;
    double variance = 4.0;  // random_normal
    Eigen::VectorXd values;  // given

    static DynEffects random_normal(double variance) { return {Kind::random_normal, variance, {}}; }
    static DynEffects nonconvergent() { return {Kind::nonconvergent, 0.0, {}}; }
    static DynEffects given(Eigen::VectorXd eta) { return {Kind::given, 0.0, std::move(eta)}; }
};

enum class DynErrors { normal, centered_chi_square };

template <class Rng>
DynPanelData simulate_dyn(Eigen::Index n, Eigen::Index t, double rho, double sigma2, const DynEffects& effects,
                          DynErrors errors, Rng& rng)
{
    if (!(sigma2 > 0.0)) throw DomainError("simulate_dyn: sigma2 must be positive");
    if (n < 1 || t < 1) throw DomainError("simulate_dyn: need N >= 1 and T >= 1");
    std::normal_distribution<double> n01;
    const double sd = std::sqrt(sigma2);
    Eigen::VectorXd eta(n);
    switch (effects.kind) {
    case DynEffects::Kind::random_normal:
        if (!(effects.variance >= 0.0)) throw DomainError("simulate_dyn: effect variance must be >= 0");
        for (auto& e : eta) e = std::sqrt(effects.variance) * n01(rng);
        break;
    case DynEffects::Kind::nonconvergent:
        // eta'eta / (N sigma2) = N exactly.
        eta.setConstant(sd * std::sqrt(static_cast<double>(n)));
        break;
    case DynEffects::Kind::given:
        if (effects.values.size() != n) throw DomainError("simulate_dyn: effects vector has wrong length");
        eta = effects.values;
        break;
    }
    DynPanelData d{Eigen::MatrixXd(n, t)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double prev = 0.0;
        for (Eigen::Index s = 0; s < t; ++s) {
            double u = n01(rng);
            if (errors == DynErrors::centered_chi_square) u = (u * u - 1.0) / std::sqrt(2.0);
            prev = rho * prev + eta(i) + sd * u;
            d.y(i, s) = prev;
        }
    }
    return d;
}

inline WStatDyn wishart_stat_dyn(const DynPanelData& data)
{
    data.validate();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(data.t(), data.t());
    w.selfadjointView<Eigen::Lower>().rankUpdate(data.y.transpose(), 1.0 / static_cast<double>(data.n()));
    w.triangularView<Eigen::StrictlyUpper>() = w.transpose();
    return WStatDyn(SymMat(std::move(w)), data.n());
}

namespace detail {

// Quadratic forms of W needed to evaluate tr(D W D') and 1'D W D'1 as
// quadratics in rho.
struct DynForms {
    double tw, tjw, tjwj;  // tr W, tr JW, tr JWJ'
    double sw, sjw, sjwj;  // 1'W1, 1'JW1, 1'JWJ'1
    double n, t;

    double trace_dwd(double rho) const { return tw - 2.0 * rho * tjw + rho * rho * tjwj; }
    double sum_dwd(double rho) const { return sw - 2.0 * rho * sjw + rho * rho * sjwj; }
    double trace_jwd(double rho) const { return tjw - rho * tjwj; }
    double sum_jwd(double rho) const { return sjw - rho * sjwj; }
};

inline DynForms dyn_forms(const WStatDyn& w)
{
    const Eigen::MatrixXd& m = w.matrix();
    const Eigen::Index t = w.t();
    DynForms f{};
    f.n = static_cast<double>(w.n());
    f.t = static_cast<double>(t);
    f.tw = m.trace();
    f.sw = m.sum();
    // (JW)_{ij} = W_{i-1,j}; (JWJ')_{ij} = W_{i-1,j-1}.
    f.tjw = 0.0;
    for (Eigen::Index i = 1; i < t; ++i) f.tjw += m(i - 1, i);
    f.tjwj = m.topLeftCorner(t - 1, t - 1).trace();
    f.sjw = m.topRows(t - 1).sum();
    f.sjwj = m.topLeftCorner(t - 1, t - 1).sum();
    return f;
}

inline void check_theta_dyn(const ThetaDyn& theta, const char* who)
{
    if (!(theta.sigma2 > 0.0)) throw DomainError(std::string(who) + ": sigma2 must be positive");
    if (!(theta.lambda >= 0.0)) throw DomainError(std::string(who) + ": lambda must be >= 0");
    if (!std::isfinite(theta.rho)) throw DomainError(std::string(who) + ": rho must be finite");
}

inline double loglik_dyn(const DynForms& f, const ThetaDyn& theta)
{
    const double s = std::max(0.0, f.sum_dwd(theta.rho));
    const double z = 2.0 * std::sqrt(theta.lambda * s / theta.sigma2);
    return -0.5 * std::log(theta.sigma2) - f.trace_dwd(theta.rho) / (2.0 * theta.sigma2 * f.t) - 0.5 * theta.lambda +
           scaled_bessel_term(0.5 * (f.n - 2.0), z, f.n) / f.t;
}

}  // namespace detail

struct DynScoreRegime {
    enum class Kind { exact, large_n, large_t };
    Kind kind = Kind::exact;

    static DynScoreRegime exact() { return {Kind::exact}; }
    static DynScoreRegime large_n() { return {Kind::large_n}; }
    static DynScoreRegime large_t() { return {Kind::large_t}; }
};

namespace detail {

inline Eigen::Vector3d score_dyn(const DynForms& f, const ThetaDyn& theta, DynScoreRegime regime)
{
    const double rho = theta.rho;
    const double s2 = theta.sigma2;
    const double lam = theta.lambda;
    const double s = std::max(0.0, f.sum_dwd(rho));
    const double z = 2.0 * std::sqrt(lam * s / s2);
    // kn stands for N I_{nu+1}(x) / (x I_nu(x)), x = N z / 2, or its limit.
    double kn = 0.0;
    switch (regime.kind) {
    case DynScoreRegime::Kind::exact:
        kn = f.n * bessel_i_ratio_over_x(0.5 * (f.n - 2.0), 0.5 * f.n * z);
        break;
    case DynScoreRegime::Kind::large_n:
        kn = 2.0 / (1.0 + std::sqrt(1.0 + z * z));
        break;
    case DynScoreRegime::Kind::large_t:
        if (!(z > 0.0)) throw DomainError("score_dyn: the large_t form needs lambda > 0 and 1'DWD'1 > 0");
        kn = 2.0 / z;
        break;
    }
    Eigen::Vector3d g;
    g(0) = f.trace_jwd(rho) / (s2 * f.t) - kn * lam / (s2 * f.t) * f.sum_jwd(rho);
    g(1) = -0.5 / s2 + f.trace_dwd(rho) / (2.0 * s2 * s2 * f.t) - kn / (2.0 * f.t) * lam * s / (s2 * s2);
    g(2) = -0.5 + kn / (2.0 * f.t) * s / s2;
    return g;
}

}  // namespace detail

// theta-dependent part of the log-likelihood divided by NT. The |W| term is
// theta-free, so the same expression is the pseudo-likelihood when N < T.
inline double loglik_dyn(const WStatDyn& w, const ThetaDyn& theta)
{
    detail::check_theta_dyn(theta, "loglik_dyn");
    return detail::loglik_dyn(detail::dyn_forms(w), theta);
}

inline Eigen::Vector3d score_dyn(const WStatDyn& w, const ThetaDyn& theta, DynScoreRegime regime = DynScoreRegime::exact())
{
    detail::check_theta_dyn(theta, "score_dyn");
    return detail::score_dyn(detail::dyn_forms(w), theta, regime);
}

// F = J B(rho*): D(rho) B(rho*) = I + (rho* - rho) F.
struct FSums {
    double tr_ff;  // tr(FF')
    double s_f;    // 1'F1
    double s_ff;   // 1'F'F1
};

inline FSums f_sums(double rho, Eigen::Index t)
{
    if (t < 1) throw DomainError("f_sums: T must be >= 1");
    // Row i of F is row i-1 of B, so (F1)_i = 1 + rho + ... + rho^(i-1).
    FSums out{0.0, 0.0, 0.0};
    double row_sum = 0.0;
    double row_sq = 0.0;
    double power = 1.0;
    for (Eigen::Index i = 1; i < t; ++i) {
        row_sum += power;
        row_sq += power * power;
        power *= rho;
        out.tr_ff += row_sq;
        out.s_f += row_sum;
        out.s_ff += row_sum * row_sum;
    }
    return out;
}

namespace detail {

inline void check_info_args(double sigma2, double lambda, Eigen::Index t, const char* who)
{
    if (!(lambda > 0.0)) throw DomainError(std::string(who) + ": lambda must be > 0");
    if (!(sigma2 > 0.0)) throw DomainError(std::string(who) + ": sigma2 must be > 0");
    if (t < 1) throw DomainError(std::string(who) + ": T must be >= 1");
}

inline double info_t_11(const FSums& fs, double lambda, double td)
{
    const double h1 = fs.tr_ff / td + lambda * fs.s_ff / td;
    const double h2 = 2.0 * lambda * lambda / (1.0 + 2.0 * lambda * td) * fs.s_f * fs.s_f / td;
    const double h3 = -lambda / (1.0 + lambda * td) * (fs.s_ff / td + lambda * fs.s_f * fs.s_f / td);
    return h1 + h2 + h3;
}

}  // namespace detail

// Large-N limit of the negative Hessian of the per-NT log-likelihood at theta*,
// at finite T.
inline InfoMatrix info_T(double rho, double sigma2, double lambda, Eigen::Index t)
{
    detail::check_info_args(sigma2, lambda, t, "info_T");
    const FSums fs = f_sums(rho, t);
    const double td = static_cast<double>(t);
    const double g = 1.0 + 2.0 * lambda * td;
    Eigen::Matrix3d m;
    m(0, 0) = detail::info_t_11(fs, lambda, td);
    m(0, 1) = lambda * lambda * fs.s_f / (g * sigma2);
    m(0, 2) = (1.0 + lambda * td) / g * fs.s_f / td;
    m(1, 1) = 1.0 / (2.0 * sigma2 * sigma2) + lambda / (4.0 * sigma2 * sigma2) * 2.0 * lambda * td / g;
    m(1, 2) = (1.0 + lambda * td) / (2.0 * sigma2 * g);
    m(2, 2) = td / (2.0 * g);
    m(1, 0) = m(0, 1);
    m(2, 0) = m(0, 2);
    m(2, 1) = m(1, 2);
    return InfoMatrix(m, {"rho", "sigma2", "lambda"});
}

// The matrix with the off-diagonal and lower-right entries in their T -> infinity
// form, as they are commonly tabulated.
inline InfoMatrix info_T_printed(double rho, double sigma2, double lambda, Eigen::Index t)
{
    detail::check_info_args(sigma2, lambda, t, "info_T_printed");
    const FSums fs = f_sums(rho, t);
    const double td = static_cast<double>(t);
    const double g = 1.0 + 2.0 * lambda * td;
    Eigen::Matrix3d m;
    m(0, 0) = detail::info_t_11(fs, lambda, td);
    m(0, 1) = lambda / (2.0 * sigma2) * fs.s_f / td;
    m(0, 2) = (1.0 + lambda * td) / g * fs.s_f / td;
    m(1, 1) = 1.0 / (2.0 * sigma2 * sigma2) + lambda / (4.0 * sigma2) * 2.0 * lambda * td / g;
    m(1, 2) = 1.0 / (4.0 * sigma2);
    m(2, 2) = 1.0 / (4.0 * lambda);
    m(1, 0) = m(0, 1);
    m(2, 0) = m(0, 2);
    m(2, 1) = m(1, 2);
    return InfoMatrix(m, {"rho", "sigma2", "lambda"});
}

inline InfoMatrix info_inf(double rho, double sigma2, double lambda)
{
    if (!(std::fabs(rho) < 1.0)) throw DomainError("info_inf: |rho| must be < 1");
    detail::check_info_args(sigma2, lambda, 1, "info_inf");
    const double r1 = 1.0 - rho;
    Eigen::Matrix3d m;
    m(0, 0) = 1.0 / (1.0 - rho * rho) + lambda / (r1 * r1);
    m(0, 1) = lambda / (2.0 * sigma2 * r1);
    m(0, 2) = 1.0 / (2.0 * r1);
    m(1, 1) = (2.0 + lambda) / (4.0 * sigma2 * sigma2);
    m(1, 2) = 1.0 / (4.0 * sigma2);
    m(2, 2) = 1.0 / (4.0 * lambda);
    m(1, 0) = m(0, 1);
    m(2, 0) = m(0, 2);
    m(2, 1) = m(1, 2);
    return InfoMatrix(m, {"rho", "sigma2", "lambda"});
}

inline Eigen::MatrixXd mean_w_dyn(const ThetaDyn& theta, Eigen::Index t)
{
    const Eigen::MatrixXd b = b_matrix(theta.rho, t);
    const Eigen::MatrixXd inner =
        Eigen::MatrixXd::Identity(t, t) + theta.lambda * Eigen::MatrixXd::Ones(t, t);
    return theta.sigma2 * b * inner * b.transpose();
}

inline Eigen::VectorXd moment_dyn(const WStatDyn& w, const ThetaDyn& theta)
{
    return vech(Eigen::MatrixXd(w.matrix() - mean_w_dyn(theta, w.t())));
}

inline constexpr double kDynRhoBound = 2.0;
inline constexpr double kDynSigma2Min = 1e-8;
inline constexpr double kDynSigma2Max = 1e8;
inline constexpr double kDynLambdaMax = 1e6;

// Within-group OLS on W alone: Y'A Y sums are N tr(A W).
inline double within_ols_w(const WStatDyn& w)
{
    const Eigen::Index t = w.t();
    if (t < 2) throw DomainError("within_ols: T must be >= 2");
    const Eigen::MatrixXd j = shift_matrix(t);
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(t, t) - Eigen::MatrixXd::Constant(t, t, 1.0 / static_cast<double>(t));
    const double num = (j.transpose() * m * w.matrix()).trace();
    const double den = (j.transpose() * m * j * w.matrix()).trace();
    if (!(den > 1e-300)) throw EstimationError("within_ols: demeaned lagged outcome has zero variation");
    return num / den;
}

inline EstimateReport<ThetaDyn> mile_dyn(const WStatDyn& w)
{
    const Eigen::Index t = w.t();
    if (t < 2) throw DomainError("mile_dyn: T must be >= 2");
    if (numeric_rank(w.matrix()) <= 1) throw EstimationError("mile_dyn: W has rank <= 1");
    const detail::DynForms f = detail::dyn_forms(w);
    const double td = static_cast<double>(t);

    // Starts: within-OLS rho, its residual variance, lambda from the (1,1) moment.
    const double rho0 = std::clamp(within_ols_w(w), -kDynRhoBound, kDynRhoBound);
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(t, t) - Eigen::MatrixXd::Constant(t, t, 1.0 / td);
    const Eigen::MatrixXd dm = d_matrix(rho0, t);
    const double s20 = std::clamp((dm.transpose() * m * dm * w.matrix()).trace() / (td - 1.0), kDynSigma2Min, kDynSigma2Max);
    const double lambda0 = std::clamp(w.matrix()(0, 0) / s20 - 1.0, 0.0, kDynLambdaMax);

    // Search in (rho, ln sigma2, lambda).
    auto theta_of = [](const Eigen::VectorXd& x) { return ThetaDyn{x(0), std::exp(x(1)), x(2)}; };
    Objective obj = [&](const Eigen::VectorXd& x) { return detail::loglik_dyn(f, theta_of(x)); };
    Gradient grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const ThetaDyn th = theta_of(x);
        Eigen::Vector3d g = detail::score_dyn(f, th, DynScoreRegime::exact());
        g(1) *= th.sigma2;
        return g;
    };
    OptimizerSpec spec;
    spec.lower = Eigen::Vector3d(-kDynRhoBound, std::log(kDynSigma2Min), 0.0);
    spec.upper = Eigen::Vector3d(kDynRhoBound, std::log(kDynSigma2Max), kDynLambdaMax);
    const Eigen::Vector3d start(rho0, std::log(s20), lambda0);
    spec.starts = {start};
    for (double scale : {1.1, 0.9}) {
        spec.starts.emplace_back(Eigen::Vector3d(rho0 * scale, std::log(s20 * scale), lambda0 * scale));
    }
    OptResult r;
    try {
        r = maximize(obj, grad, spec);
    } catch (const OptimizationError& e) {
        throw EstimationError(std::string("mile_dyn: ") + e.what());
    }

    EstimateReport<ThetaDyn> rep;
    rep.theta = theta_of(r.argmax);
    rep.objective = r.value;
    rep.converged = r.converged;
    rep.at_boundary = r.at_boundary;
    rep.iterations = r.iterations;
    if (rep.theta.lambda > 0.0 && !r.at_boundary[0] && !r.at_boundary[2]) {
        const Eigen::MatrixXd info = info_T(rep.theta.rho, rep.theta.sigma2, rep.theta.lambda, t).matrix;
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
        if (lu.isInvertible()) {
            const Eigen::MatrixXd inv = lu.inverse();
            const double nt = static_cast<double>(w.n()) * td;
            if ((inv.diagonal().array() > 0.0).all()) {
                rep.std_errors = std::vector<double>{std::sqrt(inv(0, 0) / nt), std::sqrt(inv(1, 1) / nt),
                                                     std::sqrt(inv(2, 2) / nt)};
            }
        }
    }
    return rep;
}

inline EstimateReport<ThetaDyn> mile_dyn(const DynPanelData& data) { return mile_dyn(wishart_stat_dyn(data)); }

}  // namespace mile
