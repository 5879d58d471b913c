#pragma once

// Fast invariant suite behind `mile check`: a few seconds, one line per item.

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mile/dyn_panel.hpp"
#include "mile/iv_model.hpp"
#include "mile/numkern.hpp"

namespace mile {

struct CheckItem {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
};

namespace detail {

inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x)
{
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::fabs(x(i)));
        Eigen::VectorXd a = x;
        Eigen::VectorXd b = x;
        a(i) += h;
        b(i) -= h;
        g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

inline SymMat check_sigma_draw(std::mt19937_64& rng)
{
    std::normal_distribution<double> n01;
    Eigen::Matrix2d a;
    for (int i = 0; i < 4; ++i) a.data()[i] = n01(rng);
    return SymMat(a * a.transpose() + 0.3 * Eigen::Matrix2d::Identity());
}

inline CheckItem item(std::string name, double measured, double tol)
{
    return {std::move(name), measured <= tol, measured, tol};
}

}  // namespace detail

inline std::vector<CheckItem> run_selfcheck(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    std::vector<CheckItem> out;

    {
        // Boost's long-double I_nu as the reference; it overflows past x ~ 1e4.
        double worst = 0.0;
        for (double nu : {0.0, 0.5, 1.0, 7.5, 40.0, 100.0})
            for (double x : {0.01, 1.0, 10.0, 30.0, 100.0, 600.0}) {
                const long double ref = std::log(boost::math::cyl_bessel_i(static_cast<long double>(nu), static_cast<long double>(x)));
                worst = std::max(worst, static_cast<double>(std::fabs((log_bessel_i(nu, x) - ref) / ref)));
            }
        out.push_back(detail::item("log_bessel_i vs long-double reference (rel)", worst, 1e-12));

        double ratio = 0.0;
        for (double nu : {0.0, 3.0, 50.0})
            for (double x : {0.5, 5.0, 80.0}) {
                const long double a = boost::math::cyl_bessel_i(static_cast<long double>(nu + 1), static_cast<long double>(x));
                const long double b = boost::math::cyl_bessel_i(static_cast<long double>(nu), static_cast<long double>(x));
                const double ref = static_cast<double>(a / b);
                ratio = std::max(ratio, std::fabs(bessel_i_ratio(nu, x) - ref) / ref);
            }
        out.push_back(detail::item("bessel_i_ratio vs long-double reference (rel)", ratio, 1e-12));
    }

    {
        double worst = 0.0;
        for (int rep = 0; rep < 5; ++rep) {
            const SymMat s = detail::check_sigma_draw(rng);
            const WStatIV w = simulate_w_iv(200, 5 + 10 * rep, n01(rng), 0.5 + rep * 0.5, s, rng);
            const Eigen::Vector2d x(n01(rng), 0.3 + 0.4 * rep);
            const auto f = [&](const Eigen::VectorXd& v) { return loglik_iv(w, ThetaIV{v(0), v(1)}, s); };
            const Eigen::VectorXd fd = detail::central_gradient(f, x);
            worst = std::max(worst, (score_iv(w, ThetaIV{x(0), x(1)}, s) - fd).norm() / std::max(1.0, fd.norm()));
        }
        out.push_back(detail::item("iv score vs central differences (rel)", worst, 1e-6));
    }

    {
        double worst = 0.0;
        for (int rep = 0; rep < 5; ++rep) {
            const ThetaDyn th{-0.5 + 0.35 * rep, 0.5 + 0.3 * rep, 0.2 + rep};
            const Eigen::Index n = 20 + 40 * rep;
            const Eigen::Index t = 2 + rep;
            const DynEffects eff = DynEffects::given(Eigen::VectorXd::Constant(n, std::sqrt(th.lambda * th.sigma2)));
            const WStatDyn w = wishart_stat_dyn(simulate_dyn(n, t, th.rho, th.sigma2, eff, DynErrors::normal, rng));
            const Eigen::Vector3d x(th.rho + 0.1, th.sigma2 * 1.2, th.lambda * 0.8);
            const auto f = [&](const Eigen::VectorXd& v) { return loglik_dyn(w, ThetaDyn{v(0), v(1), v(2)}); };
            const Eigen::VectorXd fd = detail::central_gradient(f, x);
            worst = std::max(worst, (score_dyn(w, ThetaDyn{x(0), x(1), x(2)}) - fd).norm() / std::max(1.0, fd.norm()));
        }
        out.push_back(detail::item("dyn score vs central differences (rel)", worst, 1e-6));
    }

    {
        double worst = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            const SymMat s = detail::check_sigma_draw(rng);
            const WStatIV w = simulate_w_iv(500, 5, 2.0 * n01(rng), 1.0, s, rng);
            worst = std::max(worst, std::fabs(mile_iv(w, s).theta.beta - limlk(w, s)));
        }
        out.push_back(detail::item("iv MILE equals LIMLK (abs)", worst, 1e-6));
    }

    {
        double worst = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            const SymMat s = detail::check_sigma_draw(rng);
            const ThetaIV t{2.0 * n01(rng), 0.1 + std::fabs(2.0 * n01(rng))};
            const double alpha = 0.2 * rep;
            const double v = asyvar_limlk(t, s, alpha);
            worst = std::max(worst, std::fabs(info_iv(t, s, alpha).inverse()(0, 0) - v) / v);
        }
        out.push_back(detail::item("iv inverse information equals LIMLK variance (rel)", worst, 1e-10));

        double corner = 0.0;
        for (double rho : {-0.5, 0.0, 0.5, 0.9}) corner = std::max(corner, std::fabs(info_inf(rho, 1.3, 0.8).inverse()(0, 0) - (1.0 - rho * rho)));
        out.push_back(detail::item("dyn large-T inverse information corner equals 1 - rho^2 (abs)", corner, 1e-10));

        const Eigen::MatrixXd big = info_T(0.5, 1.3, 0.8, 100000).matrix;
        const double gap = (big - info_inf(0.5, 1.3, 0.8).matrix).cwiseAbs().maxCoeff() / big.cwiseAbs().maxCoeff();
        out.push_back(detail::item("dyn finite-T information approaches its limit, T = 1e5 (rel)", gap, 1e-3));
    }

    {
        const DynPanelData d = simulate_dyn(30, 5, 0.5, 1.0, DynEffects::random_normal(4.0), DynErrors::normal, rng);
        Eigen::MatrixXd g(30, 30);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
        const Eigen::MatrixXd w1 = wishart_stat_dyn(d).matrix();
        const double gap = (wishart_stat_dyn(DynPanelData{q * d.y}).matrix() - w1).cwiseAbs().maxCoeff() / w1.cwiseAbs().maxCoeff();
        out.push_back(detail::item("dyn W invariant under y -> Q y (rel)", gap, 1e-12));

        const IVData iv = simulate_iv(60, 5, -0.3, 1.0, detail::check_sigma_draw(rng), rng);
        Eigen::MatrixXd h(5, 5);
        for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = n01(rng);
        IVData rotated = iv;
        rotated.z = iv.z * h;
        const double ivgap = (wishart_stat_iv(iv).matrix() - wishart_stat_iv(rotated).matrix()).cwiseAbs().maxCoeff();
        out.push_back(detail::item("iv W invariant under Z -> Z G (abs)", ivgap, 1e-12));
    }
    return out;
}

inline bool print_selfcheck(const std::vector<CheckItem>& items, std::ostream& os)
{
    bool all = true;
    for (const auto& it : items) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3g (tol %.3g)", it.measured, it.tolerance);
        os << (it.pass ? "PASS " : "FAIL ") << it.name << ": " << buf << '\n';
        all = all && it.pass;
    }
    return all;
}

}  // namespace mile
