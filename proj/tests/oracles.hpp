#pragma once

// Independent reference implementations used only by the tests.

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <functional>

namespace oracle {

using mp = boost::multiprecision::cpp_bin_float_50;

// sum_k (x^2/4)^k / (k! Gamma(nu + k + 1)) in 50-digit arithmetic.
inline mp bessel_series_sum(const mp& nu, const mp& x)
{
    const mp q = x * x / 4;
    mp term = 1 / boost::math::tgamma(nu + 1);
    mp sum = term;
    for (int k = 1; k < 1'000'000; ++k) {
        term *= q / (k * (nu + k));
        sum += term;
        if (term < sum * mp("1e-45") && q / ((k + 1) * (nu + k + 1)) < 1) break;
    }
    return sum;
}

inline double log_bessel_i(double nu, double x)
{
    const mp n = nu;
    const mp xx = x;
    return static_cast<double>(n * log(xx / 2) + log(bessel_series_sum(n, xx)));
}

inline double bessel_ratio(double nu, double x)
{
    const mp n = nu;
    const mp xx = x;
    return static_cast<double>(xx / 2 * bessel_series_sum(n + 1, xx) / bessel_series_sum(n, xx));
}

// (1/s) ln(z^{-nu} I_nu(s z / 2)) in extended precision.
inline double scaled_bessel_term(double nu, double z, double s)
{
    const mp n = nu;
    const mp x = mp(s) * z / 2;
    const mp v = -n * log(mp(z)) + n * log(x / 2) + log(bessel_series_sum(n, x));
    return static_cast<double>(v / s);
}

inline double log_mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov)
{
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd r = llt.matrixL().solve(x - mean);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * r.squaredNorm();
}

// Central-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5)
{
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd a = x;
        Eigen::VectorXd b = x;
        const double step = h * std::max(1.0, std::fabs(x(i)));
        a(i) += step;
        b(i) -= step;
        g(i) = (f(a) - f(b)) / (2.0 * step);
    }
    return g;
}

// Central-difference Hessian from an analytic gradient.
inline Eigen::MatrixXd fd_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                  const Eigen::VectorXd& x, double h = 1e-5)
{
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hes(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd a = x;
        Eigen::VectorXd b = x;
        const double step = h * std::max(1.0, std::fabs(x(j)));
        a(j) += step;
        b(j) -= step;
        hes.col(j) = (grad(a) - grad(b)) / (2.0 * step);
    }
    return 0.5 * (hes + hes.transpose());
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace oracle
