#pragma once

// Log-scale special functions used by the invariant likelihoods.
//
// ln I_nu(x) is evaluated in one of four regimes:
//   * ascending power series           x <= max(20, nu/2)
//   * uniform large-order expansion    nu >= kUniformMinOrder and x >= 1e-3 * nu
//   * Hankel large-argument expansion  x large compared with nu^2
//   * Temme: CF1 ratio, Steed CF2 for K_mu, upward log-recurrence and the
//     Wronskian I_nu K_{nu+1} + I_{nu+1} K_nu = 1/x
// Every regime works on logarithms, so nothing overflows for nu, x up to 1e7.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mile/errors.hpp"

namespace mile {

inline double log_gamma(double x)
{
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw DomainError("log_gamma: argument must be positive and finite, got " + std::to_string(x));
    }
#if defined(__GLIBC__)
    int sign = 0;
    return ::lgamma_r(x, &sign);  // reentrant: no write to the global signgam
#else
    return std::lgamma(x);
#endif
}

namespace detail {

inline constexpr double kUniformMinOrder = 50.0;
inline constexpr int kUniformTerms = 14;

// Dense polynomial in t, coefficient j multiplies t^j.
using Poly = std::vector<double>;

inline double poly_eval(const Poly& p, double t)
{
    double acc = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * t + *it;
    return acc;
}

inline Poly poly_derivative(const Poly& p)
{
    if (p.size() <= 1) return Poly{0.0};
    Poly d(p.size() - 1);
    for (std::size_t j = 1; j < p.size(); ++j) d[j - 1] = static_cast<double>(j) * p[j];
    return d;
}

// Debye polynomials u_k(t) of the uniform expansion and the differences
// v_k(t) - u_k(t) needed for the derivative expansion.
struct DebyeTables {
    std::array<Poly, kUniformTerms + 1> u;
    std::array<Poly, kUniformTerms + 1> v_minus_u;
};

inline DebyeTables build_debye_tables()
{
    DebyeTables tab;
    tab.u[0] = Poly{1.0};
    tab.v_minus_u[0] = Poly{0.0};
    for (int k = 0; k < kUniformTerms; ++k) {
        const Poly& uk = tab.u[k];
        const Poly duk = poly_derivative(uk);
        // u_{k+1} = 1/2 t^2 (1 - t^2) u_k' + 1/8 int_0^t (1 - 5 s^2) u_k(s) ds
        Poly next(uk.size() + 3, 0.0);
        for (std::size_t j = 0; j < duk.size(); ++j) {
            next[j + 2] += 0.5 * duk[j];
            next[j + 4] -= 0.5 * duk[j];
        }
        for (std::size_t j = 0; j < uk.size(); ++j) {
            next[j + 1] += 0.125 * uk[j] / static_cast<double>(j + 1);
            next[j + 3] -= 0.625 * uk[j] / static_cast<double>(j + 3);
        }
        tab.u[k + 1] = std::move(next);

        // v_{k+1} - u_{k+1} = t (t^2 - 1) [ u_k / 2 + t u_k' ]
        Poly inner(uk.size() + 1, 0.0);
        for (std::size_t j = 0; j < uk.size(); ++j) inner[j] += 0.5 * uk[j];
        for (std::size_t j = 0; j < duk.size(); ++j) inner[j + 1] += duk[j];
        Poly diff(inner.size() + 3, 0.0);
        for (std::size_t j = 0; j < inner.size(); ++j) {
            diff[j + 3] += inner[j];
            diff[j + 1] -= inner[j];
        }
        tab.v_minus_u[k + 1] = std::move(diff);
    }
    return tab;
}

inline const DebyeTables& debye_tables()
{
    static const DebyeTables tables = build_debye_tables();
    return tables;
}

// ln of sum_{k>=0} (x^2/4)^k / (k! (nu+1)_k), nu > -1, x > 0.
inline double log_series_sum(double nu, double x)
{
    const double q = 0.25 * x * x;
    constexpr double kRescale = 1e280;
    const double log_rescale = std::log(kRescale);
    double term = 1.0;
    double tail = 0.0;  // terms with k >= 1
    double head = 1.0;  // the k = 0 term in the current scale
    double log_scale = 0.0;
    for (int k = 1; k < 10'000'000; ++k) {
        const double ratio = q / (static_cast<double>(k) * (nu + k));
        term *= ratio;
        tail += term;
        if (tail > kRescale) {
            tail /= kRescale;
            term /= kRescale;
            head /= kRescale;
            log_scale += log_rescale;
        }
        const double next_ratio = q / (static_cast<double>(k + 1) * (nu + k + 1));
        if (next_ratio < 0.5 && term <= 1e-17 * (head + tail)) break;
    }
    if (log_scale == 0.0) return std::log1p(tail);
    return log_scale + std::log(head + tail);
}

inline double log_bessel_i_series(double nu, double x)
{
    return nu * std::log(0.5 * x) - log_gamma(nu + 1.0) + log_series_sum(nu, x);
}

struct UniformSums {
    double u;          // sum u_k(t) / nu^k
    double v_minus_u;  // sum (v_k(t) - u_k(t)) / nu^k
};

inline UniformSums uniform_sums(double nu, double t, bool with_derivative)
{
    const auto& tab = debye_tables();
    UniformSums out{1.0, 0.0};
    double inv_pow = 1.0;
    // For nu >= kUniformMinOrder the terms are far from their divergence point,
    // so the whole table is summed; individual u_k(t) can vanish near t = 1.
    for (int k = 1; k <= kUniformTerms; ++k) {
        inv_pow /= nu;
        out.u += poly_eval(tab.u[k], t) * inv_pow;
        if (with_derivative) out.v_minus_u += poly_eval(tab.v_minus_u[k], t) * inv_pow;
    }
    return out;
}

inline double log_bessel_i_uniform(double nu, double x)
{
    const double z = x / nu;
    const double w = std::hypot(1.0, z);
    const double t = 1.0 / w;
    const double eta = w + std::log(z / (1.0 + w));
    const UniformSums sums = uniform_sums(nu, t, false);
    return nu * eta - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(w) + std::log(sums.u);
}

// I_{nu+1}(x) / I_nu(x) from the derivative expansion:
//   I'_nu / I_nu = (w / z) V / U,  r = I'_nu / I_nu - 1/z.
inline double bessel_ratio_uniform(double nu, double x)
{
    const double z = x / nu;
    const double w = std::hypot(1.0, z);
    const double t = 1.0 / w;
    const UniformSums sums = uniform_sums(nu, t, true);
    // v_k - u_k carries a factor t (t^2 - 1) = -t z^2 / w^2, so (V - U) / z stays finite.
    return z / (1.0 + w) + w * sums.v_minus_u / (z * sums.u);
}

// Hankel expansion sum_k (-1)^k a_k(nu) / x^k. Returns false when the
// asymptotic series does not reach full precision before diverging.
inline bool hankel_sum(double nu, double x, double& sum)
{
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    sum = 1.0;
    double prev = 1.0;
    for (int k = 1; k < 500; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * x);
        const double mag = std::fabs(term);
        if (mag == 0.0) return true;
        if (mag > prev) return false;
        sum += term;
        if (mag < 1e-17 * std::fabs(sum)) return true;
        prev = mag;
    }
    return false;
}

inline bool hankel_applicable(double nu, double x)
{
    return x >= 50.0 && x >= 2.0 * nu * nu;
}

// I_{nu+1}(x) / I_nu(x) by the modified Lentz algorithm (CF1).
inline double bessel_ratio_cf1(double nu, double x)
{
    constexpr double tiny = 1e-300;
    double f = tiny;
    double c = f;
    double d = 0.0;
    const double max_iter = 20.0 * x + 10'000.0;
    for (int k = 1; k < max_iter; ++k) {
        const double b = 2.0 * (nu + k) / x;
        d = b + d;
        if (d == 0.0) d = tiny;
        c = b + 1.0 / c;
        if (c == 0.0) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) return f;
    }
    throw NumericError("bessel_i_ratio: continued fraction did not converge");
}

// Temme's method for x >= 2: Steed's CF2 gives K_mu and K_{mu+1} for
// |mu| <= 1/2, upward recurrence carries K to order nu in log form, and the
// Wronskian recovers I_nu from the CF1 ratio.
inline double log_bessel_i_temme(double nu, double x)
{
    const int nl = static_cast<int>(std::floor(nu + 0.5));
    const double mu = nu - nl;
    const double mu2 = mu * mu;

    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    bool done = false;
    for (int i = 2; i < 100'000; ++i) {
        a -= 2.0 * (i - 1);
        c = -a * c / i;
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::fabs(dels / s) < 1e-17) {
            done = true;
            break;
        }
    }
    if (!done) throw NumericError("log_bessel_i: CF2 did not converge");
    h *= a1;

    double log_k = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
    double k_ratio = (mu + x + 0.5 - h) / x;  // K_{mu+1} / K_mu
    for (int i = 1; i <= nl; ++i) {
        log_k += std::log(k_ratio);
        k_ratio = 2.0 * (mu + i) / x + 1.0 / k_ratio;
    }
    const double r = bessel_ratio_cf1(nu, x);
    return -std::log(x) - log_k - std::log(k_ratio + r);
}

inline void check_bessel_domain(const char* who, double nu, double x)
{
    if (!(nu >= -0.5) || !std::isfinite(nu)) {
        throw DomainError(std::string(who) + ": order must be >= -1/2, got " + std::to_string(nu));
    }
    if (!(x >= 0.0) || !std::isfinite(x)) {
        throw DomainError(std::string(who) + ": argument must be finite and >= 0, got " + std::to_string(x));
    }
}

enum class BesselRegime { series, uniform, hankel, temme };

inline BesselRegime bessel_regime(double nu, double x)
{
    if (nu >= kUniformMinOrder && x >= 1e-3 * nu) return BesselRegime::uniform;
    if (x <= std::max(20.0, 0.5 * nu)) return BesselRegime::series;
    if (hankel_applicable(nu, x)) return BesselRegime::hankel;
    return BesselRegime::temme;
}

}  // namespace detail

// ln I_nu(x) for nu >= -1/2, x >= 0 (x > 0 when nu = -1/2).
inline double log_bessel_i(double nu, double x)
{
    detail::check_bessel_domain("log_bessel_i", nu, x);
    if (x == 0.0) {
        if (nu == -0.5) throw DomainError("log_bessel_i: I_{-1/2}(0) is infinite");
        if (nu == 0.0) return 0.0;
        return nu > 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    }
    switch (detail::bessel_regime(nu, x)) {
    case detail::BesselRegime::uniform:
        return detail::log_bessel_i_uniform(nu, x);
    case detail::BesselRegime::series:
        return detail::log_bessel_i_series(nu, x);
    case detail::BesselRegime::hankel: {
        double sum = 0.0;
        if (detail::hankel_sum(nu, x, sum)) {
            return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
        }
        return detail::log_bessel_i_temme(nu, x);
    }
    case detail::BesselRegime::temme:
        break;
    }
    return detail::log_bessel_i_temme(nu, x);
}

// I_{nu+1}(x) / I_nu(x), in (0, 1) for 0 < x < inf.
inline double bessel_i_ratio(double nu, double x)
{
    detail::check_bessel_domain("bessel_i_ratio", nu, x);
    if (!(x > 0.0)) throw DomainError("bessel_i_ratio: argument must be > 0");
    switch (detail::bessel_regime(nu, x)) {
    case detail::BesselRegime::uniform:
        return detail::bessel_ratio_uniform(nu, x);
    case detail::BesselRegime::series: {
        const double log_ratio = detail::log_series_sum(nu + 1.0, x) - detail::log_series_sum(nu, x);
        return 0.5 * x / (nu + 1.0) * std::exp(log_ratio);
    }
    case detail::BesselRegime::hankel: {
        double s0 = 0.0;
        double s1 = 0.0;
        if (detail::hankel_sum(nu, x, s0) && detail::hankel_sum(nu + 1.0, x, s1)) return s1 / s0;
        return detail::bessel_ratio_cf1(nu, x);
    }
    case detail::BesselRegime::temme:
        break;
    }
    return detail::bessel_ratio_cf1(nu, x);
}

// I_{nu+1}(x) / (x I_nu(x)); continuous at x = 0 where it equals 1 / (2 (nu + 1)).
// Score formulas use this form so that lambda = 0 needs no special case.
inline double bessel_i_ratio_over_x(double nu, double x)
{
    detail::check_bessel_domain("bessel_i_ratio_over_x", nu, x);
    if (x == 0.0) return 0.5 / (nu + 1.0);
    if (x <= std::max(20.0, 0.5 * nu) && !(nu >= detail::kUniformMinOrder && x >= 1e-3 * nu)) {
        const double log_ratio = detail::log_series_sum(nu + 1.0, x) - detail::log_series_sum(nu, x);
        return 0.5 / (nu + 1.0) * std::exp(log_ratio);
    }
    return bessel_i_ratio(nu, x) / x;
}

// (1/s) ln( z^{-nu} I_nu(s z / 2) ), with the analytic limit at z = 0.
inline double scaled_bessel_term(double nu, double z, double s)
{
    if (!(s > 0.0)) throw DomainError("scaled_bessel_term: scale must be positive");
    if (!(z >= 0.0)) throw DomainError("scaled_bessel_term: z must be >= 0");
    if (z == 0.0) return (nu * std::log(0.25 * s) - log_gamma(nu + 1.0)) / s;
    return (-nu * std::log(z) + log_bessel_i(nu, 0.5 * s * z)) / s;
}

}  // namespace mile
