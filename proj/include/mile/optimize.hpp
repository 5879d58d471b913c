#pragma once

// Box-constrained maximization: projected BFGS when a gradient is supplied,
// bounded Nelder-Mead otherwise, with deterministic multistart.

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "mile/errors.hpp"

namespace mile {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct OptimizerSpec {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double grad_tol = 1e-7;
    double simplex_tol = 1e-10;  // Nelder-Mead: relative simplex size at convergence
    int max_iter = 500;
    std::vector<Eigen::VectorXd> starts;

    void validate() const
    {
        if (lower.size() != upper.size()) throw DomainError("OptimizerSpec: bound sizes differ");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower(i) < upper(i))) throw DomainError("OptimizerSpec: lower must be < upper");
        if (!(grad_tol > 0.0)) throw DomainError("OptimizerSpec: tolerance must be positive");
        if (max_iter < 1) throw DomainError("OptimizerSpec: max_iter must be >= 1");
        if (starts.empty()) throw DomainError("OptimizerSpec: at least one start is required");
        for (const auto& s : starts)
            if (s.size() != lower.size()) throw DomainError("OptimizerSpec: start has wrong dimension");
    }
};

struct OptResult {
    Eigen::VectorXd argmax;
    double value = -std::numeric_limits<double>::infinity();
    bool converged = false;
    std::vector<bool> at_boundary;
    int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const OptimizerSpec& spec)
{
    return x.cwiseMax(spec.lower).cwiseMin(spec.upper);
}

// Gradient of the minimization problem with components that point out of the
// box zeroed.
inline Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                          const OptimizerSpec& spec)
{
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) <= spec.lower(i) && g(i) > 0.0) pg(i) = 0.0;
        if (x(i) >= spec.upper(i) && g(i) < 0.0) pg(i) = 0.0;
    }
    return pg;
}

inline std::vector<bool> boundary_flags(const Eigen::VectorXd& x, const OptimizerSpec& spec)
{
    std::vector<bool> flags(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        flags[static_cast<std::size_t>(i)] = x(i) <= spec.lower(i) || x(i) >= spec.upper(i);
    }
    return flags;
}

inline OptResult bfgs_from(const Objective& f, const Gradient& grad, Eigen::VectorXd x, const OptimizerSpec& spec)
{
    const Eigen::Index n = x.size();
    x = project(x, spec);
    // Work with the negated objective.
    double fx = -f(x);
    OptResult res;
    if (!std::isfinite(fx)) return res;
    Eigen::VectorXd g = -grad(x);
    if (!g.allFinite()) return res;

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool h_is_identity = true;
    int iter = 0;
    for (; iter < spec.max_iter; ++iter) {
        const Eigen::VectorXd pg = projected_gradient(x, g, spec);
        if (pg.lpNorm<Eigen::Infinity>() <= spec.grad_tol) {
            res.converged = true;
            break;
        }
        std::vector<bool> free(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) free[static_cast<std::size_t>(i)] = pg(i) != 0.0 || g(i) == 0.0;

        Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!free[static_cast<std::size_t>(i)]) continue;
            double acc = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (free[static_cast<std::size_t>(j)]) acc -= h(i, j) * g(j);
            d(i) = acc;
        }
        if (!(g.dot(d) < 0.0)) {
            h.setIdentity();
            h_is_identity = true;
            d = -pg;
        }

        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new;
        double f_new = 0.0;
        for (int k = 0; k < 60; ++k) {
            x_new = project(x + step * d, spec);
            f_new = -f(x_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || (x_new - x).lpNorm<Eigen::Infinity>() == 0.0) {
            if (!h_is_identity) {
                h.setIdentity();
                h_is_identity = true;
                continue;
            }
            break;
        }
        Eigen::VectorXd g_new = -grad(x_new);
        if (!g_new.allFinite()) break;
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (h_is_identity) h *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
            h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
            h_is_identity = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    if (!res.converged && projected_gradient(x, g, spec).lpNorm<Eigen::Infinity>() <= spec.grad_tol) {
        res.converged = true;
    }
    res.argmax = x;
    res.value = -fx;
    res.iterations = iter;
    res.at_boundary = boundary_flags(x, spec);
    return res;
}

inline OptResult nelder_mead_from(const Objective& f, Eigen::VectorXd x0, const OptimizerSpec& spec)
{
    const Eigen::Index n = x0.size();
    x0 = project(x0, spec);
    auto eval = [&](const Eigen::VectorXd& x) {
        const double v = -f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    OptResult res;
    int total_iter = 0;
    // One restart from the best vertex guards against a collapsed simplex.
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
        std::vector<double> vals(static_cast<std::size_t>(n + 1));
        for (Eigen::Index i = 0; i < n; ++i) {
            double step = 0.1 * std::max(1.0, std::fabs(x0(i)));
            if (std::isfinite(spec.upper(i) - spec.lower(i))) step = std::min(step, 0.25 * (spec.upper(i) - spec.lower(i)));
            Eigen::VectorXd p = x0;
            p(i) += step;
            if (p(i) > spec.upper(i)) p(i) = x0(i) - step;
            pts[static_cast<std::size_t>(i + 1)] = project(p, spec);
        }
        for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);
        if (!std::isfinite(vals[0])) return res;

        std::vector<std::size_t> order(pts.size());
        bool done = false;
        for (int it = 0; it < spec.max_iter * 10 && !done; ++it, ++total_iter) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
            const std::size_t best = order.front();
            const std::size_t worst = order.back();
            const std::size_t second = order[order.size() - 2];

            double size = 0.0;
            for (const auto& p : pts) size = std::max(size, (p - pts[best]).lpNorm<Eigen::Infinity>());
            const double spread = vals[worst] - vals[best];
            if (size <= spec.simplex_tol * std::max(1.0, pts[best].lpNorm<Eigen::Infinity>()) ||
                (std::isfinite(spread) && spread <= 1e-13 * std::max(1.0, std::fabs(vals[best])) && size <= 1e-6)) {
                done = true;
                break;
            }

            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (i != worst) centroid += pts[i];
            centroid /= static_cast<double>(n);

            const Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]), spec);
            const double fr = eval(xr);
            if (fr < vals[best]) {
                const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]), spec);
                const double fe = eval(xe);
                if (fe < fr) {
                    pts[worst] = xe;
                    vals[worst] = fe;
                } else {
                    pts[worst] = xr;
                    vals[worst] = fr;
                }
                continue;
            }
            if (fr < vals[second]) {
                pts[worst] = xr;
                vals[worst] = fr;
                continue;
            }
            const bool outside = fr < vals[worst];
            const Eigen::VectorXd xc =
                outside ? project(centroid + 0.5 * (xr - centroid), spec) : project(centroid + 0.5 * (pts[worst] - centroid), spec);
            const double fc = eval(xc);
            if (fc < (outside ? fr : vals[worst])) {
                pts[worst] = xc;
                vals[worst] = fc;
                continue;
            }
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (i == best) continue;
                pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
                vals[i] = eval(pts[i]);
            }
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < vals.size(); ++i)
            if (vals[i] < vals[best]) best = i;
        x0 = pts[best];
        res.argmax = pts[best];
        res.value = -vals[best];
        res.converged = done;
    }
    res.iterations = total_iter;
    res.at_boundary = boundary_flags(res.argmax, spec);
    return res;
}

}  // namespace detail

// Maximizes f over the box in spec, trying every start and keeping the best.
inline OptResult maximize(const Objective& f, const std::optional<Gradient>& grad, const OptimizerSpec& spec)
{
    spec.validate();
    OptResult best;
    bool any = false;
    for (const auto& start : spec.starts) {
        OptResult r = grad ? detail::bfgs_from(f, *grad, start, spec) : detail::nelder_mead_from(f, start, spec);
        if (!std::isfinite(r.value)) continue;
        if (!any || r.value > best.value) {
            best = std::move(r);
            any = true;
        }
    }
    if (!any) throw OptimizationError("maximize: objective is not finite at any start");
    return best;
}

struct ScalarOptResult {
    double argmax = 0.0;
    double value = -std::numeric_limits<double>::infinity();
    bool at_boundary = false;
};

// Maximizes a univariate function on [lo, hi]: coarse grid, then Brent on the
// bracket around the best grid point.
inline ScalarOptResult maximize_scalar(const std::function<double(double)>& f, double lo, double hi, int grid = 64)
{
    if (!(lo < hi)) throw DomainError("maximize_scalar: lo must be < hi");
    if (grid < 2) grid = 2;
    auto neg = [&](double x) {
        const double v = f(x);
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    };
    int best_k = -1;
    double best_v = std::numeric_limits<double>::infinity();
    const double h = (hi - lo) / grid;
    for (int k = 0; k <= grid; ++k) {
        const double v = neg(lo + k * h);
        if (v < best_v) {
            best_v = v;
            best_k = k;
        }
    }
    if (best_k < 0) throw OptimizationError("maximize_scalar: objective is not finite on the grid");
    const double a = lo + std::max(0, best_k - 1) * h;
    const double b = lo + std::min(grid, best_k + 1) * h;
    const auto [x, v] = boost::math::tools::brent_find_minima(neg, a, b, std::numeric_limits<double>::digits / 2 + 4);
    ScalarOptResult out;
    if (v <= best_v) {
        out.argmax = x;
        out.value = -v;
    } else {
        out.argmax = lo + best_k * h;
        out.value = -best_v;
    }
    const double edge = 1e-9 * (hi - lo);
    out.at_boundary = out.argmax <= lo + edge || out.argmax >= hi - edge;
    return out;
}

}  // namespace mile
