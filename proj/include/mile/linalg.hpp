#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mile/errors.hpp"

namespace mile {

// Symmetric real matrix. The constructor checks symmetry and then averages the
// two triangles, so downstream code can rely on exact symmetry.
class SymMat {
public:
    SymMat() = default;

    explicit SymMat(Eigen::MatrixXd m, double tol = 1e-10)
    {
        if (m.rows() != m.cols() || m.rows() < 1) {
            throw DomainError("SymMat: matrix must be square with dimension >= 1");
        }
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        if (!m.allFinite()) throw DomainError("SymMat: non-finite entry");
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
            throw DomainError("SymMat: matrix is not symmetric");
        }
        m_ = 0.5 * (m + m.transpose());
    }

    static SymMat identity(Eigen::Index dim) { return SymMat(Eigen::MatrixXd::Identity(dim, dim)); }

    Eigen::Index dim() const { return m_.rows(); }
    const Eigen::MatrixXd& matrix() const { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

private:
    Eigen::MatrixXd m_;
};

inline Eigen::VectorXd vech(const Eigen::MatrixXd& s)
{
    const Eigen::Index d = s.rows();
    Eigen::VectorXd out(d * (d + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = j; i < d; ++i) out(k++) = s(i, j);
    return out;
}

inline Eigen::VectorXd vech(const SymMat& s) { return vech(s.matrix()); }

inline SymMat unvech(const Eigen::VectorXd& v)
{
    const double root = (std::sqrt(8.0 * static_cast<double>(v.size()) + 1.0) - 1.0) / 2.0;
    const auto d = static_cast<Eigen::Index>(std::llround(root));
    if (d < 1 || d * (d + 1) / 2 != v.size()) throw DomainError("unvech: length is not triangular");
    Eigen::MatrixXd m(d, d);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = j; i < d; ++i) {
            m(i, j) = v(k);
            m(j, i) = v(k);
            ++k;
        }
    return SymMat(std::move(m));
}

// D with D * vech(S) = vec(S), vec stacking columns.
inline Eigen::MatrixXd duplication(Eigen::Index d)
{
    if (d < 1) throw DomainError("duplication: dimension must be >= 1");
    Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(d * d, d * (d + 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = j; i < d; ++i) {
            dup(j * d + i, k) = 1.0;
            dup(i * d + j, k) = 1.0;
            ++k;
        }
    return dup;
}

struct SymEig {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

inline SymEig sym_eig(const SymMat& s)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.matrix());
    if (es.info() != Eigen::Success) throw NumericError("sym_eig: eigen decomposition failed");
    const Eigen::Index d = s.dim();
    SymEig out{Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
    // Eigen sorts ascending; reverse.
    for (Eigen::Index i = 0; i < d; ++i) {
        out.values(i) = es.eigenvalues()(d - 1 - i);
        out.vectors.col(i) = es.eigenvectors().col(d - 1 - i);
    }
    return out;
}

inline bool is_psd(const SymMat& s, double rel_tol = 1e-10)
{
    const SymEig e = sym_eig(s);
    const double scale = std::max(1.0, std::fabs(e.values(0)));
    return e.values(e.values.size() - 1) >= -rel_tol * scale;
}

// Numerical rank from singular values, relative threshold.
inline Eigen::Index numeric_rank(const Eigen::MatrixXd& a, double rel_tol = 1e-10)
{
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++r;
    return r;
}

// Symmetric square root and inverse square root of a positive definite matrix.
inline Eigen::MatrixXd sym_sqrt(const SymMat& s, bool inverse = false)
{
    const SymEig e = sym_eig(s);
    if (e.values.minCoeff() <= 0.0) throw DomainError("sym_sqrt: matrix is not positive definite");
    Eigen::VectorXd root = e.values.array().sqrt();
    if (inverse) root = root.cwiseInverse();
    return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

}  // namespace mile
