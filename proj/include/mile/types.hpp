#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "mile/errors.hpp"

namespace mile {

template <class Theta>
struct EstimateReport {
    Theta theta{};
    double objective = 0.0;
    bool converged = false;
    std::vector<bool> at_boundary;
    int iterations = 0;
    std::optional<std::vector<double>> std_errors;
};

// Information matrix with one label per parameter.
struct InfoMatrix {
    Eigen::MatrixXd matrix;
    std::vector<std::string> labels;

    InfoMatrix() = default;
    InfoMatrix(Eigen::MatrixXd m, std::vector<std::string> l) : matrix(std::move(m)), labels(std::move(l))
    {
        if (matrix.rows() != matrix.cols() || static_cast<std::size_t>(matrix.rows()) != labels.size()) {
            throw DomainError("InfoMatrix: labels do not match dimension");
        }
    }

    double operator()(Eigen::Index i, Eigen::Index j) const { return matrix(i, j); }
    Eigen::MatrixXd inverse() const { return matrix.inverse(); }
};

}  // namespace mile
