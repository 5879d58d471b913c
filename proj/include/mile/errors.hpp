#pragma once

#include <stdexcept>
#include <string>

namespace mile {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A numerical routine could not produce a finite answer.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class OptimizationError : public NumericError {
public:
    explicit OptimizationError(const std::string& what) : NumericError(what) {}
};

// The estimator is undefined for the supplied data (rank deficiency, degenerate design).
class EstimationError : public NumericError {
public:
    explicit EstimationError(const std::string& what) : NumericError(what) {}
};

class TieError : public DomainError {
public:
    explicit TieError(const std::string& what) : DomainError(what) {}
};

// Malformed user input: CSV/JSON that does not parse or does not match the model.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mile
