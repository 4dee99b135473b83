#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lmmsel {

// Base class for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user configuration (flags, tolerances, empty grids).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or unreadable input data (files, non-numeric cells).
class DataError : public Error {
public:
    using Error::Error;
};

// Inconsistent sizes between inputs.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Constant, all-zero or otherwise unusable design column.
class DegenerateColumnError : public Error {
public:
    DegenerateColumnError(const std::string& what, std::size_t column)
        : Error(what), column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

// Factorization failure or non-finite arithmetic.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, double condition_estimate = 0.0)
        : Error(what), condition_(condition_estimate) {}
    double condition_estimate() const noexcept { return condition_; }

private:
    double condition_;
};

// Iterative solver hit its pass/iteration cap. Carries the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
        : Error(what), last_(std::move(last_iterate)) {}
    const Eigen::VectorXd& last_iterate() const noexcept { return last_; }

private:
    Eigen::VectorXd last_;
};

// More fixed effects selected than the model can carry.
class SupportCapError : public Error {
public:
    SupportCapError(std::size_t support_size, std::size_t cap)
        : Error("too many fixed effects selected: " + std::to_string(support_size) +
                " > cap " + std::to_string(cap)),
          support_size_(support_size), cap_(cap) {}
    std::size_t support_size() const noexcept { return support_size_; }
    std::size_t cap() const noexcept { return cap_; }

private:
    std::size_t support_size_;
    std::size_t cap_;
};

class RankError : public Error {
public:
    using Error::Error;
};

class TuningError : public Error {
public:
    using Error::Error;
};

}  // namespace lmmsel
