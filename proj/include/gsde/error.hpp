#pragma once

#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace gsde {

/// Base of every error raised by the library.
///
/// Ensemble drivers annotate errors with the index of the path that raised
/// them and rethrow the same object, so handlers keep the dynamic type.
class Error : public std::exception {
public:
    explicit Error(std::string message) : message_(std::move(message)) {}

    const char* what() const noexcept override { return message_.c_str(); }

    void annotate_path(std::size_t path_index)
    {
        path_index_ = path_index;
        message_ = "path " + std::to_string(path_index) + ": " + message_;
    }

    std::optional<std::size_t> path_index() const noexcept { return path_index_; }

private:
    std::string message_;
    std::optional<std::size_t> path_index_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidGrid : public Error {
public:
    using Error::Error;
};

class NumericalBlowup : public Error {
public:
    NumericalBlowup(std::string message, double t, Eigen::VectorXd x)
        : Error(std::move(message)), t_(t), x_(std::move(x))
    {
    }

    double time() const noexcept { return t_; }
    const Eigen::VectorXd& state() const noexcept { return x_; }

private:
    double t_;
    Eigen::VectorXd x_;
};

class DerivativeUnavailable : public Error {
public:
    using Error::Error;
};

class ContextMismatch : public Error {
public:
    using Error::Error;
};

class InverseMapDiverged : public Error {
public:
    InverseMapDiverged(std::string message, Eigen::VectorXd last_iterate)
        : Error(std::move(message)), last_(std::move(last_iterate))
    {
    }

    const Eigen::VectorXd& last_iterate() const noexcept { return last_; }

private:
    Eigen::VectorXd last_;
};

class UniquenessDomainViolated : public Error {
public:
    UniquenessDomainViolated(std::string message, double kappa)
        : Error(std::move(message)), kappa_(kappa)
    {
    }

    double contraction_bound() const noexcept { return kappa_; }

private:
    double kappa_;
};

class NonInvertibleJumpFlow : public Error {
public:
    NonInvertibleJumpFlow(std::string message, double t, double det)
        : Error(std::move(message)), t_(t), det_(det)
    {
    }

    double time() const noexcept { return t_; }
    double determinant() const noexcept { return det_; }

private:
    double t_;
    double det_;
};

class StabilityBoundViolated : public Error {
public:
    using Error::Error;
};

class SupportOverflow : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

/// Configuration problem; `field` is a JSON pointer, `line` is 1-based or 0
/// when unknown.
class ConfigError : public Error {
public:
    ConfigError(std::string message, std::string field, std::size_t line = 0)
        : Error(std::move(message)), field_(std::move(field)), line_(line)
    {
    }

    const std::string& field() const noexcept { return field_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string field_;
    std::size_t line_;
};

} // namespace gsde
