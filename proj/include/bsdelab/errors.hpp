#pragma once

#include <stdexcept>
#include <string>

namespace bsdelab {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
    Validation,  // precondition or hypothesis gate (exit 2)
    Numerical,   // Picard / NaN / conditioning (exit 3)
    Experiment,  // an experiment assertion did not hold (exit 4)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Short machine-readable tag, e.g. "HYPOTHESIS_FAIL" or "PICARD".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what, std::string code = "VALIDATION")
        : Error(ErrorKind::Validation, std::move(code), what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, std::string code = "NUMERICAL")
        : Error(ErrorKind::Numerical, std::move(code), what) {}
};

class ExperimentError : public Error {
public:
    explicit ExperimentError(const std::string& what, std::string code = "ASSERTION")
        : Error(ErrorKind::Experiment, std::move(code), what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

}  // namespace bsdelab
