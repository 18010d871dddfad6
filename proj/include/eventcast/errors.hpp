#pragma once

#include <stdexcept>
#include <string>

namespace eventcast {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class InsufficientData : public Error { using Error::Error; };
class TrainingFailure : public Error { using Error::Error; };
class EvaluationError : public Error { using Error::Error; };
class DegenerateTarget : public Error { using Error::Error; };

/// Adaptive step size collapsed; `time()` is where the integrator gave up.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double t) : Error(what), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Spectral coefficients became non-finite.
class DivergenceError : public Error { using Error::Error; };

/// Estimated CFL number exceeded the stability guard.
class StepRejected : public Error {
public:
    StepRejected(const std::string& what, double cfl) : Error(what), cfl_(cfl) {}
    double cfl() const { return cfl_; }

private:
    double cfl_;
};

}  // namespace eventcast
