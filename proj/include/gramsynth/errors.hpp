#pragma once

#include <stdexcept>
#include <string>

namespace gramsynth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// ode
class StepLimitExceeded : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class OutOfSpan : public Error {
 public:
  using Error::Error;
};

// systems
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

class UnknownSystem : public Error {
 public:
  using Error::Error;
};

// gramian
class InvalidQuadrature : public Error {
 public:
  using Error::Error;
};

/// The Gramian could not be inverted to the requested accuracy; the iterate
/// has left the region where the synthesis map is defined.
class SingularGramian : public Error {
 public:
  SingularGramian(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// picard / harness
class Diverged : public Error {
 public:
  using Error::Error;
};

class NotFullyActuated : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gramsynth
