#pragma once

#include <stdexcept>
#include <string>

namespace cplab {

// Argument outside the domain of an operation (invalid vertex, bad interval, h = 0 solve, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A configured size cap was exceeded (ball size, vertex count, active set, allocation).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure did not reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Monte Carlo output unusable: too many budget-flagged replicas, failed fit diagnostics.
class QualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cplab
