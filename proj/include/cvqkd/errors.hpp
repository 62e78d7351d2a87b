#pragma once

#include <stdexcept>
#include <string>

namespace cvqkd {

// Thrown when a covariance matrix fails the uncertainty-principle test,
// i.e. some symplectic eigenvalue (or a standard eigenvalue) sits below the
// accepted floor. Carries the offending value for diagnostics.
class unphysical_state : public std::domain_error {
 public:
  unphysical_state(const std::string& what, double offending_value)
      : std::domain_error(what), offending_value_(offending_value) {}

  double offending_value() const noexcept { return offending_value_; }

 private:
  double offending_value_;
};

}  // namespace cvqkd
