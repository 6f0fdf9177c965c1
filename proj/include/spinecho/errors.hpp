#pragma once

#include <stdexcept>
#include <string>

namespace spinecho {

// Raised when a parameter set violates an invariant. `field` names the
// offending entry so CLI messages can point at the config line.
class validation_error : public std::runtime_error {
 public:
  validation_error(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Raised on malformed config/CSV input.
class parse_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an integration or quadrature produces non-finite values.
class numeric_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spinecho
