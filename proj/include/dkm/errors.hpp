#ifndef DKM_ERRORS_HPP_
#define DKM_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dkm {

// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An elementwise function was applied outside its domain. `index` is the
// flat (row-major) position of the first offending entry.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " at index " + std::to_string(index)),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Cholesky factorization broke down. `leading_minor` is 1-based: the order of
// the first leading principal minor that is not positive.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(std::size_t leading_minor)
      : std::runtime_error("matrix is not positive definite (leading minor " +
                           std::to_string(leading_minor) + ")"),
        leading_minor_(leading_minor) {}
  std::size_t leading_minor() const { return leading_minor_; }

 private:
  std::size_t leading_minor_;
};

// Non-finite values or other numerical breakdown.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed corpus or model file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dkm

#endif  // DKM_ERRORS_HPP_
