#ifndef MLQE_ERRORS_HPP
#define MLQE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mlqe {

/// Argument outside the mathematical domain of a function (x <= 0, q > 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input data: bad dimensions, non-finite values, parse failures.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A covariance matrix that is not numerically positive definite, even after
/// the diagonal jitter rescue.
class NonSpdError : public std::runtime_error {
 public:
  NonSpdError(const std::string& what, double sigma2, double beta, double nu)
      : std::runtime_error(what), sigma2_(sigma2), beta_(beta), nu_(nu) {}

  double sigma2() const noexcept { return sigma2_; }
  double beta() const noexcept { return beta_; }
  double nu() const noexcept { return nu_; }

 private:
  double sigma2_;
  double beta_;
  double nu_;
};

/// Numerical breakdown that is not a covariance problem (singular J, failed fit).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlqe

#endif  // MLQE_ERRORS_HPP
