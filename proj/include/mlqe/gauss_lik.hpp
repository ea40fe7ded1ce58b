#ifndef MLQE_GAUSS_LIK_HPP
#define MLQE_GAUSS_LIK_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "mlqe/errors.hpp"
#include "mlqe/matern.hpp"

namespace mlqe {

/// m replicates of a zero-mean field observed at the same n locations,
/// stored column-wise (column i is replicate Z_i).
class ReplicateSet {
 public:
  ReplicateSet() = default;

  explicit ReplicateSet(Eigen::MatrixXd data) : data_(std::move(data)) {
    if (data_.cols() < 1) throw DataError("ReplicateSet: at least one replicate is required");
    if (data_.rows() < 1) throw DataError("ReplicateSet: at least one location is required");
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      for (Eigen::Index i = 0; i < data_.rows(); ++i) {
        if (!std::isfinite(data_(i, j))) {
          throw DataError("ReplicateSet: non-finite value at location " + std::to_string(i) +
                          ", replicate " + std::to_string(j));
        }
      }
    }
  }

  std::size_t n() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  const Eigen::MatrixXd& data() const noexcept { return data_; }
  Eigen::VectorXd replicate(std::size_t i) const {
    return data_.col(static_cast<Eigen::Index>(i));
  }

  /// Variance pooled over every value (zero mean assumed).
  double pooled_variance() const { return data_.squaredNorm() / static_cast<double>(data_.size()); }

 private:
  Eigen::MatrixXd data_;
};

/// Lower Cholesky factor of a covariance matrix with its log-determinant.
class CholFactor {
 public:
  CholFactor() = default;

  /// Factorizes cov. If the plain factorization fails, retries once with
  /// jitter_scale * 1e-10 added to the diagonal; jittered() reports the rescue.
  /// Returns false if both attempts fail.
  bool compute(const Eigen::MatrixXd& cov, double jitter_scale) {
    jittered_ = false;
    llt_.compute(cov);
    if (llt_.info() != Eigen::Success || !diag_ok()) {
      Eigen::MatrixXd rescued = cov;
      rescued.diagonal().array() += 1e-10 * jitter_scale;
      llt_.compute(rescued);
      jittered_ = true;
      if (llt_.info() != Eigen::Success || !diag_ok()) return false;
    }
    log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    return true;
  }

  Eigen::Index n() const noexcept { return llt_.matrixLLT().rows(); }
  double log_det() const noexcept { return log_det_; }
  bool jittered() const noexcept { return jittered_; }
  auto lower() const { return llt_.matrixL(); }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }

  /// Solves L y = b (forward substitution only).
  template <typename Derived>
  Eigen::MatrixXd solve_lower(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.matrixL().solve(b);
  }

  /// Solves Sigma x = b.
  template <typename Derived>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.solve(b);
  }

 private:
  bool diag_ok() const {
    const auto diag = llt_.matrixLLT().diagonal();
    return (diag.array() > 0.0).all() && diag.allFinite();
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
  bool jittered_ = false;
};

/// Factorizes Sigma(theta); throws NonSpdError carrying theta on failure.
inline CholFactor factorize(const Eigen::MatrixXd& cov, const MaternParams& theta) {
  CholFactor chol;
  if (!chol.compute(cov, theta.sigma2)) {
    throw NonSpdError("covariance matrix is not positive definite", theta.sigma2, theta.beta,
                      theta.nu);
  }
  return chol;
}

inline CholFactor factorize(const LocationSet& locs, const MaternParams& theta) {
  return factorize(build_cov(locs, theta), theta);
}

/// l(z) = -(n/2) log(2 pi) - (1/2) |y|^2 - (1/2) log|Sigma| with L y = z.
inline double log_likelihood(const Eigen::VectorXd& z, const CholFactor& chol) {
  if (z.size() != chol.n()) {
    throw DataError("log_likelihood: data has " + std::to_string(z.size()) +
                    " values but covariance is " + std::to_string(chol.n()) + "x" +
                    std::to_string(chol.n()));
  }
  const Eigen::VectorXd y = chol.solve_lower(z);
  const double n = static_cast<double>(z.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * y.squaredNorm() -
         0.5 * chol.log_det();
}

/// Log-likelihood of every replicate under one shared factorization.
inline Eigen::VectorXd replicate_log_likelihoods(const ReplicateSet& reps, const CholFactor& chol) {
  if (static_cast<Eigen::Index>(reps.n()) != chol.n()) {
    throw DataError("replicate_log_likelihoods: data has " + std::to_string(reps.n()) +
                    " locations but covariance is " + std::to_string(chol.n()) + "x" +
                    std::to_string(chol.n()));
  }
  const Eigen::MatrixXd y = chol.solve_lower(reps.data());
  const double n = static_cast<double>(reps.n());
  const double base = -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * chol.log_det();
  return (base - 0.5 * y.colwise().squaredNorm().array()).matrix().transpose();
}

struct LqValue {
  double value = 0.0;
  double q = 1.0;
  bool scaled = false;
};

inline void check_q(double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError("q must lie in (0, 1], got " + std::to_string(q));
  }
}

/// L_q transform of a log-likelihood value.
///   q = 1:             l
///   q < 1, unscaled:   (exp(l (1-q)) - 1) / (1-q)
///   q < 1, scaled:     exp((l + n)(1-q))   (same argmax, no underflow for large n)
inline LqValue lq_of_loglik(double l, double q, std::size_t n, bool scale) {
  check_q(q);
  if (q == 1.0) return {l, q, false};
  const double c = 1.0 - q;
  if (scale) return {std::exp((l + static_cast<double>(n)) * c), q, true};
  return {std::expm1(l * c) / c, q, false};
}

/// sum_i L_q(Z_i; theta) from one factorization shared by all replicates.
/// Summation is sequential in replicate order.
inline double total_lq(const ReplicateSet& reps, const CholFactor& chol, double q, bool scale) {
  check_q(q);
  const Eigen::VectorXd ll = replicate_log_likelihoods(reps, chol);
  double total = 0.0;
  for (Eigen::Index i = 0; i < ll.size(); ++i) {
    total += lq_of_loglik(ll[i], q, reps.n(), scale).value;
  }
  return total;
}

inline double total_lq(const ReplicateSet& reps, const LocationSet& locs,
                       const MaternParams& theta, double q, bool scale) {
  if (reps.n() != locs.size()) {
    throw DataError("total_lq: " + std::to_string(reps.n()) + " data rows for " +
                    std::to_string(locs.size()) + " locations");
  }
  return total_lq(reps, factorize(locs, theta), q, scale);
}

}  // namespace mlqe

#endif  // MLQE_GAUSS_LIK_HPP
