#ifndef MLQE_ASYMPTOTICS_HPP
#define MLQE_ASYMPTOTICS_HPP

// Estimating-function machinery for the MLqE.
//
// For one replicate z with density f(z; theta):
//   U*(z) = f^{1-q} g,                      g = d log f / d theta
//   V*(z) = (1-q) f^{1-q} g g^T + f^{1-q} H, H = d^2 log f / d theta^2
// so U* is the gradient and V* the Hessian of the exact L_q contribution
// (f^{1-q} - 1)/(1-q). With a = Sigma^{-1} z, W_j = Sigma^{-1} dSigma/dtheta_j:
//   g_j  = a^T Sigma_j a / 2 - tr(W_j) / 2
//   H_jk = a^T Sigma_jk a / 2 - a^T Sigma_j Sigma^{-1} Sigma_k a
//          - tr(Sigma^{-1} Sigma_jk) / 2 + tr(W_j W_k) / 2
// All Sigma^{-1} products go through Cholesky solves.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"

namespace mlqe {

/// theta-dependent pieces shared by every replicate.
class ScoreContext {
 public:
  ScoreContext(const LocationSet& locs, const MaternParams& theta,
               specfun::NuStencil stencil = {})
      : theta_(theta) {
    derivs_ = build_cov_derivs(locs, theta, true, stencil);
    chol_ = factorize(derivs_.cov, theta);
    for (std::size_t j = 0; j < 3; ++j) {
      w_[j] = chol_.solve(derivs_.grad[j]);
      tr_w_[j] = w_[j].trace();
    }
    for (int j = 0; j < 3; ++j) {
      for (int k = j; k < 3; ++k) {
        const auto idx = hess_index(j, k);
        const double tr_inv_hess = chol_.solve(derivs_.hess[idx]).trace();
        // tr(W_j W_k) = sum_ab (W_j)_ab (W_k)_ba
        const double tr_ww =
            (w_[static_cast<std::size_t>(j)].array() *
             w_[static_cast<std::size_t>(k)].transpose().array())
                .sum();
        trace_part_(j, k) = -0.5 * tr_inv_hess + 0.5 * tr_ww;
        trace_part_(k, j) = trace_part_(j, k);
      }
    }
  }

  const MaternParams& theta() const noexcept { return theta_; }
  const CholFactor& chol() const noexcept { return chol_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(chol_.n()); }

  /// Log-density and its theta-gradient at z.
  void log_density_grad(const Eigen::VectorXd& z, double& logf, Eigen::Vector3d& g) const {
    check_dim(z);
    const Eigen::VectorXd y = chol_.solve_lower(z);
    logf = -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) -
           0.5 * y.squaredNorm() - 0.5 * chol_.log_det();
    const Eigen::VectorXd a = chol_.solve(z);
    for (std::size_t j = 0; j < 3; ++j) {
      g[static_cast<Eigen::Index>(j)] = 0.5 * a.dot(derivs_.grad[j] * a) - 0.5 * tr_w_[j];
    }
  }

  /// Log-density, gradient and Hessian at z.
  void log_density_hess(const Eigen::VectorXd& z, double& logf, Eigen::Vector3d& g,
                        Eigen::Matrix3d& h) const {
    check_dim(z);
    const Eigen::VectorXd y = chol_.solve_lower(z);
    logf = -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) -
           0.5 * y.squaredNorm() - 0.5 * chol_.log_det();
    const Eigen::VectorXd a = chol_.solve(z);
    std::array<Eigen::VectorXd, 3> b;   // Sigma_j a
    std::array<Eigen::VectorXd, 3> sb;  // Sigma^{-1} Sigma_j a
    for (std::size_t j = 0; j < 3; ++j) {
      b[j] = derivs_.grad[j] * a;
      sb[j] = chol_.solve(b[j]);
      g[static_cast<Eigen::Index>(j)] = 0.5 * a.dot(b[j]) - 0.5 * tr_w_[j];
    }
    for (int j = 0; j < 3; ++j) {
      for (int k = j; k < 3; ++k) {
        const auto& sjk = derivs_.hess[hess_index(j, k)];
        const double quad = 0.5 * a.dot(sjk * a) -
                            b[static_cast<std::size_t>(j)].dot(sb[static_cast<std::size_t>(k)]);
        h(j, k) = quad + trace_part_(j, k);
        h(k, j) = h(j, k);
      }
    }
  }

 private:
  void check_dim(const Eigen::VectorXd& z) const {
    if (z.size() != chol_.n()) {
      throw DataError("replicate has " + std::to_string(z.size()) + " values, expected " +
                      std::to_string(chol_.n()));
    }
  }

  MaternParams theta_;
  CovDerivs derivs_;
  CholFactor chol_;
  std::array<Eigen::MatrixXd, 3> w_;
  std::array<double, 3> tr_w_{};
  Eigen::Matrix3d trace_part_ = Eigen::Matrix3d::Zero();
};

/// U*(z; theta, q). The weight is exp((1-q)(log f - log_weight_offset)); the
/// default offset 0 gives the exact estimating function.
inline Eigen::Vector3d ustar(const Eigen::VectorXd& z, const ScoreContext& ctx, double q,
                             double log_weight_offset = 0.0) {
  check_q(q);
  double logf = 0.0;
  Eigen::Vector3d g;
  ctx.log_density_grad(z, logf, g);
  return std::exp((1.0 - q) * (logf - log_weight_offset)) * g;
}

inline Eigen::Vector3d ustar(const Eigen::VectorXd& z, const LocationSet& locs,
                             const MaternParams& theta, double q) {
  return ustar(z, ScoreContext(locs, theta), q);
}

/// V*(z; theta, q), the exact theta-Hessian of the L_q contribution.
inline Eigen::Matrix3d vstar(const Eigen::VectorXd& z, const ScoreContext& ctx, double q,
                             double log_weight_offset = 0.0) {
  check_q(q);
  double logf = 0.0;
  Eigen::Vector3d g;
  Eigen::Matrix3d h;
  ctx.log_density_hess(z, logf, g, h);
  const double w = std::exp((1.0 - q) * (logf - log_weight_offset));
  Eigen::Matrix3d v = (1.0 - q) * w * (g * g.transpose()) + w * h;
  return 0.5 * (v + v.transpose());
}

inline Eigen::Matrix3d vstar(const Eigen::VectorXd& z, const LocationSet& locs,
                             const MaternParams& theta, double q) {
  return vstar(z, ScoreContext(locs, theta), q);
}

/// Plug-in K = mean U* U*^T and J = mean V* over the replicates.
/// For q < 1 the weights are taken relative to the largest replicate
/// log-density (log_weight_offset), which rescales K by exp(-2(1-q) offset)
/// and J by exp(-(1-q) offset); standard errors are invariant to this.
struct SandwichParts {
  Eigen::Matrix3d K = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  std::size_t m = 0;
  double q = 1.0;
  double log_weight_offset = 0.0;
};

inline SandwichParts sandwich(const ReplicateSet& reps, const LocationSet& locs,
                              const MaternParams& theta_hat, double q,
                              specfun::NuStencil stencil = {}) {
  check_q(q);
  if (reps.n() != locs.size()) {
    throw DataError("sandwich: " + std::to_string(reps.n()) + " data rows for " +
                    std::to_string(locs.size()) + " locations");
  }
  const ScoreContext ctx(locs, theta_hat, stencil);
  SandwichParts parts;
  parts.m = reps.m();
  parts.q = q;
  if (q < 1.0) {
    parts.log_weight_offset = replicate_log_likelihoods(reps, ctx.chol()).maxCoeff();
  }
  for (std::size_t i = 0; i < reps.m(); ++i) {
    const Eigen::VectorXd z = reps.replicate(i);
    double logf = 0.0;
    Eigen::Vector3d g;
    Eigen::Matrix3d h;
    ctx.log_density_hess(z, logf, g, h);
    const double w = std::exp((1.0 - q) * (logf - parts.log_weight_offset));
    const Eigen::Vector3d u = w * g;
    parts.K += u * u.transpose();
    parts.J += (1.0 - q) * w * (g * g.transpose()) + w * h;
  }
  const double inv_m = 1.0 / static_cast<double>(reps.m());
  // eval(): the right-hand sides read the matrices being assigned
  parts.K = (0.5 * inv_m * (parts.K + parts.K.transpose())).eval();
  parts.J = (0.5 * inv_m * (parts.J + parts.J.transpose())).eval();
  return parts;
}

/// How the positive-definite surrogate S of J was formed.
enum class JConvention { kAsIs, kNegated, kAbsolute };

inline const char* to_string(JConvention c) {
  switch (c) {
    case JConvention::kAsIs: return "as-is";
    case JConvention::kNegated: return "negated";
    case JConvention::kAbsolute: return "absolute";
  }
  return "?";
}

struct StdErrs {
  Eigen::Vector3d se = Eigen::Vector3d::Zero();         // diag(S^{-1/2} K^{1/2} S^{-1/2})
  Eigen::Vector3d classical = Eigen::Vector3d::Zero();  // sqrt(diag(S^{-1} K S^{-1}))
  JConvention convention = JConvention::kAsIs;
  double condition = 1.0;  // of S
};

/// Standard errors from the sandwich parts. S is J when J is positive definite,
/// -J when negative definite, |J| (absolute eigenvalues) otherwise; eigenvalues
/// of S below 1e-10 times its mean eigenvalue are floored at that level.
inline StdErrs std_errs(const SandwichParts& parts) {
  if (!parts.J.allFinite() || !parts.K.allFinite()) {
    throw NumericalError("std_errs: non-finite sandwich matrices");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> ej(0.5 * (parts.J + parts.J.transpose()));
  Eigen::Vector3d lam = ej.eigenvalues();
  StdErrs out;
  if ((lam.array() > 0.0).all()) {
    out.convention = JConvention::kAsIs;
  } else if ((lam.array() < 0.0).all()) {
    out.convention = JConvention::kNegated;
  } else {
    out.convention = JConvention::kAbsolute;
  }
  lam = lam.cwiseAbs();
  const double lmax = lam.maxCoeff();
  const double lmin = lam.minCoeff();
  out.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmax > 0.0) || out.condition > 1e12) {
    throw NumericalError("std_errs: J is singular (condition estimate " +
                         std::to_string(out.condition) + ")");
  }
  const double floor = 1e-10 * lam.mean();
  lam = lam.cwiseMax(floor);
  const Eigen::Matrix3d& vj = ej.eigenvectors();
  const Eigen::Matrix3d s_inv_half =
      vj * lam.cwiseSqrt().cwiseInverse().asDiagonal() * vj.transpose();
  const Eigen::Matrix3d s_inv = vj * lam.cwiseInverse().asDiagonal() * vj.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> ek(0.5 * (parts.K + parts.K.transpose()));
  const Eigen::Vector3d mu = ek.eigenvalues().cwiseMax(0.0);
  const Eigen::Matrix3d k_half =
      ek.eigenvectors() * mu.cwiseSqrt().asDiagonal() * ek.eigenvectors().transpose();

  out.se = (s_inv_half * k_half * s_inv_half).diagonal();
  out.classical = (s_inv * parts.K * s_inv).diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace mlqe

#endif  // MLQE_ASYMPTOTICS_HPP
