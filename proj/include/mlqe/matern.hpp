#ifndef MLQE_MATERN_HPP
#define MLQE_MATERN_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/specfun.hpp"

namespace mlqe {

/// Matern parameters theta = (sigma^2, beta, nu): variance, range, smoothness.
struct MaternParams {
  double sigma2 = 1.0;
  double beta = 0.1;
  double nu = 0.5;

  static constexpr double kDefaultNuCap = 5.0;

  bool valid(double nu_cap = kDefaultNuCap) const {
    auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    return pos(sigma2) && pos(beta) && pos(nu) && nu <= nu_cap;
  }

  void validate(double nu_cap = kDefaultNuCap) const {
    if (!valid(nu_cap)) {
      throw DomainError("invalid Matern parameters (" + std::to_string(sigma2) + ", " +
                        std::to_string(beta) + ", " + std::to_string(nu) +
                        "): all must be positive and finite with nu <= " +
                        std::to_string(nu_cap));
    }
  }

  Eigen::Vector3d as_vector() const { return {sigma2, beta, nu}; }
  static MaternParams from_vector(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }

  friend bool operator==(const MaternParams&, const MaternParams&) = default;
};

/// Index of each parameter in gradients and Hessians.
enum Param : int { kSigma2 = 0, kBeta = 1, kNu = 2 };

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// A fixed set of n planar locations with its Euclidean distance matrix.
/// Coordinates are expected to be normalized to the unit square.
class LocationSet {
 public:
  LocationSet() = default;

  explicit LocationSet(std::vector<Point> coords) : coords_(std::move(coords)) {
    if (coords_.empty()) throw DataError("LocationSet: at least one location is required");
    const auto n = static_cast<Eigen::Index>(coords_.size());
    dist_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = coords_[static_cast<std::size_t>(i)];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw DataError("LocationSet: non-finite coordinate at location " + std::to_string(i));
      }
      dist_(i, i) = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        const auto& q = coords_[static_cast<std::size_t>(j)];
        const double d = std::hypot(p.x - q.x, p.y - q.y);
        if (!(d > 0.0)) {
          throw DataError("LocationSet: locations " + std::to_string(j) + " and " +
                          std::to_string(i) + " coincide");
        }
        dist_(i, j) = d;
        dist_(j, i) = d;
      }
    }
  }

  std::size_t size() const noexcept { return coords_.size(); }
  const std::vector<Point>& coords() const noexcept { return coords_; }
  const Eigen::MatrixXd& distances() const noexcept { return dist_; }
  double distance(std::size_t i, std::size_t j) const {
    return dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  std::vector<Point> coords_;
  Eigen::MatrixXd dist_;
};

namespace detail {

inline double log_matern_norm(double nu) {
  // log(1 / (Gamma(nu) 2^{nu-1}))
  return -(specfun::log_gamma(nu) + (nu - 1.0) * std::numbers::ln2);
}

inline void check_h(double h) {
  if (!(h >= 0.0) || !std::isfinite(h)) {
    throw DomainError("Matern: distance must be finite and nonnegative, got " + std::to_string(h));
  }
}

}  // namespace detail

/// M(h; theta) = sigma^2 / (Gamma(nu) 2^{nu-1}) (h/beta)^nu K_nu(h/beta), with M(0) = sigma^2.
inline double matern_cov(double h, const MaternParams& theta) {
  theta.validate();
  detail::check_h(h);
  if (h == 0.0) return theta.sigma2;
  const double x = h / theta.beta;
  const double g = specfun::xnu_k(theta.nu, x);
  const double m = theta.sigma2 * std::exp(detail::log_matern_norm(theta.nu)) * g;
  return std::fmin(m, theta.sigma2);
}

/// Value, gradient and Hessian of M(h; theta) in theta at one distance.
struct MaternDerivs {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

/// Closed-form theta-derivatives of M. The nu-derivatives difference the
/// normalized correlation rho(nu) = x^nu K_nu(x) / (Gamma(nu) 2^{nu-1}) and
/// x d rho / dx on the NuStencil; everything else is analytic. Differencing
/// rho rather than x^nu K_nu avoids cancelling against the digamma term at
/// short range, where rho is flat in nu but x^nu K_nu is not.
/// At h = 0 the limits are used: grad = (1, 0, 0), hess = 0.
inline MaternDerivs matern_derivs(double h, const MaternParams& theta, bool with_hessian,
                                  specfun::NuStencil stencil = {}) {
  theta.validate();
  detail::check_h(h);
  MaternDerivs out;
  if (h == 0.0) {
    out.value = theta.sigma2;
    out.grad = {1.0, 0.0, 0.0};
    return out;
  }

  const double s2 = theta.sigma2;
  const double beta = theta.beta;
  const double nu = theta.nu;
  const double x = h / beta;

  // rho and x d rho / dx at one order
  struct Corr {
    double rho, xrho_x;
  };
  auto corr = [x](double v, const specfun::BesselDerivs& bk) {
    const double w = std::exp(detail::log_matern_norm(v)) * std::pow(x, v);
    return Corr{w * bk.k, w * (v * bk.k + x * bk.kp)};
  };
  const auto bk = specfun::bessel_k_derivs(nu, x);
  const Corr c0 = corr(nu, bk);
  const double st = stencil.step_at(nu);
  const Corr cp = corr(nu + st, specfun::bessel_k_derivs(nu + st, x));
  const Corr cm = corr(nu - st, specfun::bessel_k_derivs(nu - st, x));
  const double rho_nu = (cp.rho - cm.rho) / (2.0 * st);

  out.value = s2 * c0.rho;
  out.grad[kSigma2] = c0.rho;
  out.grad[kBeta] = -s2 * c0.xrho_x / beta;
  out.grad[kNu] = s2 * rho_nu;
  if (!with_hessian) return out;

  // x^2 d^2 rho / dx^2 from the ODE-backed K''
  const double w0 = std::exp(detail::log_matern_norm(nu)) * std::pow(x, nu);
  const double x2rho_xx =
      w0 * (nu * (nu - 1.0) * bk.k + 2.0 * nu * x * bk.kp + x * x * bk.kpp);

  auto& H = out.hess;
  H(kSigma2, kSigma2) = 0.0;
  H(kSigma2, kBeta) = out.grad[kBeta] / s2;
  H(kSigma2, kNu) = rho_nu;
  H(kBeta, kBeta) = s2 * (x2rho_xx + 2.0 * c0.xrho_x) / (beta * beta);
  H(kBeta, kNu) = -s2 * (cp.xrho_x - cm.xrho_x) / (2.0 * st) / beta;
  H(kNu, kNu) = s2 * (cp.rho - 2.0 * c0.rho + cm.rho) / (st * st);
  H(kBeta, kSigma2) = H(kSigma2, kBeta);
  H(kNu, kSigma2) = H(kSigma2, kNu);
  H(kNu, kBeta) = H(kBeta, kNu);
  return out;
}

/// (dM/dsigma^2, dM/dbeta, dM/dnu).
inline Eigen::Vector3d matern_grad(double h, const MaternParams& theta,
                                   specfun::NuStencil stencil = {}) {
  return matern_derivs(h, theta, false, stencil).grad;
}

/// Full symmetric 3x3 Hessian of M in theta.
inline Eigen::Matrix3d matern_hess(double h, const MaternParams& theta,
                                   specfun::NuStencil stencil = {}) {
  return matern_derivs(h, theta, true, stencil).hess;
}

/// Sigma(theta)_{ij} = M(|s_i - s_j|; theta).
inline Eigen::MatrixXd build_cov(const LocationSet& locs, const MaternParams& theta) {
  theta.validate();
  const auto n = static_cast<Eigen::Index>(locs.size());
  const auto& d = locs.distances();
  const double norm = theta.sigma2 * std::exp(detail::log_matern_norm(theta.nu));
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    cov(j, j) = theta.sigma2;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double x = d(i, j) / theta.beta;
      const double v = std::fmin(norm * specfun::xnu_k(theta.nu, x), theta.sigma2);
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  return cov;
}

/// Entrywise first derivatives dSigma/dtheta_k, k = sigma^2, beta, nu.
using CovGrad = std::array<Eigen::MatrixXd, 3>;

/// The six distinct second-derivative matrices, ordered by hess_index().
using CovHess = std::array<Eigen::MatrixXd, 6>;

/// Position of d^2 Sigma / dtheta_j dtheta_k in CovHess (symmetric in j, k).
constexpr std::size_t hess_index(int j, int k) {
  if (j > k) std::swap(j, k);
  // (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
  return static_cast<std::size_t>(j == 0 ? k : (j == 1 ? 2 + k : 5));
}

/// Covariance matrix together with its theta-derivatives.
struct CovDerivs {
  Eigen::MatrixXd cov;
  CovGrad grad;
  CovHess hess;  // empty matrices unless requested
};

inline CovDerivs build_cov_derivs(const LocationSet& locs, const MaternParams& theta,
                                  bool with_hessian, specfun::NuStencil stencil = {}) {
  theta.validate();
  const auto n = static_cast<Eigen::Index>(locs.size());
  const auto& d = locs.distances();
  CovDerivs out;
  out.cov.resize(n, n);
  for (auto& g : out.grad) g.setZero(n, n);
  if (with_hessian) {
    for (auto& h : out.hess) h.setZero(n, n);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    out.cov(j, j) = theta.sigma2;
    out.grad[kSigma2](j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const auto md = matern_derivs(d(i, j), theta, with_hessian, stencil);
      out.cov(i, j) = out.cov(j, i) = md.value;
      for (int k = 0; k < 3; ++k) {
        out.grad[static_cast<std::size_t>(k)](i, j) = md.grad[k];
        out.grad[static_cast<std::size_t>(k)](j, i) = md.grad[k];
      }
      if (with_hessian) {
        for (int a = 0; a < 3; ++a) {
          for (int b = a; b < 3; ++b) {
            auto& m = out.hess[hess_index(a, b)];
            m(i, j) = md.hess(a, b);
            m(j, i) = md.hess(a, b);
          }
        }
      }
    }
  }
  return out;
}

inline CovGrad build_cov_grad(const LocationSet& locs, const MaternParams& theta,
                              specfun::NuStencil stencil = {}) {
  return build_cov_derivs(locs, theta, false, stencil).grad;
}

inline CovHess build_cov_hess(const LocationSet& locs, const MaternParams& theta,
                              specfun::NuStencil stencil = {}) {
  return build_cov_derivs(locs, theta, true, stencil).hess;
}

}  // namespace mlqe

#endif  // MLQE_MATERN_HPP
