#ifndef MLQE_ESTIMATE_HPP
#define MLQE_ESTIMATE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"
#include "mlqe/nelder_mead.hpp"

namespace mlqe {

/// Box constraints on theta.
struct Bounds {
  MaternParams lower{1e-3, 1e-3, 0.05};
  MaternParams upper{1e3, 10.0, 5.0};

  void validate() const {
    const Eigen::Vector3d lo = lower.as_vector();
    const Eigen::Vector3d hi = upper.as_vector();
    for (int k = 0; k < 3; ++k) {
      if (!(lo[k] > 0.0 && lo[k] < hi[k] && std::isfinite(hi[k]))) {
        throw DomainError("bounds must satisfy 0 < lower < upper componentwise");
      }
    }
    if (upper.nu > MaternParams::kDefaultNuCap) {
      throw DomainError("upper bound on nu exceeds the supported cap of " +
                        std::to_string(MaternParams::kDefaultNuCap));
    }
  }

  bool contains(const MaternParams& t) const {
    const Eigen::Vector3d v = t.as_vector();
    return (v.array() >= lower.as_vector().array()).all() &&
           (v.array() <= upper.as_vector().array()).all();
  }

  MaternParams clamp(const MaternParams& t) const {
    return MaternParams::from_vector(
        t.as_vector().cwiseMax(lower.as_vector()).cwiseMin(upper.as_vector()));
  }

  /// The optimizer works on the unit box; each coordinate is the position of
  /// log(theta_k) between log(lower_k) and log(upper_k).
  Eigen::Vector3d to_unit(const MaternParams& t) const {
    const Eigen::Vector3d lo = lower.as_vector().array().log();
    const Eigen::Vector3d hi = upper.as_vector().array().log();
    return ((t.as_vector().array().log() - lo.array()) / (hi - lo).array()).matrix();
  }

  MaternParams from_unit(const Eigen::Vector3d& u) const {
    const Eigen::Vector3d lo = lower.as_vector().array().log();
    const Eigen::Vector3d hi = upper.as_vector().array().log();
    Eigen::Vector3d v = (lo.array() + u.array() * (hi - lo).array()).exp();
    // exp(log(x)) can land one ulp outside the box
    return clamp(MaternParams::from_vector(v));
  }
};

struct FitOptions {
  double tol = 1e-6;  // simplex diameter in the log-scaled unit box
  int max_evals = 5000;
  int max_restarts = 5;
  bool scale = true;  // exp((l+n)(1-q)) objective; ignored at q = 1
  /// Called with every evaluated trial point and its objective (-inf if rejected).
  std::function<void(const MaternParams&, double)> observer;
};

struct FitResult {
  MaternParams theta_hat;
  double objective = -std::numeric_limits<double>::infinity();
  double q = 1.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  MaternParams init;
  std::string error;  // set when the fit failed outright
};

/// theta -> sum_i L_q(Z_i; theta); non-SPD trial points map to -inf.
class LqObjective {
 public:
  LqObjective(const ReplicateSet& reps, const LocationSet& locs, double q, bool scale)
      : reps_(reps), locs_(locs), q_(q), scale_(scale) {
    check_q(q);
    if (reps.n() != locs.size()) {
      throw DataError("replicates have " + std::to_string(reps.n()) + " rows but there are " +
                      std::to_string(locs.size()) + " locations");
    }
  }

  double operator()(const MaternParams& theta) const {
    CholFactor chol;
    if (!chol.compute(build_cov(locs_, theta), theta.sigma2)) {
      return -std::numeric_limits<double>::infinity();
    }
    return total_lq(reps_, chol, q_, scale_);
  }

  double q() const noexcept { return q_; }

 private:
  const ReplicateSet& reps_;
  const LocationSet& locs_;
  double q_;
  bool scale_;
};

/// Starting point: pooled sample variance for sigma^2, beta = 0.1, nu = 0.5,
/// clamped into the bounds.
inline MaternParams default_init(const ReplicateSet& reps, const Bounds& bounds) {
  return bounds.clamp({reps.pooled_variance(), 0.1, 0.5});
}

/// Local maximizer of sum_i L_q(Z_i; theta) over the bounds.
inline FitResult fit(const ReplicateSet& reps, const LocationSet& locs, double q,
                     const Bounds& bounds, const MaternParams& init,
                     const FitOptions& options = {}) {
  bounds.validate();
  if (!bounds.contains(init)) throw DomainError("fit: initial value lies outside the bounds");
  const LqObjective objective(reps, locs, q, options.scale);

  auto negated = [&](const Eigen::VectorXd& u) {
    const MaternParams theta = bounds.from_unit(u);
    const double v = objective(theta);
    if (options.observer) options.observer(theta, v);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };

  const Eigen::Vector3d u0 = bounds.to_unit(init);
  if (!std::isfinite(negated(u0))) {
    throw NumericalError("fit: objective is not finite at the initial value (" +
                         std::to_string(init.sigma2) + ", " + std::to_string(init.beta) + ", " +
                         std::to_string(init.nu) + ")");
  }

  optim::NelderMeadOptions nm;
  nm.tol = options.tol;
  nm.max_evals = options.max_evals;
  nm.max_restarts = options.max_restarts;
  const auto r = optim::nelder_mead_box(negated, u0, nm);

  FitResult out;
  out.theta_hat = bounds.from_unit(r.x);
  out.objective = -r.fx;
  out.q = q;
  out.iterations = r.iterations;
  out.evaluations = r.evaluations + 1;
  out.converged = r.converged;
  out.init = init;
  return out;
}

inline FitResult fit(const ReplicateSet& reps, const LocationSet& locs, double q,
                     const FitOptions& options = {}) {
  const Bounds bounds;
  return fit(reps, locs, q, bounds, default_init(reps, bounds), options);
}

/// Fits along a descending q grid.
struct QProfile {
  std::vector<double> grid;
  std::vector<FitResult> fits;
};

inline void validate_q_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw DomainError("q grid is empty");
  if (grid.front() != 1.0) throw DomainError("q grid must start at 1");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    check_q(grid[k]);
    if (k > 0 && !(grid[k] < grid[k - 1])) {
      throw DomainError("q grid must be strictly decreasing");
    }
  }
}

/// Fits every q in order, warm-starting each fit at the previous estimate.
/// A failed q is recorded as non-converged and the profile continues from the
/// last good estimate.
inline QProfile fit_profile(const ReplicateSet& reps, const LocationSet& locs,
                            const std::vector<double>& grid, const Bounds& bounds,
                            const MaternParams& init, const FitOptions& options = {}) {
  validate_q_grid(grid);
  QProfile prof;
  prof.grid = grid;
  MaternParams start = init;
  for (double q : grid) {
    try {
      auto r = fit(reps, locs, q, bounds, start, options);
      start = r.theta_hat;
      prof.fits.push_back(std::move(r));
    } catch (const std::exception& e) {
      FitResult failed;
      failed.q = q;
      failed.init = start;
      failed.theta_hat = start;
      failed.error = e.what();
      prof.fits.push_back(std::move(failed));
    }
  }
  return prof;
}

}  // namespace mlqe

#endif  // MLQE_ESTIMATE_HPP
