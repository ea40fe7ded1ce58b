#ifndef MLQE_VARIOGRAM_HPP
#define MLQE_VARIOGRAM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"

namespace mlqe {

/// Binned semivariance. Empty bins have count 0 and gamma = NaN.
struct VariogramCurve {
  std::vector<double> bin_centers;
  std::vector<double> gamma;
  std::vector<std::size_t> counts;
};

/// Subtracts each replicate's own mean.
inline ReplicateSet center_replicates(const ReplicateSet& reps) {
  Eigen::MatrixXd z = reps.data();
  z.rowwise() -= z.colwise().mean();
  return ReplicateSet(std::move(z));
}

/// Half the largest pairwise distance.
inline double default_max_dist(const LocationSet& locs) { return 0.5 * locs.distances().maxCoeff(); }

/// Matheron estimator: gamma(bin) = sum_{pairs in bin} (z_i - z_j)^2 / (2 N_bin),
/// with n_bins equal-width bins on [0, max_dist]. Pairs farther than max_dist
/// are ignored.
inline VariogramCurve empirical_variogram(const Eigen::VectorXd& z, const LocationSet& locs,
                                          std::size_t n_bins = 15, double max_dist = -1.0) {
  const auto n = static_cast<Eigen::Index>(locs.size());
  if (n < 2) throw DataError("empirical_variogram: needs at least two locations");
  if (z.size() != n) {
    throw DataError("empirical_variogram: " + std::to_string(z.size()) + " values for " +
                    std::to_string(n) + " locations");
  }
  if (n_bins < 1) throw DomainError("empirical_variogram: n_bins must be >= 1");
  if (max_dist <= 0.0) max_dist = default_max_dist(locs);
  if (!std::isfinite(max_dist)) throw DomainError("empirical_variogram: max_dist must be finite");

  const double width = max_dist / static_cast<double>(n_bins);
  std::vector<double> sums(n_bins, 0.0);
  VariogramCurve out;
  out.counts.assign(n_bins, 0);
  const auto& d = locs.distances();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double h = d(i, j);
      if (h > max_dist) continue;
      auto b = static_cast<std::size_t>(h / width);
      if (b >= n_bins) b = n_bins - 1;  // h == max_dist
      const double diff = z[i] - z[j];
      sums[b] += diff * diff;
      ++out.counts[b];
    }
  }
  out.bin_centers.resize(n_bins);
  out.gamma.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.bin_centers[b] = (static_cast<double>(b) + 0.5) * width;
    out.gamma[b] = out.counts[b] > 0 ? sums[b] / (2.0 * static_cast<double>(out.counts[b]))
                                     : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// One curve per replicate.
inline std::vector<VariogramCurve> replicate_variograms(const ReplicateSet& reps,
                                                        const LocationSet& locs,
                                                        std::size_t n_bins = 15,
                                                        double max_dist = -1.0) {
  std::vector<VariogramCurve> curves;
  curves.reserve(reps.m());
  for (std::size_t i = 0; i < reps.m(); ++i) {
    curves.push_back(empirical_variogram(reps.replicate(i), locs, n_bins, max_dist));
  }
  return curves;
}

}  // namespace mlqe

#endif  // MLQE_VARIOGRAM_HPP
