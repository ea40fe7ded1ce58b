#ifndef MLQE_SIMULATE_HPP
#define MLQE_SIMULATE_HPP

// Synthetic replicated Matern fields: Z_i = L e_i with L L^T = Sigma(theta) and
// e_i standard normal, optionally followed by replicate-level contamination
// (each replicate, with probability r, receives i.i.d. additive noise).
//
// Every replicate draws from its own generator seeded by mixing (seed, index)
// through SplitMix64, so replicate i is the same whatever m is.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"

namespace mlqe::sim {

/// Identity of the random number machinery, recorded in run metadata.
inline constexpr const char* kGeneratorId =
    "mt19937_64 per stream, seeded by splitmix64(seed, stream); std::normal_distribution";

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of substream `stream` of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(seed, stream));
}

enum class Layout { kGrid, kUniform };

inline Layout parse_layout(const std::string& s) {
  if (s == "grid") return Layout::kGrid;
  if (s == "uniform" || s == "uniform-random") return Layout::kUniform;
  throw DataError("unknown layout '" + s + "' (expected grid or uniform)");
}

inline std::string to_string(Layout l) { return l == Layout::kGrid ? "grid" : "uniform"; }

enum class NoiseKind { kGaussian };

struct ContaminationSpec {
  double r = 0.0;         // probability that a replicate is contaminated, 0 <= r < 1
  double noise_sd = 1.0;  // sd of the additive noise
  NoiseKind kind = NoiseKind::kGaussian;

  void validate() const {
    if (!(r >= 0.0 && r < 1.0)) {
      throw DomainError("contamination level r must lie in [0, 1), got " + std::to_string(r));
    }
    if (r > 0.0 && !(noise_sd > 0.0 && std::isfinite(noise_sd))) {
      throw DomainError("contamination noise sd must be positive, got " +
                        std::to_string(noise_sd));
    }
  }
};

struct SimConfig {
  MaternParams theta{1.0, 0.1, 0.5};
  std::size_t n = 100;
  std::size_t m = 100;
  Layout layout = Layout::kGrid;
  std::uint64_t seed = 1;
  ContaminationSpec contamination;

  void validate() const {
    theta.validate();
    if (n < 1 || m < 1) throw DomainError("simulation needs n >= 1 and m >= 1");
    if (layout == Layout::kGrid) {
      const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
      if (k * k != n) {
        throw DomainError("grid layout needs a perfect-square n, got " + std::to_string(n));
      }
    }
    contamination.validate();
  }
};

/// Grid: sqrt(n) x sqrt(n) lattice with spacing 1/(sqrt(n)+1), x-major order.
/// Uniform: i.i.d. points in [0,1]^2, exact duplicates redrawn.
inline LocationSet make_locations(std::size_t n, Layout layout, std::uint64_t seed) {
  if (n < 1) throw DomainError("make_locations: n must be >= 1");
  std::vector<Point> pts;
  pts.reserve(n);
  if (layout == Layout::kGrid) {
    const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (k * k != n) {
      throw DomainError("grid layout needs a perfect-square n, got " + std::to_string(n));
    }
    const double step = 1.0 / static_cast<double>(k + 1);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        pts.push_back({static_cast<double>(i + 1) * step, static_cast<double>(j + 1) * step});
      }
    }
  } else {
    auto rng = make_stream(seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::set<std::pair<double, double>> seen;
    while (pts.size() < n) {
      const double x = unif(rng);
      const double y = unif(rng);
      if (seen.emplace(x, y).second) pts.push_back({x, y});
    }
  }
  return LocationSet(std::move(pts));
}

/// Z = L E with E an n x m matrix of standard normals, column i drawn from
/// stream i of `seed`.
inline ReplicateSet gen_replicates(const LocationSet& locs, const MaternParams& theta,
                                   std::size_t m, std::uint64_t seed) {
  if (m < 1) throw DomainError("gen_replicates: m must be >= 1");
  const auto chol = factorize(locs, theta);
  const auto n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd e(n, static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    auto rng = make_stream(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index r = 0; r < n; ++r) e(r, static_cast<Eigen::Index>(i)) = normal(rng);
  }
  Eigen::MatrixXd z = chol.lower() * e;
  return ReplicateSet(std::move(z));
}

struct Contaminated {
  ReplicateSet reps;
  std::vector<bool> flags;  // flags[i]: replicate i received noise

  std::size_t count() const {
    std::size_t c = 0;
    for (bool f : flags) c += f ? 1 : 0;
    return c;
  }
};

/// Each replicate independently, with probability r, gets i.i.d. N(0, noise_sd^2)
/// added at every location. Replicate i uses stream i of `seed`.
inline Contaminated contaminate(const ReplicateSet& reps, const ContaminationSpec& spec,
                                std::uint64_t seed) {
  spec.validate();
  Contaminated out{reps, std::vector<bool>(reps.m(), false)};
  if (spec.r == 0.0) return out;
  Eigen::MatrixXd z = reps.data();
  for (std::size_t i = 0; i < reps.m(); ++i) {
    auto rng = make_stream(seed, i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (!(unif(rng) < spec.r)) continue;
    out.flags[i] = true;
    std::normal_distribution<double> noise(0.0, spec.noise_sd);
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, static_cast<Eigen::Index>(i)) += noise(rng);
  }
  out.reps = ReplicateSet(std::move(z));
  return out;
}

struct SimulatedData {
  LocationSet locs;
  ReplicateSet reps;
  std::vector<bool> contaminated;
};

/// Full generation pipeline; locations, clean field and contamination draw
/// from independent substreams of config.seed.
inline SimulatedData simulate(const SimConfig& config) {
  config.validate();
  auto locs = make_locations(config.n, config.layout, derive_seed(config.seed, 0));
  auto clean = gen_replicates(locs, config.theta, config.m, derive_seed(config.seed, 1));
  auto dirty = contaminate(clean, config.contamination, derive_seed(config.seed, 2));
  return {std::move(locs), std::move(dirty.reps), std::move(dirty.flags)};
}

}  // namespace mlqe::sim

#endif  // MLQE_SIMULATE_HPP
