#ifndef MLQE_QSELECT_HPP
#define MLQE_QSELECT_HPP

// Data-driven choice of q by grid refinement.
//
// Both selectors walk a descending grid q_0 = 1 > ... > q_K = q_min, compute a
// stability series along it, and either accept q_0 (the series is flat) or
// restart on an equally spaced grid from q_{k*} down to q_min, where k* is the
// last point of instability. The loop ends once q_0 - q_min <= eps, in which
// case q* = 1.
//   SQV selector:   series_k = |z_{k-1} - z_k| / p with standardized estimates
//                   z = theta_hat / (sqrt(m) se); flat iff every value < L.
//   kappa selector: series_k = |kappa_{k-1} / kappa_k - 1|; flat iff
//                   max <= L * min.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"

namespace mlqe {

/// kappa(theta) = sigma^2 beta^{-2 nu}.
inline double kappa(const MaternParams& theta) {
  theta.validate();
  return theta.sigma2 * std::pow(theta.beta, -2.0 * theta.nu);
}

/// theta_r / (sqrt(m) se_r), componentwise.
inline Eigen::Vector3d standardized(const MaternParams& theta_hat, const Eigen::Vector3d& se,
                                    std::size_t m) {
  if (m < 1) throw DomainError("standardized: m must be >= 1");
  if (!(se.array() > 0.0).all() || !se.allFinite()) {
    throw DomainError("standardized: standard errors must be positive and finite");
  }
  return (theta_hat.as_vector().array() / (std::sqrt(static_cast<double>(m)) * se.array()))
      .matrix();
}

/// Standardized quadratic variation |z_prev - z_cur| / p.
inline double sqv(const Eigen::VectorXd& z_prev, const Eigen::VectorXd& z_cur, int p = 3) {
  if (z_prev.size() != z_cur.size()) throw DataError("sqv: vectors differ in length");
  return (z_prev - z_cur).norm() / static_cast<double>(p);
}

enum class Selector { kKappa, kSqv, kNone };

inline Selector parse_selector(const std::string& s) {
  if (s == "kappa") return Selector::kKappa;
  if (s == "sqv") return Selector::kSqv;
  if (s == "none") return Selector::kNone;
  throw DataError("unknown selector '" + s + "' (expected kappa, sqv or none)");
}

inline std::string to_string(Selector s) {
  switch (s) {
    case Selector::kKappa: return "kappa";
    case Selector::kSqv: return "sqv";
    case Selector::kNone: return "none";
  }
  return "?";
}

struct QGridSpec {
  std::vector<double> grid{1.0, 0.999, 0.99, 0.98, 0.97, 0.95, 0.925, 0.9};
  double eps = 0.005;
  double L = 4.0;  // SQV threshold, or ratio coefficient for the kappa selector
  int K = 7;       // refined grids have K + 1 points, both endpoints included

  static QGridSpec defaults_for(Selector s) {
    QGridSpec spec;
    if (s == Selector::kSqv) spec.L = 0.05;
    return spec;
  }

  void validate(Selector s) const {
    if (grid.size() < 2) throw DomainError("q grid needs at least two points");
    if (grid.front() != 1.0) throw DomainError("q grid must start at 1");
    for (std::size_t k = 0; k < grid.size(); ++k) {
      check_q(grid[k]);
      if (k > 0 && !(grid[k] < grid[k - 1])) {
        throw DomainError("q grid must be strictly decreasing");
      }
    }
    if (!(eps > 0.0)) throw DomainError("eps must be positive");
    if (!(L > 0.0)) throw DomainError("L must be positive");
    if (s == Selector::kKappa && !(L > 1.0)) {
      throw DomainError("the kappa selector needs L > 1");
    }
    if (K < 1) throw DomainError("K must be >= 1");
  }
};

enum class SelectionReason { kStabilized, kFallbackToOne, kSpanExhausted };

inline const char* to_string(SelectionReason r) {
  switch (r) {
    case SelectionReason::kStabilized: return "stabilized";
    case SelectionReason::kFallbackToOne: return "fallback-to-one";
    case SelectionReason::kSpanExhausted: return "span-exhausted";
  }
  return "?";
}

/// One refinement pass. series[k-1] compares usable point k-1 with k;
/// k_star is an index into `usable` (0 when the pass accepted).
struct SelectionPass {
  int pass = 0;
  std::vector<double> grid;
  std::vector<double> usable;  // grid points whose fit (and se) succeeded
  std::vector<double> series;
  int k_star = 0;
  bool accepted = false;
};

struct SelectionResult {
  double q_star = 1.0;
  std::vector<SelectionPass> trace;
  SelectionReason reason = SelectionReason::kSpanExhausted;
  std::vector<std::string> log;  // excluded points and why
};

/// Fit for one q; nullopt marks a failed fit.
using FitFn = std::function<std::optional<MaternParams>(double q)>;
/// Standard errors at (theta_hat, q); nullopt marks a failure.
using SeFn = std::function<std::optional<Eigen::Vector3d>(const MaternParams&, double q)>;

namespace detail {

inline std::vector<double> refine_grid(double top, double bottom, int K) {
  std::vector<double> g(static_cast<std::size_t>(K) + 1);
  for (int i = 0; i <= K; ++i) {
    g[static_cast<std::size_t>(i)] = top + (bottom - top) * static_cast<double>(i) / K;
  }
  g.front() = top;
  g.back() = bottom;
  return g;
}

// Per-point quantity (kappa, or the standardized vector) for a grid point.
using PointFn = std::function<std::optional<Eigen::VectorXd>(double q, std::string& why)>;

// Decision: accept (returns nullopt) or the index k* of the refinement start.
using DecideFn = std::function<std::optional<std::size_t>(const std::vector<double>& series)>;

using SeriesFn =
    std::function<double(const Eigen::VectorXd& prev, const Eigen::VectorXd& cur)>;

inline SelectionResult refine_loop(const QGridSpec& spec, const PointFn& point,
                                   const SeriesFn& series_fn, const DecideFn& decide) {
  SelectionResult res;
  res.q_star = 1.0;
  res.reason = SelectionReason::kSpanExhausted;
  std::map<double, std::optional<Eigen::VectorXd>> cache;
  std::vector<double> grid = spec.grid;
  const double q_min = grid.back();
  int pass = 0;

  while (grid.front() - q_min > spec.eps) {
    SelectionPass tr;
    tr.pass = pass++;
    tr.grid = grid;
    std::vector<Eigen::VectorXd> values;
    for (double q : grid) {
      auto it = cache.find(q);
      if (it == cache.end()) {
        std::string why;
        auto v = point(q, why);
        if (!v) res.log.push_back("q=" + std::to_string(q) + " excluded: " + why);
        it = cache.emplace(q, std::move(v)).first;
      }
      if (it->second) {
        tr.usable.push_back(q);
        values.push_back(*it->second);
      }
    }
    if (tr.usable.size() < 2) {
      res.log.push_back("fewer than two usable grid points; falling back to q = 1");
      res.trace.push_back(std::move(tr));
      res.q_star = 1.0;
      res.reason = SelectionReason::kFallbackToOne;
      return res;
    }
    for (std::size_t k = 1; k < values.size(); ++k) {
      tr.series.push_back(series_fn(values[k - 1], values[k]));
    }
    const auto k_star = decide(tr.series);
    if (!k_star) {
      tr.accepted = true;
      res.trace.push_back(std::move(tr));
      res.q_star = res.trace.back().usable.front();
      res.reason = SelectionReason::kStabilized;
      return res;
    }
    tr.k_star = static_cast<int>(*k_star);
    const double top = tr.usable[*k_star];
    res.trace.push_back(std::move(tr));
    grid = refine_grid(top, q_min, spec.K);
  }
  if (res.trace.empty()) {
    SelectionPass tr;
    tr.grid = grid;
    res.trace.push_back(std::move(tr));
  }
  return res;
}

}  // namespace detail

/// Selection by standardized quadratic variation of the estimates.
inline SelectionResult select_q_sqv(const FitFn& fit_fn, const SeFn& se_fn, std::size_t m,
                                    const QGridSpec& spec) {
  spec.validate(Selector::kSqv);
  auto point = [&](double q, std::string& why) -> std::optional<Eigen::VectorXd> {
    const auto theta = fit_fn(q);
    if (!theta) {
      why = "fit failed";
      return std::nullopt;
    }
    const auto se = se_fn(*theta, q);
    if (!se || !(se->array() > 0.0).all() || !se->allFinite()) {
      why = "standard errors unavailable";
      return std::nullopt;
    }
    return Eigen::VectorXd(standardized(*theta, *se, m));
  };
  auto series = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return sqv(a, b, static_cast<int>(a.size()));
  };
  const double L = spec.L;
  auto decide = [L](const std::vector<double>& s) -> std::optional<std::size_t> {
    std::optional<std::size_t> k_star;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] >= L) k_star = k + 1;
    }
    return k_star;
  };
  return detail::refine_loop(spec, point, series, decide);
}

/// Selection by the stability of kappa; never computes standard errors.
inline SelectionResult select_q_kappa(const FitFn& fit_fn, const QGridSpec& spec) {
  spec.validate(Selector::kKappa);
  auto point = [&](double q, std::string& why) -> std::optional<Eigen::VectorXd> {
    const auto theta = fit_fn(q);
    if (!theta) {
      why = "fit failed";
      return std::nullopt;
    }
    if (!theta->valid()) {
      why = "invalid estimate";
      return std::nullopt;
    }
    const double k = kappa(*theta);
    if (!std::isfinite(k) || !(k > 0.0)) {
      why = "kappa not finite";
      return std::nullopt;
    }
    return Eigen::VectorXd::Constant(1, k);
  };
  auto series = [](const Eigen::VectorXd& prev, const Eigen::VectorXd& cur) {
    return std::fabs(prev[0] / cur[0] - 1.0);
  };
  const double L = spec.L;
  auto decide = [L](const std::vector<double>& s) -> std::optional<std::size_t> {
    const double lo = *std::min_element(s.begin(), s.end());
    const double hi = *std::max_element(s.begin(), s.end());
    if (hi <= L * lo) return std::nullopt;
    std::size_t k_star = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] >= L * lo) k_star = k + 1;
    }
    return k_star;
  };
  return detail::refine_loop(spec, point, series, decide);
}

}  // namespace mlqe

#endif  // MLQE_QSELECT_HPP
