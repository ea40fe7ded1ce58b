#ifndef MLQE_NELDER_MEAD_HPP
#define MLQE_NELDER_MEAD_HPP

// Bound-constrained Nelder-Mead on the unit box [0,1]^d.
//
// Trial points are projected onto the box before evaluation, so every
// evaluated point is feasible. The method only ever compares objective
// values, which makes the whole iterate sequence invariant under strictly
// increasing transforms of the objective. Convergence is declared when the
// simplex diameter drops below tol and a fresh simplex built around the best
// vertex fails to improve on it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mlqe::optim {

struct NelderMeadOptions {
  double tol = 1e-6;          // simplex diameter (max-norm) in box coordinates
  int max_evals = 5000;
  int max_restarts = 5;
  double initial_step = 0.05; // edge length of the starting simplex
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fx = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  bool converged = false;
};

/// Minimizes f over [0,1]^d starting from x0. f may return +inf to reject a point.
template <typename F>
NelderMeadResult nelder_mead_box(F&& f, Eigen::VectorXd x0, const NelderMeadOptions& opt = {}) {
  const auto d = x0.size();
  const auto np = static_cast<std::size_t>(d + 1);
  NelderMeadResult res;

  auto project = [](Eigen::VectorXd v) { return v.cwiseMax(0.0).cwiseMin(1.0).eval(); };
  auto eval = [&](const Eigen::VectorXd& v) {
    ++res.evaluations;
    const double y = f(v);
    return std::isnan(y) ? std::numeric_limits<double>::infinity() : y;
  };

  x0 = project(std::move(x0));
  std::vector<Eigen::VectorXd> pts(np);
  std::vector<double> fv(np);
  std::vector<std::size_t> order(np);

  auto build_simplex = [&](const Eigen::VectorXd& base, double fbase) {
    pts[0] = base;
    fv[0] = fbase;
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::VectorXd v = base;
      v[k] += (base[k] + opt.initial_step <= 1.0) ? opt.initial_step : -opt.initial_step;
      pts[static_cast<std::size_t>(k) + 1] = project(v);
      fv[static_cast<std::size_t>(k) + 1] = eval(pts[static_cast<std::size_t>(k) + 1]);
    }
  };
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> p2(np);
    std::vector<double> f2(np);
    for (std::size_t i = 0; i < np; ++i) {
      p2[i] = pts[order[i]];
      f2[i] = fv[order[i]];
    }
    pts.swap(p2);
    fv.swap(f2);
  };
  auto diameter = [&] {
    double dmax = 0.0;
    for (std::size_t i = 1; i < np; ++i) {
      dmax = std::max(dmax, (pts[i] - pts[0]).cwiseAbs().maxCoeff());
    }
    return dmax;
  };

  build_simplex(x0, eval(x0));
  double best_before_restart = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x0;

  while (res.evaluations < opt.max_evals) {
    sort_simplex();
    if (diameter() < opt.tol) {
      // Converged for this simplex; restart around the best vertex until a
      // restart neither improves the value nor moves the best point.
      const bool stalled =
          !(fv[0] < best_before_restart) ||
          (res.restarts > 0 && (pts[0] - best_x).cwiseAbs().maxCoeff() < opt.tol);
      if (stalled || res.restarts >= opt.max_restarts) {
        res.converged = stalled;
        break;
      }
      best_before_restart = fv[0];
      best_x = pts[0];
      ++res.restarts;
      build_simplex(pts[0], fv[0]);
      continue;
    }
    ++res.iterations;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i + 1 < np; ++i) centroid += pts[i];
    centroid /= static_cast<double>(np - 1);

    const std::size_t w = np - 1;
    const Eigen::VectorXd xr = project(centroid + (centroid - pts[w]));
    const double fr = eval(xr);
    if (fr < fv[0]) {
      const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[w]));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[w] = xe;
        fv[w] = fe;
      } else {
        pts[w] = xr;
        fv[w] = fr;
      }
      continue;
    }
    if (fr < fv[w - 1]) {
      pts[w] = xr;
      fv[w] = fr;
      continue;
    }
    // Contraction: outside if the reflection beat the worst vertex, inside otherwise.
    const bool outside = fr < fv[w];
    const Eigen::VectorXd xc = outside ? project(centroid + 0.5 * (xr - centroid))
                                       : project(centroid + 0.5 * (pts[w] - centroid));
    const double fc = eval(xc);
    if (outside ? fc <= fr : fc < fv[w]) {
      pts[w] = xc;
      fv[w] = fc;
      continue;
    }
    for (std::size_t i = 1; i < np; ++i) {
      pts[i] = project(pts[0] + 0.5 * (pts[i] - pts[0]));
      fv[i] = eval(pts[i]);
    }
  }

  sort_simplex();
  res.x = pts[0];
  res.fx = fv[0];
  return res;
}

}  // namespace mlqe::optim

#endif  // MLQE_NELDER_MEAD_HPP
