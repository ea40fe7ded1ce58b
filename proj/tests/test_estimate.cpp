#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mlqe/estimate.hpp"
#include "mlqe/nelder_mead.hpp"
#include "mlqe/qselect.hpp"
#include "mlqe/simulate.hpp"

using namespace mlqe;

TEST(Bounds, UnitMapRoundTripAndValidation) {
  const Bounds b;
  EXPECT_NO_THROW(b.validate());
  const MaternParams t{2.0, 0.3, 1.7};
  const auto back = b.from_unit(b.to_unit(t));
  EXPECT_NEAR(back.sigma2, t.sigma2, 1e-12);
  EXPECT_NEAR(back.beta, t.beta, 1e-14);
  EXPECT_NEAR(back.nu, t.nu, 1e-13);
  EXPECT_TRUE(b.contains(b.from_unit(Eigen::Vector3d::Zero())));
  EXPECT_TRUE(b.contains(b.from_unit(Eigen::Vector3d::Ones())));
  EXPECT_EQ(b.clamp({1e9, 1e-9, 1.0}).sigma2, b.upper.sigma2);
  Bounds bad;
  bad.lower.beta = 20.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = Bounds{};
  bad.lower.nu = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(NelderMead, QuadraticInteriorAndBoundary) {
  auto f = [](const Eigen::VectorXd& x) {
    return (x - Eigen::Vector3d(0.3, 0.6, 0.45)).squaredNorm();
  };
  const auto r = optim::nelder_mead_box(f, Eigen::Vector3d(0.9, 0.1, 0.5));
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - Eigen::Vector3d(0.3, 0.6, 0.45)).cwiseAbs().maxCoeff(), 1e-5);

  // minimizer outside the box: the constrained optimum sits on the face
  bool feasible = true;
  auto g = [&](const Eigen::VectorXd& x) {
    feasible = feasible && (x.array() >= 0).all() && (x.array() <= 1).all();
    return (x - Eigen::Vector3d(1.4, 0.5, -0.3)).squaredNorm();
  };
  const auto rb = optim::nelder_mead_box(g, Eigen::Vector3d(0.5, 0.5, 0.5));
  EXPECT_TRUE(feasible);
  EXPECT_LT((rb.x - Eigen::Vector3d(1.0, 0.5, 0.0)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(NelderMead, InvariantUnderMonotoneTransform) {
  auto f = [](const Eigen::VectorXd& x) {
    return 3 * std::pow(x[0] - 0.2, 2) + std::pow(x[1] - 0.7, 2) + x[0] * x[1] + 0.1 * x[2];
  };
  std::vector<Eigen::VectorXd> pa, pb;
  const auto a = optim::nelder_mead_box(
      [&](const Eigen::VectorXd& x) {
        pa.push_back(x);
        return f(x);
      },
      Eigen::Vector3d(0.5, 0.5, 0.5));
  const auto b = optim::nelder_mead_box(
      [&](const Eigen::VectorXd& x) {
        pb.push_back(x);
        return -std::exp(-5.0 * f(x));
      },
      Eigen::Vector3d(0.5, 0.5, 0.5));
  EXPECT_EQ(a.x, b.x);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i], pb[i]);
}

TEST(NelderMead, RejectsInfiniteRegions) {
  auto f = [](const Eigen::VectorXd& x) {
    if (x[0] < 0.4) return std::numeric_limits<double>::infinity();
    return std::pow(x[0] - 0.5, 2) + std::pow(x[1] - 0.5, 2);
  };
  const auto r = optim::nelder_mead_box(f, Eigen::Vector2d(0.8, 0.8));
  EXPECT_NEAR(r.x[0], 0.5, 1e-5);
  EXPECT_NEAR(r.x[1], 0.5, 1e-5);
}

namespace {

struct SmallData {
  LocationSet locs;
  ReplicateSet reps;
};

SmallData small_data(std::size_t n, std::size_t m, std::uint64_t seed, double r = 0.0) {
  sim::SimConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.seed = seed;
  cfg.theta = {1.0, 0.2, 0.5};
  cfg.contamination = {r, 1.0};
  auto d = sim::simulate(cfg);
  return {std::move(d.locs), std::move(d.reps)};
}

}  // namespace

TEST(Fit, ImprovesOnInitAndStaysFeasible) {
  const auto d = small_data(16, 60, 3);
  const Bounds b;
  const MaternParams init{0.5, 0.5, 1.5};
  bool feasible = true;
  FitOptions opt;
  opt.observer = [&](const MaternParams& t, double) { feasible = feasible && b.contains(t); };
  for (double q : {1.0, 0.9}) {
    const auto r = fit(d.reps, d.locs, q, b, init, opt);
    const LqObjective obj(d.reps, d.locs, q, true);
    EXPECT_GE(r.objective, obj(init));
    EXPECT_EQ(r.objective, obj(r.theta_hat));
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(b.contains(r.theta_hat));
    EXPECT_EQ(r.init, init);
    EXPECT_EQ(r.q, q);
  }
  EXPECT_TRUE(feasible);
}

TEST(Fit, ReproducibleAndErrors) {
  const auto d = small_data(16, 30, 4);
  const auto a = fit(d.reps, d.locs, 0.95);
  const auto b = fit(d.reps, d.locs, 0.95);
  EXPECT_EQ(a.theta_hat, b.theta_hat);
  EXPECT_EQ(a.evaluations, b.evaluations);
  EXPECT_THROW(fit(d.reps, d.locs, 0.95, Bounds{}, {1e4, 0.1, 0.5}), DomainError);
  EXPECT_THROW(fit(d.reps, d.locs, 1.2), DomainError);
  EXPECT_THROW(fit(d.reps, sim::make_locations(9, sim::Layout::kGrid, 0), 1.0), DataError);
}

TEST(Fit, ScaleFlagDoesNotMoveTheArgmax) {
  const auto d = small_data(16, 40, 5, 0.1);
  for (double q : {0.99, 0.9, 0.7}) {
    // at the default tol the simplex only pins theta to a few 1e-6
    FitOptions on, off;
    on.tol = off.tol = 1e-8;
    off.scale = false;
    const auto a = fit(d.reps, d.locs, q, on);
    const auto b = fit(d.reps, d.locs, q, off);
    for (int k = 0; k < 3; ++k) {
      EXPECT_LT(std::fabs(a.theta_hat.as_vector()[k] / b.theta_hat.as_vector()[k] - 1.0), 1e-6);
    }
  }
}

TEST(Fit, DefaultInitUsesPooledVariance) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(4, 2, 2.0);
  const ReplicateSet reps(z);
  const auto init = default_init(reps, Bounds{});
  EXPECT_DOUBLE_EQ(init.sigma2, 4.0);
  EXPECT_EQ(init.beta, 0.1);
  EXPECT_EQ(init.nu, 0.5);
}

TEST(FitProfile, WarmStartsAndSingleton) {
  const auto d = small_data(16, 40, 6, 0.1);
  const Bounds b;
  const auto init = default_init(d.reps, b);
  const auto one = fit_profile(d.reps, d.locs, {1.0}, b, init);
  ASSERT_EQ(one.fits.size(), 1u);
  EXPECT_EQ(one.fits[0].theta_hat, fit(d.reps, d.locs, 1.0, b, init).theta_hat);

  const std::vector<double> grid{1.0, 0.99, 0.95, 0.9};
  const auto p = fit_profile(d.reps, d.locs, grid, b, init);
  ASSERT_EQ(p.fits.size(), grid.size());
  EXPECT_EQ(p.fits[0].init, init);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    EXPECT_EQ(p.fits[k].init, p.fits[k - 1].theta_hat);
    EXPECT_EQ(p.fits[k].q, grid[k]);
  }
  EXPECT_THROW(fit_profile(d.reps, d.locs, {0.9, 0.8}, b, init), DomainError);
  EXPECT_THROW(fit_profile(d.reps, d.locs, {1.0, 0.9, 0.95}, b, init), DomainError);
}

TEST(FitProfile, FailedPointDoesNotAbort) {
  // Tiny data with a tiny variance floor: at q = 1 all is well, but the scaled
  // objective exp((l + n)(1 - q)) overflows at q = 0.5 from the warm start.
  auto d = small_data(100, 3, 7);
  const ReplicateSet tiny(d.reps.data() * 1e-7);
  Bounds b;
  b.lower.sigma2 = 1e-14;
  const auto init = default_init(tiny, b);
  const auto p = fit_profile(tiny, d.locs, {1.0, 0.5, 0.4}, b, init);
  ASSERT_EQ(p.fits.size(), 3u);
  EXPECT_TRUE(p.fits[0].error.empty());
  EXPECT_FALSE(p.fits[1].error.empty());
  EXPECT_FALSE(p.fits[1].converged);
  EXPECT_FALSE(p.fits[2].error.empty());
  EXPECT_EQ(p.fits[2].init, p.fits[0].theta_hat);
}

TEST(Fit, QNearOneApproachesMle) {
  const auto d = small_data(25, 60, 8);
  const auto a = fit(d.reps, d.locs, 1.0);
  const auto b = fit(d.reps, d.locs, 0.9999);
  for (int k = 0; k < 3; ++k) {
    EXPECT_LT(std::fabs(b.theta_hat.as_vector()[k] / a.theta_hat.as_vector()[k] - 1.0), 1e-2);
  }
}

// Monte Carlo check of the MLE on the reference design. Slow (about 20 fits).
// The Fisher information of this design gives sd(log kappa_hat) of about 0.165
// at m = 200, so roughly 44% of seeds are expected within 10%; the 90% target
// below is not reachable at this sample size and the test is expected to fail.
TEST(Fit, CleanDataKappaWithinTenPercent) {
  const MaternParams truth{1.0, 0.1, 0.5};
  int good = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    sim::SimConfig cfg;
    cfg.theta = truth;
    cfg.n = 100;
    cfg.m = 200;
    cfg.seed = 1000 + static_cast<std::uint64_t>(s);
    const auto data = sim::simulate(cfg);
    const auto r = fit(data.reps, data.locs, 1.0);
    const double k = kappa(r.theta_hat);
    if (std::fabs(k / kappa(truth) - 1.0) <= 0.1) ++good;
    std::cout << "seed " << cfg.seed << ": kappa_hat = " << k << "\n";
  }
  EXPECT_GE(good, 18) << good << " of " << seeds << " seeds within 10%";
}
