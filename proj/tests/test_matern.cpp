#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"
#include "oracles.hpp"

using namespace mlqe;

namespace {

MaternParams with(MaternParams t, int k, double v) {
  auto x = t.as_vector();
  x[k] = v;
  return MaternParams::from_vector(x);
}

double cov_at(double h, const MaternParams& t) { return matern_cov(h, t); }

// Central differences of matern_cov, step relative to each parameter.
Eigen::Vector3d fd_grad(double h, const MaternParams& t) {
  Eigen::Vector3d g;
  for (int k = 0; k < 3; ++k) {
    const double x = t.as_vector()[k];
    g[k] = oracle::central([&](double v) { return cov_at(h, with(t, k, v)); }, x, 1e-5 * x);
  }
  return g;
}

Eigen::Matrix3d fd_hess(double h, const MaternParams& t) {
  Eigen::Matrix3d H;
  const auto x = t.as_vector();
  for (int j = 0; j < 3; ++j) {
    const double sj = 1e-3 * x[j];
    H(j, j) = oracle::central2([&](double v) { return cov_at(h, with(t, j, v)); }, x[j], sj);
    for (int k = j + 1; k < 3; ++k) {
      const double sk = 1e-3 * x[k];
      auto f = [&](double dj, double dk) {
        auto y = x;
        y[j] += dj;
        y[k] += dk;
        return cov_at(h, MaternParams::from_vector(y));
      };
      H(j, k) = (f(sj, sk) - f(sj, -sk) - f(-sj, sk) + f(-sj, -sk)) / (4.0 * sj * sk);
      H(k, j) = H(j, k);
    }
  }
  return H;
}

}  // namespace

TEST(MaternCov, ExamplesAndClosedForms) {
  EXPECT_EQ(matern_cov(0.0, {2.0, 0.1, 0.7}), 2.0);
  EXPECT_NEAR(matern_cov(0.1, {1.0, 0.1, 0.5}), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(matern_cov(0.1, {1.0, 0.1, 1.5}), 2.0 * std::exp(-1.0), 1e-15);
  for (double h = 1e-4; h <= 2.0; h *= 1.3) {
    const double x = h / 0.2;
    EXPECT_LT(oracle::rel_err(matern_cov(h, {1.7, 0.2, 0.5}), 1.7 * std::exp(-x)), 1e-10);
    EXPECT_LT(oracle::rel_err(matern_cov(h, {1.7, 0.2, 1.5}), 1.7 * (1 + x) * std::exp(-x)), 1e-10);
  }
}

TEST(MaternCov, RangeMonotoneAndScaling) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> us(0.1, 5), ub(0.01, 1), un(0.1, 5), uh(1e-4, 3);
  for (int i = 0; i < 300; ++i) {
    const MaternParams t{us(rng), ub(rng), un(rng)};
    const double h = uh(rng);
    const double m = matern_cov(h, t);
    EXPECT_GT(m, 0.0);
    EXPECT_LE(m, t.sigma2);
    EXPECT_GE(m, matern_cov(h * 1.05, t));
    EXPECT_NEAR(matern_cov(h, {3.0 * t.sigma2, t.beta, t.nu}), 3.0 * m, 1e-13 * m);
  }
}

TEST(MaternCov, InvalidParameters) {
  EXPECT_THROW(matern_cov(0.1, {0.0, 0.1, 0.5}), DomainError);
  EXPECT_THROW(matern_cov(0.1, {1.0, -0.1, 0.5}), DomainError);
  EXPECT_THROW(matern_cov(0.1, {1.0, 0.1, 6.0}), DomainError);
  EXPECT_THROW(matern_cov(-0.1, {1.0, 0.1, 0.5}), DomainError);
  EXPECT_THROW(matern_grad(0.1, {1.0, 0.1, std::nan("")}), DomainError);
}

TEST(MaternGrad, ExamplesAndFiniteDifferences) {
  const MaternParams t{1.0, 0.1, 0.5};
  const auto g = matern_grad(0.1, t);
  EXPECT_NEAR(g[kBeta], 10.0 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(g[kSigma2], matern_cov(0.1, t), 1e-15);
  EXPECT_EQ(matern_grad(0.0, t), Eigen::Vector3d(1.0, 0.0, 0.0));
  EXPECT_EQ(matern_hess(0.0, t), Eigen::Matrix3d::Zero());

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> us(0.3, 3), ub(0.03, 0.5), un(0.2, 3.5), ux(0.05, 8);
  for (int i = 0; i < 100; ++i) {
    const MaternParams p{us(rng), ub(rng), un(rng)};
    const double h = ux(rng) * p.beta;
    const auto an = matern_grad(h, p);
    EXPECT_NEAR(an[kSigma2], matern_cov(h, p) / p.sigma2, 1e-15);
    const auto fd = fd_grad(h, p);
    EXPECT_LT(oracle::rel_err(an[kSigma2], fd[kSigma2]), 1e-6);
    EXPECT_LT(oracle::rel_err(an[kBeta], fd[kBeta]), 1e-6);
    EXPECT_LT(oracle::rel_err(an[kNu], fd[kNu], 1e-6 * p.sigma2), 1e-4);
  }
}

TEST(MaternHess, StructureAndFiniteDifferences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> us(0.3, 3), ub(0.03, 0.5), un(0.2, 3.5), ux(0.05, 8);
  for (int i = 0; i < 60; ++i) {
    const MaternParams p{us(rng), ub(rng), un(rng)};
    const double h = ux(rng) * p.beta;
    const auto H = matern_hess(h, p);
    const auto g = matern_grad(h, p);
    EXPECT_EQ(H(kSigma2, kSigma2), 0.0);
    EXPECT_EQ(H, H.transpose());
    EXPECT_NEAR(H(kSigma2, kBeta), g[kBeta] / p.sigma2, 1e-14 * std::fabs(g[kBeta]) + 1e-300);
    EXPECT_NEAR(H(kSigma2, kNu), g[kNu] / p.sigma2, 1e-14 * std::fabs(g[kNu]) + 1e-300);
    const auto fd = fd_hess(h, p);
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        if (j == 0 && k == 0) continue;
        EXPECT_LT(oracle::rel_err(H(j, k), fd(j, k), 1e-6 * p.sigma2), 1e-4)
            << "entry " << j << k << " h=" << h << " theta=" << p.sigma2 << "," << p.beta << ","
            << p.nu;
      }
    }
  }
}

TEST(LocationSet, RejectsBadInput) {
  EXPECT_THROW(LocationSet(std::vector<Point>{}), DataError);
  EXPECT_THROW(LocationSet({{0.1, 0.1}, {0.1, 0.1}}), DataError);
  EXPECT_THROW(LocationSet({{0.1, std::nan("")}}), DataError);
  const LocationSet ok({{0.0, 0.0}, {0.3, 0.4}});
  EXPECT_DOUBLE_EQ(ok.distance(0, 1), 0.5);
}

TEST(BuildCov, SmallCases) {
  const MaternParams t{1.0, 0.1, 0.5};
  const auto c1 = build_cov(LocationSet({{0.5, 0.5}}), {2.5, 0.1, 0.5});
  ASSERT_EQ(c1.rows(), 1);
  EXPECT_EQ(c1(0, 0), 2.5);
  const LocationSet two({{0.2, 0.2}, {0.3, 0.2}});
  const auto c2 = build_cov(two, t);
  EXPECT_NEAR(c2(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_EQ(c2(0, 1), c2(1, 0));
  EXPECT_EQ(c2(0, 0), 1.0);

  const auto g = build_cov_grad(two, t);
  const auto sg = matern_grad(two.distance(0, 1), t);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(g[static_cast<std::size_t>(k)](0, 1), sg[k]);
    EXPECT_EQ(g[static_cast<std::size_t>(k)](1, 0), sg[k]);
  }
}

TEST(BuildCov, SpdOnRandomLocationSets) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(0, 1), un(0.2, 2.5), ub(0.02, 0.3);
  std::uniform_int_distribution<int> un_pts(1, 64);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Point> pts(static_cast<std::size_t>(un_pts(rng)));
    for (auto& p : pts) p = {u(rng), u(rng)};
    const LocationSet locs(pts);
    const MaternParams t{1.0, ub(rng), un(rng)};
    const auto c = build_cov(locs, t);
    EXPECT_EQ(c, c.transpose());
    EXPECT_TRUE((c.diagonal().array() == 1.0).all());
    CholFactor chol;
    EXPECT_TRUE(chol.compute(c, t.sigma2)) << "rep " << rep;
  }
}

TEST(BuildCov, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point> pts(9);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const LocationSet locs(pts);
  const MaternParams t{1.3, 0.2, 1.1};
  const auto d = build_cov_derivs(locs, t, true);
  EXPECT_LT((d.cov - build_cov(locs, t)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((d.grad[kSigma2] - build_cov(locs, t) / t.sigma2).cwiseAbs().maxCoeff(), 1e-15);
  for (int k = 0; k < 3; ++k) {
    const double x = t.as_vector()[k];
    const double s = 1e-5 * x;
    const Eigen::MatrixXd fd =
        (build_cov(locs, with(t, k, x + s)) - build_cov(locs, with(t, k, x - s))) / (2 * s);
    const double tol = k == kNu ? 1e-4 : 1e-6;
    for (Eigen::Index i = 0; i < fd.rows(); ++i) {
      for (Eigen::Index j = 0; j < fd.cols(); ++j) {
        EXPECT_LT(oracle::rel_err(d.grad[static_cast<std::size_t>(k)](i, j), fd(i, j), 1e-8), tol);
      }
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const auto& m = d.hess[hess_index(a, b)];
      EXPECT_EQ(m, m.transpose());
      EXPECT_EQ(m(0, 1), matern_hess(locs.distance(0, 1), t)(a, b));
    }
  }
  EXPECT_EQ(hess_index(2, 1), hess_index(1, 2));
  EXPECT_EQ(hess_index(2, 2), 5u);
}
