#ifndef MLQE_SPECFUN_HPP
#define MLQE_SPECFUN_HPP

// Special functions for the Matern kernel: the modified Bessel function of the
// second kind K_nu with its argument derivatives, order derivatives of
// x^nu K_nu(x), and the gamma-family functions (log-gamma, digamma, trigamma).
//
// K_nu uses Temme's series for x < 2 and Steed's continued fraction (CF2) for
// x >= 2, both evaluated at the reduced order |mu| <= 1/2 and carried to nu by
// forward recurrence, which is stable for K.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mlqe/errors.hpp"

namespace mlqe::specfun {

/// Value returned in place of K_nu(x) when it exceeds the double range.
inline constexpr double kSaturated = std::numeric_limits<double>::max();

struct BesselPair {
  double k_nu = 0.0;       // K_nu(x)
  double k_nu_plus1 = 0.0; // K_{nu+1}(x)
  bool saturated = false;  // true if either value overflowed and was clamped
};

namespace detail {

// Taylor coefficients of 1/Gamma(z) = sum_{k>=1} c_k z^k (Abramowitz & Stegun 6.1.34).
inline constexpr std::array<double, 26> kInvGammaTaylor = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

struct TemmeGammas {
  double gam1;   // (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
  double gam2;   // (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
  double gampl;  // 1/Gamma(1+mu)
  double gammi;  // 1/Gamma(1-mu)
};

// Valid for |mu| <= 1/2. Both series are even in mu, so they are summed in mu^2.
inline TemmeGammas temme_gammas(double mu) {
  const double mu2 = mu * mu;
  double gam1 = 0.0;
  double gam2 = 0.0;
  double pw = 1.0;
  // gam2 = sum_{k odd} c_k mu^{k-1}; gam1 = -sum_{k even} c_k mu^{k-2}
  for (std::size_t j = 0; j < kInvGammaTaylor.size(); j += 2) {
    gam2 += kInvGammaTaylor[j] * pw;
    gam1 -= kInvGammaTaylor[j + 1] * pw;
    pw *= mu2;
  }
  return {gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1};
}

inline void check_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

}  // namespace detail

/// K_nu(x) and K_{nu+1}(x) for nu >= 0, x > 0.
inline BesselPair bessel_k_pair(double nu, double x) {
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  constexpr double kPi = std::numbers::pi;

  detail::check_positive(x, "bessel_k");
  if (!std::isfinite(nu)) {
    throw DomainError("bessel_k: order must be finite");
  }
  nu = std::fabs(nu);

  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;
  const double mu2 = mu * mu;
  const double xi = 1.0 / x;
  const double xi2 = 2.0 * xi;

  double k_mu = 0.0;
  double k_mu1 = 0.0;
  if (x < 2.0) {
    const double x2 = 0.5 * x;
    const double pimu = kPi * mu;
    const double fact = std::fabs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::fabs(e) < kEps ? 1.0 : std::sinh(e) / e;
    const auto g = detail::temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i <= kMaxIter; ++i) {
      const double di = i;
      ff = (di * ff + p + q) / (di * di - mu2);
      c *= d / di;
      p /= di - mu;
      q /= di + mu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - di * ff);
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    k_mu = sum;
    k_mu1 = sum1 * xi2;
  } else {
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i <= kMaxIter; ++i) {
      a -= 2 * i;
      c = -a * c / (i + 1.0);
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::fabs(dels / s) < kEps) break;
    }
    h = a1 * h;
    k_mu = std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
    k_mu1 = k_mu * (mu + x + 0.5 - h) * xi;
  }

  BesselPair out;
  for (int i = 1; i <= nl; ++i) {
    const double next = (mu + i) * xi2 * k_mu1 + k_mu;
    k_mu = k_mu1;
    k_mu1 = next;
  }
  out.k_nu = k_mu;
  out.k_nu_plus1 = k_mu1;
  if (!std::isfinite(out.k_nu) || out.k_nu > kSaturated) {
    out.k_nu = kSaturated;
    out.saturated = true;
  }
  if (!std::isfinite(out.k_nu_plus1) || out.k_nu_plus1 > kSaturated) {
    out.k_nu_plus1 = kSaturated;
    out.saturated = true;
  }
  return out;
}

/// K_nu(x). Symmetric in nu. Saturates to kSaturated on overflow; use
/// bessel_k_pair to observe the saturation flag.
inline double bessel_k(double nu, double x) { return bessel_k_pair(nu, x).k_nu; }

/// First and second argument derivatives along with the value itself.
struct BesselDerivs {
  double k = 0.0;    // K_nu(x)
  double kp = 0.0;   // K'_nu(x)
  double kpp = 0.0;  // K''_nu(x)
  bool saturated = false;
};

/// K, K', K'' at (nu, x). K' = -(K_{nu-1} + K_{nu+1})/2 = (nu/x) K_nu - K_{nu+1};
/// K'' follows from the modified Bessel equation.
inline BesselDerivs bessel_k_derivs(double nu, double x) {
  nu = std::fabs(nu);
  const auto pair = bessel_k_pair(nu, x);
  BesselDerivs d;
  d.saturated = pair.saturated;
  d.k = pair.k_nu;
  d.kp = (nu / x) * pair.k_nu - pair.k_nu_plus1;
  d.kpp = ((x * x + nu * nu) * d.k - x * d.kp) / (x * x);
  return d;
}

/// dK_nu(x)/dx. Always negative.
inline double bessel_k_dx(double nu, double x) { return bessel_k_derivs(nu, x).kp; }

/// d^2 K_nu(x)/dx^2.
inline double bessel_k_dxx(double nu, double x) { return bessel_k_derivs(nu, x).kpp; }

/// Step policy for the central differences in the order nu.
struct NuStencil {
  double rel_step = 1e-4;  // step = rel_step * max(1, nu), halved to nu/2 near 0

  double step_at(double nu) const {
    double s = rel_step * std::fmax(1.0, nu);
    if (nu - s <= 0.0) s = 0.5 * nu;
    return s;
  }
};

/// x^nu K_nu(x).
inline double xnu_k(double nu, double x) { return std::pow(x, nu) * bessel_k_derivs(nu, x).k; }

/// x^nu K'_nu(x).
inline double xnu_kprime(double nu, double x) { return std::pow(x, nu) * bessel_k_dx(nu, x); }

/// First (order = 1) or second (order = 2) derivative in nu of x^nu K_nu(x)
/// by central differences.
inline double dnu_xnu_k(double nu, double x, int order, NuStencil stencil = {}) {
  detail::check_positive(x, "dnu_xnu_k");
  detail::check_positive(nu, "dnu_xnu_k");
  const double s = stencil.step_at(nu);
  const double gp = xnu_k(nu + s, x);
  const double gm = xnu_k(nu - s, x);
  if (order == 1) return (gp - gm) / (2.0 * s);
  if (order == 2) return (gp - 2.0 * xnu_k(nu, x) + gm) / (s * s);
  throw DomainError("dnu_xnu_k: order must be 1 or 2");
}

/// Derivative in nu of x^nu K'_nu(x), same stencil as dnu_xnu_k.
inline double dnu_xnu_kprime(double nu, double x, NuStencil stencil = {}) {
  detail::check_positive(x, "dnu_xnu_kprime");
  detail::check_positive(nu, "dnu_xnu_kprime");
  const double s = stencil.step_at(nu);
  return (xnu_kprime(nu + s, x) - xnu_kprime(nu - s, x)) / (2.0 * s);
}

/// The three order derivatives of x^nu K_nu(x) from one three-point stencil:
/// d/dnu and d^2/dnu^2 of x^nu K_nu(x), and d/dnu of x^nu K'_nu(x).
/// Agrees bit-for-bit with dnu_xnu_k and dnu_xnu_kprime.
struct NuDerivs {
  double g_nu = 0.0;
  double g_nunu = 0.0;
  double gprime_nu = 0.0;
};

inline NuDerivs nu_derivs(double nu, double x, double g_center, NuStencil stencil = {}) {
  const double s = stencil.step_at(nu);
  const auto up = bessel_k_derivs(nu + s, x);
  const auto dn = bessel_k_derivs(nu - s, x);
  const double pu = std::pow(x, nu + s);
  const double pd = std::pow(x, nu - s);
  NuDerivs d;
  d.g_nu = (pu * up.k - pd * dn.k) / (2.0 * s);
  d.g_nunu = (pu * up.k - 2.0 * g_center + pd * dn.k) / (s * s);
  d.gprime_nu = (pu * up.kp - pd * dn.kp) / (2.0 * s);
  return d;
}

/// log Gamma(x), x > 0.
inline double log_gamma(double x) {
  detail::check_positive(x, "log_gamma");
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);  // reentrant; std::lgamma writes signgam
#else
  return std::lgamma(x);
#endif
}

/// Digamma Psi(x) for x > 0: upward recurrence to x >= 10, then the
/// asymptotic expansion.
inline double digamma(double x) {
  detail::check_positive(x, "digamma");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / (x * x);
  const double tail =
      r * (1.0 / 12 -
           r * (1.0 / 120 -
                r * (1.0 / 252 -
                     r * (1.0 / 240 - r * (1.0 / 132 - r * (691.0 / 32760 - r / 12.0))))));
  return acc + std::log(x) - 0.5 / x - tail;
}

/// Trigamma Psi'(x) for x > 0.
inline double trigamma(double x) {
  detail::check_positive(x, "trigamma");
  double acc = 0.0;
  while (x < 10.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double r = 1.0 / (x * x);
  const double series =
      1.0 / 6 -
      r * (1.0 / 30 -
           r * (1.0 / 42 - r * (1.0 / 30 - r * (5.0 / 66 - r * (691.0 / 2730 - r * 7.0 / 6)))));
  return acc + 1.0 / x + 0.5 * r + r * series / x;
}

}  // namespace mlqe::specfun

#endif  // MLQE_SPECFUN_HPP
