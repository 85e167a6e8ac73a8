#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <functional>

#include <Eigen/Dense>

#include "mmbm/distribution.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"

// Explicit solutions for special model families, used as independent oracles
// against the general solvers. Each form validates its own applicability
// conditions and refuses out-of-case parameters instead of extrapolating.

namespace mmbm {

// Two environment states sharing one drift and one diffusion coefficient;
// lower barriers at zero, upper barriers b1 < b2. mu = 0 is excluded (the
// hyperbolic representation degenerates there).
struct TwoStateCommonParams {
  double mu = -0.5;
  double sigma = 1.0;
  double q12 = 1.0;
  double q21 = 1.0;
  double b1 = 1.0;
  double b2 = 2.0;
};

struct CommonTwoStateConstants {
  double pi1 = 0, pi2 = 0;
  double Delta = 0;   // mu / sigma^2
  double Theta1 = 0;  // -sqrt(mu^2 + 2 (q12+q21) sigma^2) / sigma^2
  double Theta2 = 0;  // -sqrt(mu^2 + 2 q21 sigma^2) / sigma^2
  double k1 = 0, k2 = 0, k3 = 0;
  double pi2_at_b1 = 0;
};

namespace detail {

inline void require_case(bool ok, const char* op, const char* what) {
  if (!ok) throw Error(ErrorCode::SignConstraintViolated, op, what);
}

// G^d exp(tG) for the 2x2 generator-shaped G = [[-alpha, alpha],
// [beta, -beta]] via its explicit eigenpairs (0, (1,1)) and
// (-(alpha+beta), (alpha,-beta)).
inline Eigen::Matrix2d generator_pow_exp(double alpha, double beta, double t,
                                         int d) {
  double s = -(alpha + beta);
  Eigen::Matrix2d v;
  v << 1, alpha, 1, -beta;
  Eigen::Matrix2d vinv;
  vinv << beta, alpha, 1, -1;
  vinv /= alpha + beta;
  Eigen::Vector2d diag(d == 0 ? 1.0 : 0.0, std::pow(s, d) * std::exp(t * s));
  return v * diag.asDiagonal() * vinv;
}

// d-th z-derivative of e^{Delta (z-b1)} sinh(theta z) / sinh(theta b1).
inline double lower_sinh_ratio(double Delta, double theta, double b1, double z,
                               int d) {
  double e = std::exp(Delta * (z - b1));
  double sh = std::sinh(theta * z), ch = std::cosh(theta * z);
  double num = 0;
  switch (d) {
    case 0: num = sh; break;
    case 1: num = Delta * sh + theta * ch; break;
    default:
      num = Delta * Delta * sh + 2 * Delta * theta * ch + theta * theta * sh;
  }
  return e * num / std::sinh(theta * b1);
}

// d-th z-derivative of e^{Delta (z-b1)} sinh(Theta (b2-z)) /
// sinh(Theta (b2-b1)).
inline double upper_sinh_ratio(double Delta, double Theta, double b1,
                               double b2, double z, int d) {
  double e = std::exp(Delta * (z - b1));
  double w = b2 - z;
  double sh = std::sinh(Theta * w), ch = std::cosh(Theta * w);
  double num = 0;
  switch (d) {
    case 0: num = sh; break;
    case 1: num = Delta * sh - Theta * ch; break;
    default:
      num = Delta * Delta * sh - 2 * Delta * Theta * ch + Theta * Theta * sh;
  }
  return e * num / std::sinh(Theta * (b2 - b1));
}

inline Eigen::Matrix2d inverse_2x2(const Eigen::Matrix2d& m, const char* op) {
  double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (std::abs(det) < 1e-14 * scale * scale)
    throw Error(ErrorCode::NumericallySingular, op,
                "2x2 boundary matrix is numerically singular",
                {{"det", det}});
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

}  // namespace detail

inline CommonTwoStateConstants cf_common_two_state_constants(
    const TwoStateCommonParams& p) {
  const char* op = "cf_common_two_state";
  detail::require_case(p.sigma > 0, op, "sigma must be positive");
  detail::require_case(p.mu != 0, op, "mu must be nonzero");
  detail::require_case(p.q12 > 0 && p.q21 > 0, op,
                       "switching rates must be positive");
  detail::require_case(0 < p.b1 && p.b1 < p.b2, op,
                       "barriers must satisfy 0 < b1 < b2");
  CommonTwoStateConstants c;
  double qs = p.q12 + p.q21, s2 = p.sigma * p.sigma;
  c.pi1 = p.q21 / qs;
  c.pi2 = p.q12 / qs;
  c.Delta = p.mu / s2;
  c.Theta1 = -std::sqrt(p.mu * p.mu + 2 * qs * s2) / s2;
  c.Theta2 = -std::sqrt(p.mu * p.mu + 2 * p.q21 * s2) / s2;
  // Row 2 of P1 (cR R + cS S) P1^-1 applied to the canonical basis, with
  // R = [[pi2,-pi2],[-pi1,pi1]] and S = [[pi1,pi2],[pi1,pi2]] the spectral
  // projectors of the common-parameter mode matrix.
  double cR = c.Theta1 / std::tanh(c.Theta1 * p.b1);
  double cS = c.Delta / std::tanh(c.Delta * p.b1);
  c.k1 = c.pi2 * (cR * (-c.pi1) + cS * c.pi1) / c.pi1;
  c.k2 = cR * c.pi1 + cS * c.pi2;
  c.k3 = c.Theta2 / std::tanh(c.Theta2 * (p.b2 - p.b1));
  c.pi2_at_b1 =
      (c.pi2 * (c.k3 - c.Delta) - c.pi1 * c.k1) / (c.k2 + c.k3);
  return c;
}

// Joint stationary CDF for the shared-parameter two-state family: a
// hyperbolic-projector form below b1, a single sinh layer on (b1, b2].
inline StationaryDistribution cf_common_two_state(
    const TwoStateCommonParams& p) {
  CommonTwoStateConstants c = cf_common_two_state_constants(p);
  Eigen::Matrix2d q;
  q << -p.q12, p.q12, p.q21, -p.q21;
  Model m{q, Eigen::Vector2d(p.mu, p.mu), Eigen::Vector2d(p.sigma, p.sigma),
          Eigen::Vector2d(0, 0), Eigen::Vector2d(p.b1, p.b2)};

  Eigen::Vector2d v(c.pi1, c.pi2_at_b1);
  Eigen::Matrix2d r_proj, s_proj;
  r_proj << c.pi2, -c.pi2, -c.pi1, c.pi1;
  s_proj << c.pi1, c.pi2, c.pi1, c.pi2;
  Eigen::Matrix2d p1 = Eigen::Vector2d(c.pi1, c.pi2).asDiagonal();
  Eigen::Matrix2d p1inv =
      Eigen::Vector2d(1 / c.pi1, 1 / c.pi2).asDiagonal();
  Eigen::Vector2d w_r = p1 * r_proj * p1inv * v;
  Eigen::Vector2d w_s = p1 * s_proj * p1inv * v;

  double b1 = p.b1, b2 = p.b2;
  double Delta = c.Delta, Theta1 = c.Theta1, Theta2 = c.Theta2;
  double pi2 = c.pi2, cu = c.pi2 - c.pi2_at_b1;

  StationaryDistribution dist;
  dist.model = m;
  dist.pi = Eigen::Vector2d(c.pi1, c.pi2);
  dist.rep = [=](int i, double z, int d) -> double {
    if (i == 0 || z <= b1)
      return detail::lower_sinh_ratio(Delta, Theta1, b1, z, d) * w_r(i) +
             detail::lower_sinh_ratio(Delta, Delta, b1, z, d) * w_s(i);
    double t = detail::upper_sinh_ratio(Delta, Theta2, b1, b2, z, d);
    return (d == 0 ? pi2 : 0.0) - cu * t;
  };
  return dist;
}

// Law of the clamping cycle: eta is the rate of down-clamps at b1 in state 1,
// H the distribution of the pre-clamp level on (b1, b2].
struct RegenerationResult {
  double eta = 0;
  std::function<double(double)> H;
  std::function<double(double)> H_prime;
  double b1 = 0, b2 = 0;
};

inline RegenerationResult cf_regeneration(const TwoStateCommonParams& p) {
  CommonTwoStateConstants c = cf_common_two_state_constants(p);
  RegenerationResult r;
  r.eta = p.q21 * (c.pi2 - c.pi2_at_b1);
  r.b1 = p.b1;
  r.b2 = p.b2;
  double Delta = c.Delta, Theta2 = c.Theta2, b1 = p.b1, b2 = p.b2;
  r.H = [=](double z) -> double {
    if (z <= b1) return 0.0;
    if (z >= b2) return 1.0;
    return 1.0 - detail::upper_sinh_ratio(Delta, Theta2, b1, b2, z, 0);
  };
  r.H_prime = [=](double z) -> double {
    if (z < b1 || z > b2) return 0.0;
    return -detail::upper_sinh_ratio(Delta, Theta2, b1, b2, z, 1);
  };
  return r;
}

// Constants of the no-diffusion-in-state-1 family (mu1 < 0, sigma1 = 0,
// sigma2 > 0, negative asymptotic drift, barriers [0,b1] and [0,b2]).
struct NodiffState1Constants {
  double pi1 = 0, pi2 = 0;
  double delta1 = 0, lambda1_plus = 0, gamma1_plus = 0;
  double delta2 = 0, lambda12_minus = 0, lambda21_minus = 0;
  double Delta2 = 0, Theta2 = 0;
  double k1 = 0, k2 = 0, k3 = 0;
  double pi2_at_b1 = 0;
  double atom_at_zero = 0;
};

namespace detail {

struct NodiffState1Solution {
  NodiffState1Constants c;
  Eigen::Matrix2d gamma_hat;
  Eigen::Vector2d w;  // C^-1 P1^-1 (pi1, Pi2(b1))
  double b1 = 0, b2 = 0;
};

inline NodiffState1Solution solve_nodiff_state1(const Model& m) {
  const char* op = "cf_nodiff_state1";
  require_case(m.n() == 2, op, "needs exactly two states");
  require_case(m.a(0) == 0 && m.a(1) == 0, op, "lower barriers must be zero");
  require_case(m.b(0) > 0 && m.b(0) < m.b(1), op,
               "upper barriers must satisfy 0 < b(1) < b(2)");
  require_case(m.sigma(0) == 0 && m.mu(0) < 0, op,
               "state 1 must drift down with zero diffusion");
  require_case(m.sigma(1) > 0, op, "state 2 must have positive diffusion");
  double q12 = m.q(0, 1), q21 = m.q(1, 0);
  require_case(q12 > 0 && q21 > 0, op, "switching rates must be positive");
  NodiffState1Solution sol;
  NodiffState1Constants& c = sol.c;
  c.pi1 = q21 / (q12 + q21);
  c.pi2 = q12 / (q12 + q21);
  double mu1 = m.mu(0), mu2 = m.mu(1), s2 = m.sigma(1) * m.sigma(1);
  require_case(c.pi1 * mu1 + c.pi2 * mu2 < 0, op,
               "asymptotic drift must be negative");
  double b1 = m.b(0), b2 = m.b(1);
  sol.b1 = b1;
  sol.b2 = b2;

  c.delta1 = std::sqrt(mu1 * mu1 * mu2 * mu2 + mu1 * mu2 * q12 * s2 +
                       2 * mu1 * mu1 * q21 * s2 + 0.25 * q12 * q12 * s2 * s2);
  c.lambda1_plus = mu2 / s2 - q12 / (2 * mu1) + c.delta1 / (mu1 * s2);
  c.gamma1_plus = q12 / (q12 + mu1 * c.lambda1_plus);
  c.lambda12_minus = -q12 / mu1;
  double t = mu1 * mu2 + 0.5 * q12 * s2;
  c.delta2 = std::sqrt(2 * q21 * mu1 * mu1 * s2 + t * t);
  c.lambda21_minus = mu2 / s2 + q12 / (2 * mu1) - c.delta2 / (mu1 * s2);
  c.Delta2 = mu2 / s2;
  c.Theta2 = -std::sqrt(mu2 * mu2 + 2 * q21 * s2) / s2;
  c.k3 = c.Theta2 / std::tanh(c.Theta2 * (b2 - b1));

  sol.gamma_hat << 0, c.gamma1_plus, 0, 1;
  Eigen::Matrix2d exp_minus_b1 =
      generator_pow_exp(c.lambda12_minus, c.lambda21_minus, -b1, 0);
  Eigen::Matrix2d cmat =
      sol.gamma_hat * std::exp(c.lambda1_plus * b1) - exp_minus_b1;
  Eigen::Matrix2d cinv = inverse_2x2(cmat, op);
  Eigen::Matrix2d p1 = Eigen::Vector2d(c.pi1, c.pi2).asDiagonal();
  Eigen::Matrix2d p1inv = Eigen::Vector2d(1 / c.pi1, 1 / c.pi2).asDiagonal();
  Eigen::Matrix2d dmin_b1 =
      generator_pow_exp(c.lambda12_minus, c.lambda21_minus, -b1, 1);
  Eigen::Matrix2d bmat =
      p1 *
      (sol.gamma_hat * (c.lambda1_plus * std::exp(c.lambda1_plus * b1)) +
       dmin_b1) *
      cinv * p1inv;
  c.k1 = bmat(1, 0);
  c.k2 = bmat(1, 1);
  // Matching the one-sided derivatives of the state-2 CDF at b1. The left
  // derivative is k1 pi1 + k2 x, the right one (k3 - Delta2)(pi2 - x), so the
  // denominator keeps the -Delta2 term.
  c.pi2_at_b1 = (c.pi2 * (c.k3 - c.Delta2) - c.pi1 * c.k1) /
                (c.k2 + c.k3 - c.Delta2);
  Eigen::Vector2d v(c.pi1, c.pi2_at_b1);
  sol.w = cinv * p1inv * v;
  c.atom_at_zero = c.pi1 * (-sol.w(0) + c.gamma1_plus * sol.w(1));
  return sol;
}

}  // namespace detail

inline NodiffState1Constants cf_nodiff_state1_constants(const Model& m) {
  return detail::solve_nodiff_state1(m).c;
}

// Stationary law when state 1 has pure negative drift (atom at the bottom)
// and state 2 diffuses; pure-exponential representation below b1, sinh layer
// above.
inline StationaryDistribution cf_nodiff_state1(const Model& m) {
  detail::NodiffState1Solution sol = detail::solve_nodiff_state1(m);
  const NodiffState1Constants c = sol.c;
  double b1 = sol.b1, b2 = sol.b2;
  double lam_p = c.lambda1_plus;
  double alpha = c.lambda12_minus, beta = c.lambda21_minus;
  double pi1 = c.pi1, pi2 = c.pi2, cu = c.pi2 - c.pi2_at_b1;
  double Delta2 = c.Delta2, Theta2 = c.Theta2;
  Eigen::Matrix2d gamma_hat = sol.gamma_hat;
  Eigen::Vector2d w = sol.w;

  StationaryDistribution dist;
  dist.model = m;
  dist.pi = Eigen::Vector2d(pi1, pi2);
  dist.atoms = {Atom{0, 0.0, c.atom_at_zero}};
  dist.rep = [=](int i, double z, int d) -> double {
    if (i == 0 || z <= b1) {
      Eigen::Matrix2d plus =
          gamma_hat * (std::pow(lam_p, d) * std::exp(lam_p * z));
      Eigen::Matrix2d minus = detail::generator_pow_exp(alpha, beta, -z, d);
      double sign = (d % 2 == 0) ? -1.0 : 1.0;
      Eigen::Vector2d val = (plus + sign * minus) * w;
      return (i == 0 ? pi1 : pi2) * val(i);
    }
    double t = detail::upper_sinh_ratio(Delta2, Theta2, b1, b2, z, d);
    return (d == 0 ? pi2 : 0.0) - cu * t;
  };
  return dist;
}

// Constants of the no-diffusion-in-state-2 family (sigma1 > 0, mu2 > 0,
// sigma2 = 0, negative asymptotic drift): atom at the top barrier b2.
struct NodiffState2Constants {
  double pi1 = 0, pi2 = 0;
  double delta1 = 0, lambda12_plus = 0, lambda21_plus = 0;
  double delta2 = 0, lambda1_minus = 0, gamma2_minus = 0;
  double c1 = 0;
  double pi2_at_b1 = 0;
  double atom_at_b2 = 0;
};

namespace detail {

inline NodiffState2Constants solve_nodiff_state2(const Model& m) {
  const char* op = "cf_nodiff_state2";
  require_case(m.n() == 2, op, "needs exactly two states");
  require_case(m.a(0) == 0 && m.a(1) == 0, op, "lower barriers must be zero");
  require_case(m.b(0) > 0 && m.b(0) < m.b(1), op,
               "upper barriers must satisfy 0 < b(1) < b(2)");
  require_case(m.sigma(0) > 0, op, "state 1 must have positive diffusion");
  require_case(m.sigma(1) == 0 && m.mu(1) > 0, op,
               "state 2 must drift up with zero diffusion");
  double q12 = m.q(0, 1), q21 = m.q(1, 0);
  require_case(q12 > 0 && q21 > 0, op, "switching rates must be positive");
  NodiffState2Constants c;
  c.pi1 = q21 / (q12 + q21);
  c.pi2 = q12 / (q12 + q21);
  double mu1 = m.mu(0), mu2 = m.mu(1), s1 = m.sigma(0) * m.sigma(0);
  require_case(c.pi1 * mu1 + c.pi2 * mu2 < 0, op,
               "asymptotic drift must be negative");
  double b1 = m.b(0), b2 = m.b(1);

  // The two discriminants of this family coincide.
  double t = mu2 * mu1 + 0.5 * q21 * s1;
  double disc = std::sqrt(2 * q12 * mu2 * mu2 * s1 + t * t);
  c.delta1 = disc;
  c.delta2 = disc;
  c.lambda12_plus = -mu1 / s1 - q21 / (2 * mu2) + disc / (mu2 * s1);
  c.lambda21_plus = q21 / mu2;
  c.lambda1_minus = -mu1 / s1 + q21 / (2 * mu2) - disc / (mu2 * s1);
  c.gamma2_minus = q21 / (q21 - mu2 * c.lambda1_minus);

  Eigen::Vector2d gv(1.0, c.gamma2_minus);
  Eigen::Matrix2d exp_plus_b1 =
      generator_pow_exp(c.lambda12_plus, c.lambda21_plus, b1, 0);
  Eigen::Vector2d diff_b1 =
      std::exp(-c.lambda1_minus * b1) * gv - exp_plus_b1 * gv;
  c.c1 = c.pi1 * diff_b1(0);
  if (std::abs(c.c1) < 1e-300)
    throw Error(ErrorCode::NumericallySingular, op,
                "normalizing constant vanished");
  c.pi2_at_b1 = (c.pi1 / c.c1) * c.pi2 * diff_b1(1);
  c.atom_at_b2 =
      std::exp(-c.lambda21_plus * (b2 - b1)) * (c.pi2 - c.pi2_at_b1);
  return c;
}

}  // namespace detail

inline NodiffState2Constants cf_nodiff_state2_constants(const Model& m) {
  return detail::solve_nodiff_state2(m);
}

// Stationary law when state 2 has pure positive drift (atom at its upper
// barrier) and state 1 diffuses; single exponential with rate q21/mu2 above
// b1.
inline StationaryDistribution cf_nodiff_state2(const Model& m) {
  NodiffState2Constants c = detail::solve_nodiff_state2(m);
  double b1 = m.b(0), b2 = m.b(1);
  double lam_m = c.lambda1_minus;
  double alpha = c.lambda12_plus, beta = c.lambda21_plus;
  double pi1 = c.pi1, pi2 = c.pi2;
  double scale = c.pi1 / c.c1;
  double rate = c.lambda21_plus, cu = c.pi2 - c.pi2_at_b1;
  Eigen::Vector2d gv(1.0, c.gamma2_minus);

  StationaryDistribution dist;
  dist.model = m;
  dist.pi = Eigen::Vector2d(pi1, pi2);
  dist.atoms = {Atom{1, b2, c.atom_at_b2}};
  dist.rep = [=](int i, double z, int d) -> double {
    if (i == 0 || z <= b1) {
      double em = std::pow(-lam_m, d) * std::exp(-lam_m * z);
      Eigen::Vector2d val =
          em * gv - detail::generator_pow_exp(alpha, beta, z, d) * gv;
      return scale * (i == 0 ? pi1 : pi2) * val(i);
    }
    double e = std::exp(-rate * (z - b1));
    if (d == 0) return pi2 - cu * e;
    return -cu * std::pow(-rate, d) * e;
  };
  return dist;
}

// Single-state baseline: reflected Brownian motion on [a, b] with mu != 0.
inline StationaryDistribution cf_single_state(double mu, double sigma,
                                              double a, double b) {
  const char* op = "cf_single_state";
  detail::require_case(sigma > 0, op, "sigma must be positive");
  detail::require_case(mu != 0, op, "mu must be nonzero");
  detail::require_case(a < b, op, "needs a < b");
  double th = 2 * mu / (sigma * sigma);
  double den = std::expm1(th * (b - a));
  Model m{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, mu),
          Eigen::VectorXd::Constant(1, sigma), Eigen::VectorXd::Constant(1, a),
          Eigen::VectorXd::Constant(1, b)};
  StationaryDistribution dist;
  dist.model = m;
  dist.pi = Eigen::VectorXd::Ones(1);
  dist.rep = [=](int, double z, int d) -> double {
    if (d == 0) return std::expm1(th * (z - a)) / den;
    return std::pow(th, d) * std::exp(th * (z - a)) / den;
  };
  return dist;
}

// Dividend-value family: symmetric switching at rate lambda, discount delta,
// positive diffusion in both states, payout barriers b1 < b2, reflection at 0
// replaced by absorption (ruin).
struct DividendTwoStateParams {
  double lambda = 1.0;
  double delta = 0.5;
  double mu1 = 0.5;
  double mu2 = -0.5;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double b1 = 1.0;
  double b2 = 2.0;
};

struct DividendTwoStateConstants {
  std::array<double, 4> roots{};  // quartic roots, ascending
  double A = 0, B = 0, C = 0, D = 0;
  double Theta = 0, DeltaTilde = 0;
  double k1 = 0, k2 = 0, k3 = 0, s = 0;
  double v_at_b1_state1 = 0;
  std::array<int, 2> pair1{}, pair2{};  // root indices entering X1 and X2
};

namespace detail {

struct DividendTwoStateSolution {
  DividendTwoStateConstants c;
  DividendTwoStateParams p;
  Eigen::Matrix2d x1, x1inv, x2, x2inv;
  Eigen::Vector2d j1, j2;  // exponents of the two diagonal blocks
  Eigen::Vector2d kvec;

  Eigen::Matrix2d f_matrix(double z, int d) const {
    Eigen::Vector2d d1(std::pow(j1(0), d) * std::exp(j1(0) * z),
                       std::pow(j1(1), d) * std::exp(j1(1) * z));
    Eigen::Vector2d d2(std::pow(j2(0), d) * std::exp(j2(0) * z),
                       std::pow(j2(1), d) * std::exp(j2(1) * z));
    return x1 * d1.asDiagonal() * x1inv - x2 * d2.asDiagonal() * x2inv;
  }

  // Homogeneous upper-piece solution normalized to f'(b2) = delta/(lambda+
  // delta); divides by mu2, hence the mu2 != 0 precondition.
  double f_upper(double z, int d) const {
    double ld = p.lambda + p.delta;
    double base = -(p.delta / ld) * (p.sigma2 * p.sigma2 / p.mu2);
    double w = p.b2 - z;
    double e = std::exp(c.Theta * w);
    double sh = std::sinh(c.DeltaTilde * w), ch = std::cosh(c.DeltaTilde * w);
    switch (d) {
      case 0: return base * e * ch;
      case 1: return -base * e * (c.Theta * ch + c.DeltaTilde * sh);
      default:
        return base * e *
               (c.Theta * c.Theta * ch + 2 * c.Theta * c.DeltaTilde * sh +
                c.DeltaTilde * c.DeltaTilde * ch);
    }
  }

  // Second homogeneous upper-piece solution with f0(b2)=1, f0'(b2)=0.
  double f0_upper(double z, int d) const {
    double w = p.b2 - z;
    double e = std::exp(c.Theta * w);
    double sh = std::sinh(c.DeltaTilde * w), ch = std::cosh(c.DeltaTilde * w);
    double k = c.DeltaTilde - c.Theta * c.Theta / c.DeltaTilde;
    switch (d) {
      case 0: return e * (ch - (c.Theta / c.DeltaTilde) * sh);
      case 1: return -e * k * sh;
      default: return e * k * (c.Theta * sh + c.DeltaTilde * ch);
    }
  }

  // Affine particular part of the upper piece (the capped state feeds a
  // linear payout term into the state-2 equation).
  double g_upper(double z, int d) const {
    double ld = p.lambda + p.delta;
    switch (d) {
      case 0:
        return p.lambda * z / ld + p.lambda * p.mu2 / (ld * ld) -
               p.lambda * p.b1 / ld;
      case 1: return p.lambda / ld;
      default: return 0.0;
    }
  }
};

inline DividendTwoStateSolution solve_dividend_two_state(
    const DividendTwoStateParams& p) {
  const char* op = "cf_dividend_two_state";
  require_case(p.lambda > 0, op, "switching rate must be positive");
  require_case(p.delta > 0, op, "discount rate must be positive");
  require_case(p.sigma1 > 0 && p.sigma2 > 0, op,
               "both states need positive diffusion");
  require_case(0 < p.b1 && p.b1 < p.b2, op,
               "barriers must satisfy 0 < b1 < b2");
  require_case(p.mu2 != 0, op,
               "mu(2) must be nonzero in this explicit family");
  DividendTwoStateSolution sol;
  sol.p = p;
  DividendTwoStateConstants& c = sol.c;
  double s1 = p.sigma1 * p.sigma1, s2 = p.sigma2 * p.sigma2;
  double ld = p.lambda + p.delta;
  c.A = 2 * p.mu1 / s1 + 2 * p.mu2 / s2;
  c.B = (2 * p.mu1 / s1) * (2 * p.mu2 / s2) - 2 * ld * (1 / s1 + 1 / s2);
  c.C = -4 * ld * (p.mu1 + p.mu2) / (s1 * s2);
  c.D = 4 * p.delta * (2 * p.lambda + p.delta) / (s1 * s2);
  c.Theta = p.mu2 / s2;
  c.DeltaTilde = std::sqrt(c.Theta * c.Theta + 2 * ld / s2);

  // Quartic roots: companion eigenvalues plus two Newton polish steps.
  Eigen::Matrix4d comp = Eigen::Matrix4d::Zero();
  comp(1, 0) = comp(2, 1) = comp(3, 2) = 1.0;
  comp(0, 3) = -c.D;
  comp(1, 3) = -c.C;
  comp(2, 3) = -c.B;
  comp(3, 3) = -c.A;
  Eigen::EigenSolver<Eigen::Matrix4d> es(comp);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::NumericallySingular, op,
                "companion eigensolve failed");
  std::array<std::complex<double>, 4> zr;
  auto quartic = [&](std::complex<double> z) {
    return (((z + c.A) * z + c.B) * z + c.C) * z + c.D;
  };
  auto quartic_der = [&](std::complex<double> z) {
    return ((4.0 * z + 3.0 * c.A) * z + 2.0 * c.B) * z + c.C;
  };
  for (int i = 0; i < 4; ++i) {
    std::complex<double> z = es.eigenvalues()(i);
    for (int it = 0; it < 2; ++it) {
      std::complex<double> dp = quartic_der(z);
      if (std::abs(dp) > 0) z -= quartic(z) / dp;
    }
    zr[static_cast<size_t>(i)] = z;
  }
  double zscale = 1.0;
  for (const auto& z : zr) zscale = std::max(zscale, std::abs(z));
  for (const auto& z : zr)
    if (std::abs(z.imag()) > 1e-8 * zscale)
      throw Error(ErrorCode::RootMultiplicity, op,
                  "characteristic quartic has complex roots",
                  {{"imag", z.imag()}});
  std::array<double, 4> roots{};
  for (int i = 0; i < 4; ++i) roots[static_cast<size_t>(i)] = zr[static_cast<size_t>(i)].real();
  std::sort(roots.begin(), roots.end());
  for (int i = 0; i < 3; ++i)
    if (roots[static_cast<size_t>(i + 1)] - roots[static_cast<size_t>(i)] <
        1e-7 * zscale)
      throw Error(ErrorCode::RootMultiplicity, op,
                  "characteristic quartic has a repeated root",
                  {{"root", roots[static_cast<size_t>(i)]}});
  c.roots = roots;

  // Column attached to a root: first pencil row evaluated at z.
  auto vcol = [&](double z) {
    return Eigen::Vector2d(2 * p.lambda,
                           2 * ld - 2 * p.mu1 * z - s1 * z * z);
  };
  // Split the four roots into two pairs; all admissible pairings span the
  // same null-at-zero family, so pick the best conditioned one.
  const std::array<std::array<int, 4>, 3> pairings = {
      {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}}};
  double best = -1.0;
  std::array<int, 4> chosen = pairings[0];
  for (const auto& pr : pairings) {
    auto score_pair = [&](int ia, int ib) {
      Eigen::Vector2d ca = vcol(roots[static_cast<size_t>(ia)]);
      Eigen::Vector2d cb = vcol(roots[static_cast<size_t>(ib)]);
      double det = ca(0) * cb(1) - ca(1) * cb(0);
      return std::abs(det) / (ca.norm() * cb.norm());
    };
    double sc = std::min(score_pair(pr[0], pr[1]), score_pair(pr[2], pr[3]));
    if (sc > best) {
      best = sc;
      chosen = pr;
    }
  }
  if (best < 1e-12)
    throw Error(ErrorCode::NumericallySingular, op,
                "no well-conditioned root pairing exists");
  c.pair1 = {chosen[0], chosen[1]};
  c.pair2 = {chosen[2], chosen[3]};
  sol.j1 = Eigen::Vector2d(roots[static_cast<size_t>(chosen[0])],
                           roots[static_cast<size_t>(chosen[1])]);
  sol.j2 = Eigen::Vector2d(roots[static_cast<size_t>(chosen[2])],
                           roots[static_cast<size_t>(chosen[3])]);
  sol.x1.col(0) = vcol(sol.j1(0));
  sol.x1.col(1) = vcol(sol.j1(1));
  sol.x2.col(0) = vcol(sol.j2(0));
  sol.x2.col(1) = vcol(sol.j2(1));
  sol.x1inv = inverse_2x2(sol.x1, op);
  sol.x2inv = inverse_2x2(sol.x2, op);

  // Boundary system in (k1, k2, k3, s): marginal payout at b1 in state 1,
  // smooth pasting and continuity of the state-2 value at b1, and the k3
  // normalization enforcing marginal payout at b2 in state 2.
  Eigen::Matrix2d fp_b1 = sol.f_matrix(p.b1, 1);
  Eigen::Matrix2d f_b1 = sol.f_matrix(p.b1, 0);
  Eigen::Matrix4d sys = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  sys(0, 0) = fp_b1(0, 0);
  sys(0, 1) = fp_b1(0, 1);
  rhs(0) = 1.0;
  sys(1, 0) = fp_b1(1, 0);
  sys(1, 1) = fp_b1(1, 1);
  sys(1, 2) = -sol.f_upper(p.b1, 1);
  sys(1, 3) = -sol.f0_upper(p.b1, 1);
  rhs(1) = sol.g_upper(p.b1, 1);
  double ratio = p.lambda / ld;
  sys(2, 0) = f_b1(1, 0) - ratio * f_b1(0, 0);
  sys(2, 1) = f_b1(1, 1) - ratio * f_b1(0, 1);
  sys(2, 2) = -sol.f_upper(p.b1, 0);
  sys(2, 3) = -sol.f0_upper(p.b1, 0);
  rhs(2) = sol.g_upper(p.b1, 0);
  sys(3, 2) = 1.0;
  rhs(3) = 1.0;
  Eigen::FullPivLU<Eigen::Matrix4d> lu(sys);
  if (!lu.isInvertible())
    throw Error(ErrorCode::NumericallySingular, op,
                "boundary system is singular");
  Eigen::Vector4d u = lu.solve(rhs);
  c.k1 = u(0);
  c.k2 = u(1);
  c.k3 = u(2);
  c.s = u(3);
  sol.kvec = Eigen::Vector2d(c.k1, c.k2);
  c.v_at_b1_state1 = f_b1.row(0).dot(sol.kvec);
  return sol;
}

}  // namespace detail

inline DividendTwoStateConstants cf_dividend_two_state_constants(
    const DividendTwoStateParams& p) {
  return detail::solve_dividend_two_state(p).c;
}

// Expected discounted dividends until ruin for the symmetric-switching
// two-state family, as an exponential-pair form below b1 and a hyperbolic
// layer plus affine payout feed on (b1, b2].
inline ValueFunction cf_dividend_two_state(const DividendTwoStateParams& p) {
  detail::DividendTwoStateSolution sol = detail::solve_dividend_two_state(p);
  double b1 = p.b1;
  double ratio = p.lambda / (p.lambda + p.delta);
  double k3 = sol.c.k3, s = sol.c.s, v11 = sol.c.v_at_b1_state1;

  Eigen::Matrix2d q;
  q << -p.lambda, p.lambda, p.lambda, -p.lambda;
  Model m{q, Eigen::Vector2d(p.mu1, p.mu2),
          Eigen::Vector2d(p.sigma1, p.sigma2), Eigen::Vector2d(0, 0),
          Eigen::Vector2d(p.b1, p.b2)};

  ValueFunction vf;
  vf.model = m;
  vf.delta = p.delta;
  vf.rep = [=](int j, double z, int d) -> double {
    if (j == 0 || z <= b1) {
      Eigen::Matrix2d f = sol.f_matrix(z, d);
      return f.row(j).dot(sol.kvec);
    }
    double val = k3 * sol.f_upper(z, d) + s * sol.f0_upper(z, d) +
                 sol.g_upper(z, d);
    if (d == 0) val += ratio * v11;
    return val;
  };
  return vf;
}

// Single-state dividend baseline on [0, b]; handles mu of any sign including
// zero.
inline ValueFunction cf_dividend_single_state(double mu, double sigma,
                                              double delta, double b) {
  const char* op = "cf_dividend_single_state";
  detail::require_case(sigma > 0, op, "sigma must be positive");
  detail::require_case(delta > 0, op, "discount rate must be positive");
  detail::require_case(b > 0, op, "barrier must be positive");
  double s2 = sigma * sigma;
  double disc = std::sqrt(mu * mu + 2 * s2 * delta);
  double rp = (-mu + disc) / s2, rm = (-mu - disc) / s2;
  double cnorm = 1.0 / (rp * std::exp(rp * b) - rm * std::exp(rm * b));
  Model m{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, mu),
          Eigen::VectorXd::Constant(1, sigma), Eigen::VectorXd::Zero(1),
          Eigen::VectorXd::Constant(1, b)};
  ValueFunction vf;
  vf.model = m;
  vf.delta = delta;
  vf.rep = [=](int, double z, int d) -> double {
    return cnorm * (std::pow(rp, d) * std::exp(rp * z) -
                    std::pow(rm, d) * std::exp(rm * z));
  };
  return vf;
}

}  // namespace mmbm
