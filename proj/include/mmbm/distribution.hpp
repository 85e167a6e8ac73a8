#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mmbm/decomposition.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"

namespace mmbm {

struct Atom {
  int state = 0;
  double location = 0.0;
  double mass = 0.0;
};

// Joint stationary law of (Z, J). The piecewise representation rep(i, z, d)
// is the d-th derivative of the absolutely continuous part's antiderivative
// inside [a(i), b(i)]; an atom at the upper barrier (sigma=0, mu>0 states)
// sits on top of rep(i, b(i), 0), an atom at the lower barrier (sigma=0,
// mu<0 states) is already included since rep(i, a(i), 0) equals its mass.
struct StationaryDistribution {
  Model model;
  Eigen::VectorXd pi;
  std::vector<Atom> atoms;
  std::function<double(int state, double z, int deriv)> rep;

  double atom_mass_at(int i, double location) const {
    for (const auto& at : atoms)
      if (at.state == i && at.location == location) return at.mass;
    return 0.0;
  }

  // CDF with the clamp convention: outside [a(i), b(i)] the barrier value is
  // returned; at b(i) the upper atom (if any) is included.
  double evaluate_cdf(double z, int i) const {
    double zc = std::min(std::max(z, model.a(i)), model.b(i));
    double v = rep(i, zc, 0);
    if (zc == model.b(i)) v += atom_mass_at(i, model.b(i));
    return v;
  }

  // Density of the absolutely continuous part; zero outside the barriers.
  double evaluate_density(double z, int i) const {
    if (z < model.a(i) || z > model.b(i)) return 0.0;
    return rep(i, z, 1);
  }

  // Plain joint CDF P[Z <= z, J = i]: zero strictly below a(i) (the mass of a
  // lower atom only counts from a(i) on), pi(i) from b(i) on. This is the
  // evaluation the balance operator needs for not-yet-started states.
  double plain_cdf(double z, int i) const {
    if (z < model.a(i)) return 0.0;
    if (z >= model.b(i)) return pi(i);
    return rep(i, z, 0);
  }
};

// Expected discounted payout until ruin, V(z, j), represented piecewise on
// [0, b(j)]; above b(j) the immediate-payout convention V(b(j),j) + (z-b(j))
// applies.
struct ValueFunction {
  Model model;
  double delta = 0.0;
  std::function<double(int state, double z, int deriv)> rep;

  double evaluate_value(double z, int j) const {
    if (z <= 0.0) return rep(j, 0.0, 0);
    if (z > model.b(j)) return rep(j, model.b(j), 0) + (z - model.b(j));
    return rep(j, z, 0);
  }

  double evaluate_derivative(double z, int j) const {
    if (z > model.b(j)) return 1.0;
    return rep(j, std::max(z, 0.0), 1);
  }
};

namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on the
// recurrence; machine precision for the orders used here.
inline void gauss_legendre(int n, std::vector<double>& x,
                           std::vector<double>& w) {
  x.assign(static_cast<size_t>(n), 0.0);
  w.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      double step = p1 / dp;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    x[static_cast<size_t>(i)] = -t;
    x[static_cast<size_t>(n - 1 - i)] = t;
    double wi = 2.0 / ((1.0 - t * t) * dp * dp);
    w[static_cast<size_t>(i)] = wi;
    w[static_cast<size_t>(n - 1 - i)] = wi;
  }
}

}  // namespace detail

// Max absolute residual of the stationary balance system
//   (sigma^2(i)/2) P_i'' - mu(i) P_i' + sum_j q_ji P_j(z) = 0
// with P_j evaluated as the plain joint CDF, over interior grid points of
// every interval (breakpoints are avoided by a 1e-9 inset since densities may
// jump there).
inline double balance_residual(const StationaryDistribution& d,
                               int grid_per_interval = 1000) {
  const Model& m = d.model;
  IntervalPartition p = compute_partition(m);
  double worst = 0.0;
  for (int k = 1; k <= p.K(); ++k) {
    double lo = p.lo(k), hi = p.hi(k);
    double inset = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    double zlo = lo + inset, zhi = hi - inset;
    for (int g = 0; g < grid_per_interval; ++g) {
      double z = zlo + (zhi - zlo) * g / (grid_per_interval - 1.0);
      for (int i : p.active_set(k)) {
        double r = 0.5 * m.sigma(i) * m.sigma(i) * d.rep(i, z, 2) -
                   m.mu(i) * d.rep(i, z, 1);
        for (int j = 0; j < m.n(); ++j) r += m.q(j, i) * d.plain_cdf(z, j);
        worst = std::max(worst, std::abs(r));
      }
    }
  }
  return worst;
}

// E[(Z*)^r; J* = i] per state: atoms plus Gauss-Legendre quadrature of
// z^r dPi_i piece by piece between breakpoints.
inline Eigen::VectorXd moments(const StationaryDistribution& d, int r) {
  if (r < 0 || r > 4)
    throw Error(ErrorCode::ConfigInvalid, "moments",
                "moment order must be between 0 and 4");
  const Model& m = d.model;
  IntervalPartition p = compute_partition(m);
  std::vector<double> gx, gw;
  detail::gauss_legendre(48, gx, gw);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.n());
  for (const auto& at : d.atoms)
    out(at.state) += std::pow(at.location, r) * at.mass;
  for (int k = 1; k <= p.K(); ++k) {
    double lo = p.lo(k), hi = p.hi(k);
    double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    for (int i : p.active_set(k)) {
      double acc = 0.0;
      for (size_t g = 0; g < gx.size(); ++g) {
        double z = c + h * gx[g];
        acc += gw[g] * std::pow(z, r) * d.rep(i, z, 1);
      }
      out(i) += h * acc;
    }
  }
  return out;
}

}  // namespace mmbm
