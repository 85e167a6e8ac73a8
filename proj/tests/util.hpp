#pragma once

#include <random>

#include <Eigen/Dense>

#include "mmbm/decomposition.hpp"
#include "mmbm/model.hpp"

namespace testutil {

inline Eigen::MatrixXd random_irreducible_q(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) {
        q(i, j) = u(rng);
        off += q(i, j);
      }
    q(i, i) = -off;
  }
  return q;
}

// Random valid stationary model with optionally mixed sigma = 0 states.
inline mmbm::Model random_model(std::mt19937_64& rng, int n, bool mixed_sigma) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> umu(-1.5, 1.5);
  std::uniform_real_distribution<double> usig(0.4, 1.6);
  std::uniform_real_distribution<double> ulen(0.4, 1.5);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Eigen::MatrixXd q = random_irreducible_q(rng, n);
    Eigen::VectorXd mu(n), sigma(n), a(n), b(n);
    for (int i = 0; i < n; ++i) {
      mu(i) = umu(rng);
      if (std::abs(mu(i)) < 0.15) mu(i) = mu(i) < 0 ? -0.15 : 0.15;
      sigma(i) = (mixed_sigma && u01(rng) < 0.4) ? 0.0 : usig(rng);
      a(i) = std::round(u01(rng) * 4.0) / 2.0;       // grid {0, .5, ..., 2}
      b(i) = a(i) + std::max(0.5, std::round(ulen(rng) * 4.0) / 2.0);
    }
    try {
      mmbm::Model m = mmbm::validate_model(q, mu, sigma, a, b);
      mmbm::compute_partition(m);  // reject draws with coverage gaps
      return m;
    } catch (const mmbm::Error&) {
      continue;  // kappa too small or degenerate draw; retry
    }
  }
  throw std::runtime_error("random_model failed to draw a valid model");
}

}  // namespace testutil
