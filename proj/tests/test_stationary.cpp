#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "mmbm/closed_forms.hpp"
#include "mmbm/distribution.hpp"
#include "mmbm/stationary.hpp"
#include "util.hpp"

using mmbm::Model;
using mmbm::SolvedStationary;
using mmbm::solve_stationary;
using mmbm::solve_stationary_full;
using mmbm::StationaryDistribution;

namespace {

Model raw_two_state(double q12, double q21, Eigen::Vector2d mu,
                    Eigen::Vector2d sigma, Eigen::Vector2d a,
                    Eigen::Vector2d b) {
  Eigen::MatrixXd q(2, 2);
  q << -q12, q12, q21, -q21;
  return Model{q, mu, sigma, a, b};
}

Model single_state(double mu, double sigma, double a, double b) {
  return Model{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, mu),
               Eigen::VectorXd::Constant(1, sigma),
               Eigen::VectorXd::Constant(1, a),
               Eigen::VectorXd::Constant(1, b)};
}

double sup_cdf_distance(const StationaryDistribution& x,
                        const StationaryDistribution& y, int grid = 200) {
  double worst = 0.0;
  for (int i = 0; i < x.model.n(); ++i) {
    for (int g = 0; g < grid; ++g) {
      double z = x.model.a(i) +
                 (x.model.b(i) - x.model.a(i)) * g / (grid - 1.0);
      worst = std::max(worst,
                       std::abs(x.evaluate_cdf(z, i) - y.evaluate_cdf(z, i)));
    }
  }
  return worst;
}

// Worst violation of the defining system: interior balance residual plus
// entry/exit boundary rows plus gluing (value and slope) across interior
// breakpoints. Used to show the solved coefficients are the unique minimum.
double system_violation(const SolvedStationary& sol) {
  StationaryDistribution dist = sol.to_distribution();
  const Model& m = sol.model;
  double worst = mmbm::balance_residual(dist, 200);
  auto side_value = [&](int k, int i, double z, int d) {
    const mmbm::IntervalBasis& basis = sol.bases[static_cast<size_t>(k) - 1];
    int r = sol.partition.index_in_active(k, i);
    std::complex<double> v =
        (basis.mode_row(r, z, d) * sol.coeffs[static_cast<size_t>(k) - 1])(0,
                                                                           0);
    return v.real() + basis.part_known(r, z, d);
  };
  for (int i = 0; i < m.n(); ++i) {
    if (m.in_e_plus(i))
      worst = std::max(worst, std::abs(dist.rep(i, m.a(i), 0)));
    if (m.in_e_minus(i))
      worst = std::max(worst, std::abs(dist.rep(i, m.b(i), 0) - sol.pi(i)));
    // Gluing rows, evaluated from both neighboring intervals at the same
    // breakpoint.
    for (int k = 1; k < sol.partition.K(); ++k) {
      double l = sol.partition.hi(k);
      if (sol.partition.index_in_active(k, i) < 0 ||
          sol.partition.index_in_active(k + 1, i) < 0)
        continue;
      worst = std::max(worst, std::abs(side_value(k, i, l, 0) -
                                       side_value(k + 1, i, l, 0)));
      if (m.sigma(i) > 0.0)
        worst = std::max(worst, std::abs(side_value(k, i, l, 1) -
                                         side_value(k + 1, i, l, 1)));
    }
  }
  return worst;
}

void expect_distribution_sane(const StationaryDistribution& d) {
  const Model& m = d.model;
  double total = 0.0;
  for (int i = 0; i < m.n(); ++i) {
    EXPECT_NEAR(d.evaluate_cdf(m.b(i), i), d.pi(i), 1e-9) << "state " << i;
    total += d.evaluate_cdf(m.b(i), i);
    double prev = -1e-12;
    for (int g = 0; g <= 400; ++g) {
      double z = m.a(i) + (m.b(i) - m.a(i)) * g / 400.0;
      double v = d.evaluate_cdf(z, i);
      EXPECT_GE(v - prev, -1e-9) << "state " << i << " z=" << z;
      prev = v;
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  Eigen::VectorXd mass = mmbm::moments(d, 0);
  for (int i = 0; i < m.n(); ++i) EXPECT_NEAR(mass(i), d.pi(i), 1e-9);
}

template <typename Fn>
void expect_error_code(Fn fn, mmbm::ErrorCode want) {
  try {
    fn();
    FAIL() << "expected an error with code " << mmbm::error_code_name(want);
  } catch (const mmbm::Error& e) {
    EXPECT_EQ(e.code(), want) << e.what();
  }
}

}  // namespace

TEST(StationarySingleState, MatchesAnalyticForm) {
  StationaryDistribution d =
      solve_stationary(single_state(-1.0, std::sqrt(2.0), 0.0, 1.0));
  StationaryDistribution ref =
      mmbm::cf_single_state(-1.0, std::sqrt(2.0), 0.0, 1.0);
  EXPECT_LE(sup_cdf_distance(d, ref), 1e-10);
  EXPECT_LE(mmbm::balance_residual(d, 1000), 1e-12);
  EXPECT_TRUE(d.atoms.empty());
}

TEST(StationarySingleState, PureDownDriftCollapsesToLowerAtom) {
  StationaryDistribution d =
      solve_stationary(single_state(-0.7, 0.0, 0.3, 1.0));
  ASSERT_EQ(d.atoms.size(), 1u);
  EXPECT_EQ(d.atoms[0].state, 0);
  EXPECT_DOUBLE_EQ(d.atoms[0].location, 0.3);
  EXPECT_NEAR(d.atoms[0].mass, 1.0, 1e-12);
  EXPECT_NEAR(d.evaluate_cdf(0.3, 0), 1.0, 1e-12);
  EXPECT_NEAR(d.evaluate_cdf(0.9, 0), 1.0, 1e-12);
}

TEST(StationarySingleState, PureUpDriftCollapsesToUpperAtom) {
  StationaryDistribution d = solve_stationary(single_state(0.7, 0.0, 0.3, 1.0));
  ASSERT_EQ(d.atoms.size(), 1u);
  EXPECT_EQ(d.atoms[0].state, 0);
  EXPECT_DOUBLE_EQ(d.atoms[0].location, 1.0);
  EXPECT_NEAR(d.atoms[0].mass, 1.0, 1e-12);
  EXPECT_NEAR(d.evaluate_cdf(1.0 - 1e-9, 0), 0.0, 1e-12);
  EXPECT_NEAR(d.evaluate_cdf(1.0, 0), 1.0, 1e-12);
}

TEST(StationarySingleState, NearUniformMean) {
  StationaryDistribution d = solve_stationary(single_state(-1e-6, 1.0, 0, 1));
  EXPECT_NEAR(mmbm::moments(d, 1)(0), 0.5, 1e-4);
}

TEST(StationaryDegenerate, ZeroMeanDriftOnFullActiveIntervalThrows) {
  // kappa = 0 with distinct upper barriers: passes input validation, fails
  // at the spectral stage with a double zero mode.
  Model m = raw_two_state(1.0, 1.0, {-1.0, 1.0}, {1.0, 1.0}, {0.0, 0.0},
                          {1.0, 2.0});
  expect_error_code([&] { solve_stationary(m); },
                    mmbm::ErrorCode::DegenerateZeroMode);
}

TEST(StationaryDegenerate, AllInertThrows) {
  Model m = raw_two_state(1.0, 1.0, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.5},
                          {1.0, 2.0});
  expect_error_code([&] { solve_stationary(m); },
                    mmbm::ErrorCode::DegenerateModel);
}

TEST(StationaryOracle, CommonTwoStateEquivalence) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<mmbm::TwoStateCommonParams> draws;
  draws.push_back({-0.5, 1.0, 1.0, 1.0, 1.0, 2.0});
  while (draws.size() < 11) {
    mmbm::TwoStateCommonParams p;
    p.mu = -1.5 + 3.0 * unit(rng);
    if (std::abs(p.mu) < 0.1) continue;
    p.sigma = 0.5 + 1.3 * unit(rng);
    p.q12 = 0.3 + 1.9 * unit(rng);
    p.q21 = 0.3 + 1.9 * unit(rng);
    p.b1 = 0.4 + unit(rng);
    p.b2 = p.b1 + 0.4 + 1.1 * unit(rng);
    draws.push_back(p);
  }
  for (const auto& p : draws) {
    StationaryDistribution ref = mmbm::cf_common_two_state(p);
    Model m = raw_two_state(p.q12, p.q21, {p.mu, p.mu}, {p.sigma, p.sigma},
                            {0.0, 0.0}, {p.b1, p.b2});
    StationaryDistribution d = solve_stationary(m);
    EXPECT_LE(sup_cdf_distance(d, ref), 1e-8)
        << "mu=" << p.mu << " sigma=" << p.sigma << " b1=" << p.b1;
    EXPECT_TRUE(d.atoms.empty());
  }
}

TEST(StationaryOracle, NondiffusiveState1Equivalence) {
  std::mt19937_64 rng(23456);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Model> draws;
  draws.push_back(raw_two_state(1.0, 1.0, {-1.0, 0.5}, {0.0, 1.0},
                                {0.0, 0.0}, {1.0, 2.0}));
  while (draws.size() < 11) {
    double q12 = 0.4 + 1.6 * unit(rng), q21 = 0.4 + 1.6 * unit(rng);
    double mu1 = -(0.4 + 1.6 * unit(rng)), mu2 = -1.0 + 2.2 * unit(rng);
    double pi1 = q21 / (q12 + q21);
    if (pi1 * mu1 + (1 - pi1) * mu2 > -0.05) continue;
    double b1 = 0.5 + 0.7 * unit(rng);
    draws.push_back(raw_two_state(q12, q21, {mu1, mu2},
                                  {0.0, 0.6 + 0.9 * unit(rng)}, {0.0, 0.0},
                                  {b1, b1 + 0.5 + 0.8 * unit(rng)}));
  }
  for (const auto& m : draws) {
    StationaryDistribution ref = mmbm::cf_nodiff_state1(m);
    StationaryDistribution d = solve_stationary(m);
    EXPECT_LE(sup_cdf_distance(d, ref), 1e-8) << "mu1=" << m.mu(0);
    ASSERT_EQ(d.atoms.size(), 1u);
    EXPECT_EQ(d.atoms[0].state, 0);
    EXPECT_DOUBLE_EQ(d.atoms[0].location, 0.0);
    EXPECT_NEAR(d.atoms[0].mass, ref.atoms[0].mass, 1e-8);
  }
}

TEST(StationaryOracle, NondiffusiveState2Equivalence) {
  std::mt19937_64 rng(34567);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Model> draws;
  draws.push_back(raw_two_state(1.0, 1.0, {-2.0, 1.0}, {1.0, 0.0},
                                {0.0, 0.0}, {1.0, 2.0}));
  while (draws.size() < 11) {
    double q12 = 0.4 + 1.6 * unit(rng), q21 = 0.4 + 1.6 * unit(rng);
    double mu1 = -(0.3 + 2.2 * unit(rng)), mu2 = 0.2 + unit(rng);
    double pi1 = q21 / (q12 + q21);
    if (pi1 * mu1 + (1 - pi1) * mu2 > -0.05) continue;
    double b1 = 0.5 + 0.7 * unit(rng);
    draws.push_back(raw_two_state(q12, q21, {mu1, mu2},
                                  {0.6 + 0.9 * unit(rng), 0.0}, {0.0, 0.0},
                                  {b1, b1 + 0.5 + 0.8 * unit(rng)}));
  }
  for (const auto& m : draws) {
    StationaryDistribution ref = mmbm::cf_nodiff_state2(m);
    StationaryDistribution d = solve_stationary(m);
    EXPECT_LE(sup_cdf_distance(d, ref), 1e-8) << "mu1=" << m.mu(0);
    ASSERT_EQ(d.atoms.size(), 1u);
    EXPECT_EQ(d.atoms[0].state, 1);
    EXPECT_DOUBLE_EQ(d.atoms[0].location, m.b(1));
    EXPECT_NEAR(d.atoms[0].mass, ref.atoms[0].mass, 1e-8);
  }
}

TEST(StationarySolver, TranslationEquivariance) {
  Model base = raw_two_state(1.0, 1.3, {-0.8, -0.8}, {1.1, 1.1}, {0.0, 0.0},
                             {1.0, 2.0});
  Model shifted = raw_two_state(1.0, 1.3, {-0.8, -0.8}, {1.1, 1.1},
                                {5.0, 5.0}, {6.0, 7.0});
  StationaryDistribution d0 = solve_stationary(base);
  StationaryDistribution d5 = solve_stationary(shifted);
  double worst = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int g = 0; g < 200; ++g) {
      double z = base.a(i) + (base.b(i) - base.a(i)) * g / 199.0;
      worst = std::max(worst, std::abs(d0.evaluate_cdf(z, i) -
                                       d5.evaluate_cdf(z + 5.0, i)));
    }
  EXPECT_LE(worst, 1e-10);
}

TEST(StationarySolver, PerturbedCoefficientsViolateTheSystem) {
  std::vector<Model> models;
  models.push_back(raw_two_state(1.0, 1.0, {-0.5, -0.5}, {1.0, 1.0},
                                 {0.0, 0.0}, {1.0, 2.0}));
  models.push_back(raw_two_state(1.0, 1.0, {-1.0, 0.5}, {0.0, 1.0},
                                 {0.0, 0.0}, {1.0, 2.0}));
  models.push_back(raw_two_state(1.0, 1.0, {-2.0, 1.0}, {1.0, 0.0},
                                 {0.0, 0.0}, {1.0, 2.0}));
  models.push_back(single_state(-1.0, std::sqrt(2.0), 0.0, 1.0));
  {
    Eigen::MatrixXd q(3, 3);
    q << -1, 1, 0, 0, -1, 1, 1, 0, -1;
    Eigen::Vector3d mu(-1.0, 0.6, 0.3), sig(1.0, 0.0, 0.8);
    Eigen::Vector3d a(0.0, 0.2, 0.0), b(1.5, 2.0, 1.0);
    models.push_back(Model{q, mu, sig, a, b});
  }
  for (const auto& m : models) {
    SolvedStationary sol = solve_stationary_full(m);
    EXPECT_LE(system_violation(sol), 1e-8);
    for (size_t k = 0; k < sol.coeffs.size(); ++k)
      for (long j = 0; j < sol.coeffs[k].size(); ++j) {
        SolvedStationary bent = sol;
        bent.coeffs[k](j) += 1e-3;
        EXPECT_GE(system_violation(bent), 1e-6)
            << "interval " << k + 1 << " mode " << j;
      }
  }
}

TEST(StationarySolver, RandomModelsSatisfyTheBalanceSystem) {
  std::mt19937_64 rng(777);
  for (int t = 0; t < 20; ++t) {
    Model m = testutil::random_model(rng, 1 + (t % 4), /*mixed_sigma=*/true);
    SolvedStationary sol = solve_stationary_full(m);
    StationaryDistribution d = sol.to_distribution();
    double bound = 1e-6 * std::max(1.0, m.max_rate());
    EXPECT_LE(mmbm::balance_residual(d, 1000), bound) << "draw " << t;
    expect_distribution_sane(d);
    for (const auto& atom : d.atoms)
      EXPECT_GE(atom.mass, -1e-9) << "draw " << t;
    EXPECT_LT(sol.condition_estimate, 1e14);
  }
}
