#include "mmbm/spectral.hpp"

#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "mmbm/decomposition.hpp"
#include "util.hpp"

using mmbm::Error;
using mmbm::ErrorCode;
using mmbm::Model;
using mmbm::PencilKind;
using mmbm::QuadraticPencil;

namespace {

Model raw_model(std::vector<std::vector<double>> q, std::vector<double> mu,
                std::vector<double> sigma) {
  const int n = static_cast<int>(mu.size());
  Model m;
  m.q.resize(n, n);
  m.mu.resize(n);
  m.sigma.resize(n);
  m.a = Eigen::VectorXd::Zero(n);
  m.b = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    m.mu(i) = mu[static_cast<size_t>(i)];
    m.sigma(i) = sigma[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j)
      m.q(i, j) = q[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  return m;
}

std::vector<double> sorted_real_modes(const mmbm::JordanPair& jp) {
  std::vector<double> out;
  for (int i = 0; i < jp.modes(); ++i) {
    EXPECT_NEAR(jp.lambda(i).imag(), 0.0, 1e-10);
    out.push_back(jp.lambda(i).real());
  }
  return out;
}

}  // namespace

TEST(BuildPencil, StationarySingleState) {
  Model m = raw_model({{0}}, {-1}, {std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0}, PencilKind::Stationary);
  EXPECT_DOUBLE_EQ(p.a2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.a1(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.a0(0, 0), 0.0);
  EXPECT_EQ(p.expected_modes, 2);
  EXPECT_TRUE(p.full_active);

  auto jp = mmbm::solve_pencil(p);
  auto modes = sorted_real_modes(jp);
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0], -1.0, 1e-12);
  EXPECT_NEAR(modes[1], 0.0, 1e-12);
}

TEST(BuildPencil, CommonParameterTwoStateFactorsIntoKnownModes) {
  // Both states share mu=-1, sigma^2=2; the determinant factors into
  // (l^2+l)(l^2+l-2), so the modes are {-2,-1,0,1}.
  Model m = raw_model({{-1, 1}, {1, -1}}, {-1, -1},
                      {std::sqrt(2.0), std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0, 1}, PencilKind::Stationary);
  EXPECT_EQ(p.expected_modes, 4);
  auto modes = sorted_real_modes(mmbm::solve_pencil(p));
  ASSERT_EQ(modes.size(), 4u);
  EXPECT_NEAR(modes[0], -2.0, 1e-10);
  EXPECT_NEAR(modes[1], -1.0, 1e-10);
  EXPECT_NEAR(modes[2], 0.0, 1e-10);
  EXPECT_NEAR(modes[3], 1.0, 1e-10);
}

TEST(BuildPencil, DividendSingleStateSymmetricRoots) {
  Model m = raw_model({{0}}, {0}, {std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0}, PencilKind::Dividend, 0.5);
  EXPECT_DOUBLE_EQ(p.a0(0, 0), -0.5);
  EXPECT_FALSE(p.full_active);
  auto modes = sorted_real_modes(mmbm::solve_pencil(p));
  ASSERT_EQ(modes.size(), 2u);
  double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(modes[0], -r, 1e-12);
  EXPECT_NEAR(modes[1], r, 1e-12);
}

TEST(SolvePencil, ScalarUnitRoots) {
  Model m = raw_model({{0}}, {0}, {std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0}, PencilKind::Dividend, 1.0);
  auto jp = mmbm::solve_pencil(p);
  auto modes = sorted_real_modes(jp);
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0], -1.0, 1e-12);
  EXPECT_NEAR(modes[1], 1.0, 1e-12);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(std::abs(jp.gamma(0, c)), 1.0, 1e-12);
    EXPECT_GT(jp.gamma(0, c).real(), 0.0);
  }
}

TEST(SolvePencil, SubGeneratorScalarInterval) {
  // Active set {2nd state} of a two-state chain: a0 = q22 = -q21 = -2, mu2=0,
  // sigma2^2=2 gives l^2 - 2 = 0.
  Model m = raw_model({{-1, 1}, {2, -2}}, {1, 0}, {1, std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {1}, PencilKind::Stationary);
  EXPECT_FALSE(p.full_active);
  auto modes = sorted_real_modes(mmbm::solve_pencil(p));
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0], -std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(modes[1], std::sqrt(2.0), 1e-12);
}

TEST(SolvePencil, MixedSigmaDropsOneMode) {
  Model m = raw_model({{-1, 1}, {1, -1}}, {-1, 0.5}, {0, 1});
  QuadraticPencil p = mmbm::build_pencil(m, {0, 1}, PencilKind::Stationary);
  EXPECT_EQ(p.expected_modes, 3);
  auto jp = mmbm::solve_pencil(p);
  EXPECT_EQ(jp.modes(), 3);
}

TEST(SolvePencil, DoubleZeroModeOnFullActiveIntervalRejected) {
  Model m = raw_model({{-1, 1}, {1, -1}}, {1, -1}, {1, 1});
  QuadraticPencil p = mmbm::build_pencil(m, {0, 1}, PencilKind::Stationary);
  try {
    mmbm::solve_pencil(p);
    FAIL() << "expected DegenerateZeroMode";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateZeroMode);
  }
}

TEST(SolvePencil, DefectiveRepeatedModeRejected) {
  // Synthetic pencil l^2 I + N with N nilpotent: quadruple eigenvalue 0 with a
  // one-dimensional eigenspace.
  QuadraticPencil p;
  p.active = {0, 1};
  p.a2 = Eigen::MatrixXd::Identity(2, 2);
  p.a1 = Eigen::MatrixXd::Zero(2, 2);
  p.a0 = Eigen::MatrixXd::Zero(2, 2);
  p.a0(0, 1) = 1.0;
  p.expected_modes = 4;
  p.coef_scale = 1.0;
  try {
    mmbm::solve_pencil(p);
    FAIL() << "expected NotSemisimple";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSemisimple);
  }
}

TEST(SolvePencil, CountMismatchOnWrongExpectedDegree) {
  Model m = raw_model({{0}}, {0}, {std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0}, PencilKind::Dividend, 1.0);
  p.expected_modes = 3;
  try {
    mmbm::solve_pencil(p);
    FAIL() << "expected CountMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CountMismatch);
  }
}

TEST(SolvePencil, ComplexModesComeInExactConjugatePairs) {
  // Synthetic scalar pencil l^2 + 1 with modes +-i.
  QuadraticPencil p;
  p.active = {0};
  p.a2 = Eigen::MatrixXd::Ones(1, 1);
  p.a1 = Eigen::MatrixXd::Zero(1, 1);
  p.a0 = Eigen::MatrixXd::Ones(1, 1);
  p.expected_modes = 2;
  p.coef_scale = 1.0;
  auto jp = mmbm::solve_pencil(p);
  ASSERT_EQ(jp.modes(), 2);
  EXPECT_EQ(jp.lambda(0), std::conj(jp.lambda(1)));
  EXPECT_EQ(jp.gamma(0, 0), std::conj(jp.gamma(0, 1)));
  EXPECT_NEAR(std::abs(jp.lambda(0) - std::complex<double>(0, -1)), 0.0,
              1e-12);

  // A conjugate-symmetric coefficient vector produces a real solution.
  std::complex<double> c(0.37, -1.21);
  for (double z : {-0.3, 0.0, 0.7}) {
    std::complex<double> w = jp.gamma(0, 0) * std::exp(jp.lambda(0) * z) * c +
                             jp.gamma(0, 1) * std::exp(jp.lambda(1) * z) *
                                 std::conj(c);
    EXPECT_NEAR(w.imag(), 0.0, 1e-12);
  }
}

TEST(SolvePencil, RandomPencilsSatisfyDefiningProperty) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int checked = 0;
  for (int rep = 0; rep < 200; ++rep) {
    int n = 1 + static_cast<int>(rng() % 4);
    Model m = testutil::random_model(rng, n, rep % 2 == 0);
    auto part = mmbm::compute_partition(m);
    for (int k = 1; k <= part.K(); ++k) {
      bool dividend = rep % 3 == 0;
      double delta = 0.1 + unif(rng);
      QuadraticPencil p = mmbm::build_pencil(
          m, part.active_set(k),
          dividend ? PencilKind::Dividend : PencilKind::Stationary, delta);
      auto jp = mmbm::solve_pencil(p);
      ASSERT_EQ(jp.modes(), p.expected_modes);

      double lam_scale = 1.0;
      for (int i = 0; i < jp.modes(); ++i)
        lam_scale = std::max(lam_scale, std::abs(jp.lambda(i)));
      Eigen::MatrixXcd resid =
          p.a2.cast<std::complex<double>>() * jp.gamma *
              jp.lambda.array().square().matrix().asDiagonal() +
          p.a1.cast<std::complex<double>>() * jp.gamma *
              jp.lambda.asDiagonal() +
          p.a0.cast<std::complex<double>>() * jp.gamma;
      EXPECT_LE(resid.cwiseAbs().maxCoeff(),
                1e-10 * p.coef_scale * std::max(1.0, lam_scale * lam_scale));

      // Sorted by (Re, Im); complex modes have exact conjugate twins.
      for (int i = 1; i < jp.modes(); ++i) {
        EXPECT_TRUE(jp.lambda(i - 1).real() < jp.lambda(i).real() ||
                    (jp.lambda(i - 1).real() == jp.lambda(i).real() &&
                     jp.lambda(i - 1).imag() <= jp.lambda(i).imag()));
      }
      Eigen::VectorXcd u(jp.modes());
      for (int i = 0; i < jp.modes(); ++i) {
        if (jp.lambda(i).imag() == 0.0) {
          u(i) = std::complex<double>(unif(rng) - 0.5, 0.0);
          continue;
        }
        int twin = -1;
        for (int j = 0; j < jp.modes(); ++j)
          if (j != i && jp.lambda(j) == std::conj(jp.lambda(i))) twin = j;
        ASSERT_GE(twin, 0) << "missing conjugate twin";
        EXPECT_EQ(jp.gamma.col(twin), jp.gamma.col(i).conjugate());
        if (jp.lambda(i).imag() > 0.0) {
          u(i) = std::complex<double>(unif(rng) - 0.5, unif(rng) - 0.5);
          u(twin) = std::conj(u(i));
        }
      }
      for (double t : {0.0, 0.4, 1.0}) {
        double z = part.lo(k) + t * (part.hi(k) - part.lo(k));
        double zr = 0.5 * (part.lo(k) + part.hi(k));
        Eigen::VectorXcd w =
            jp.gamma *
            ((jp.lambda.array() * (z - zr)).exp() * u.array()).matrix();
        EXPECT_LE(w.imag().cwiseAbs().maxCoeff(), 1e-10);
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(ParticularSolution, ZeroForcingIsZero) {
  Model m = raw_model({{-1, 1}, {1, -1}}, {-1, -1},
                      {std::sqrt(2.0), std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0, 1}, PencilKind::Stationary);
  auto w = mmbm::particular_solution(p, Eigen::VectorXd::Zero(2),
                                     Eigen::MatrixXd(2, 0),
                                     Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(w.alpha0.isZero(0.0));
  EXPECT_TRUE(w.beta.isZero(0.0));
}

TEST(ParticularSolution, SaturatedNeighborForcesConstantPi) {
  // Upper interval where only state 2 is active: forcing -q12*pi1 against
  // a0 = -q21 yields the constant pi2 by the balance identity.
  Model m = raw_model({{-1, 1}, {2, -2}}, {-1, -1}, {1, 1});
  Eigen::VectorXd pi = mmbm::stationary_vector(m.q);
  QuadraticPencil p = mmbm::build_pencil(m, {1}, PencilKind::Stationary);
  Eigen::VectorXd r0(1);
  r0 << -m.q(0, 1) * pi(0);
  auto w = mmbm::particular_solution(p, r0, Eigen::MatrixXd(1, 0),
                                     Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(w.alpha0(0), pi(1), 1e-14);
  EXPECT_DOUBLE_EQ(w.beta(0), 0.0);
}

TEST(ParticularSolution, AffineForcingWithUnknownColumns) {
  Model m = raw_model({{0}}, {1}, {std::sqrt(2.0)});
  QuadraticPencil p = mmbm::build_pencil(m, {0}, PencilKind::Dividend, 0.5);
  // a1 = +1, a0 = -0.5; rhs(z) = 1 + 3 c + 2 z.
  Eigen::VectorXd r0(1), r1(1);
  Eigen::MatrixXd rc(1, 1);
  r0 << 1;
  r1 << 2;
  rc << 3;
  auto w = mmbm::particular_solution(p, r0, rc, r1);
  EXPECT_NEAR(w.beta(0), -4.0, 1e-12);
  EXPECT_NEAR(w.alpha0(0), -10.0, 1e-12);
  EXPECT_NEAR(w.alpha_c(0, 0), -6.0, 1e-12);
}

TEST(ParticularSolution, SingularGeneratorBlockRejected) {
  Model m = raw_model({{-1, 1}, {1, -1}}, {-1, -1}, {1, 1});
  QuadraticPencil p = mmbm::build_pencil(m, {0, 1}, PencilKind::Stationary);
  Eigen::VectorXd r0(2);
  r0 << 1, 0;
  try {
    mmbm::particular_solution(p, r0, Eigen::MatrixXd(2, 0),
                              Eigen::VectorXd::Zero(2));
    FAIL() << "expected SingularA0";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularA0);
  }
}

TEST(IntervalBasis, ModeRowMatchesDerivativeDefinition) {
  Model m = raw_model({{0}}, {0}, {std::sqrt(2.0)});
  mmbm::IntervalBasis basis;
  basis.jp = mmbm::solve_pencil(
      mmbm::build_pencil(m, {0}, PencilKind::Dividend, 1.0));
  basis.z_ref = 0.5;
  basis.lo = 0.0;
  basis.hi = 1.0;
  basis.active = {0};
  basis.part.alpha0 = Eigen::VectorXd::Zero(1);
  basis.part.alpha_c = Eigen::MatrixXd(1, 0);
  basis.part.beta = Eigen::VectorXd::Zero(1);

  double z = 0.7;
  for (int d = 0; d <= 2; ++d) {
    auto row = basis.mode_row(0, z, d);
    for (int k = 0; k < basis.jp.modes(); ++k) {
      std::complex<double> lam = basis.jp.lambda(k);
      std::complex<double> expect = basis.jp.gamma(0, k) *
                                    std::pow(lam, d) *
                                    std::exp(lam * (z - basis.z_ref));
      EXPECT_NEAR(std::abs(row(k) - expect), 0.0, 1e-13);
    }
  }
  EXPECT_DOUBLE_EQ(basis.part_known(0, z, 0), 0.0);
}
