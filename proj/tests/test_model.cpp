#include "mmbm/model.hpp"

#include <random>

#include <gtest/gtest.h>

#include "util.hpp"

using mmbm::Error;
using mmbm::ErrorCode;
using mmbm::Model;

namespace {

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

Eigen::VectorXd vec2(double x, double y) {
  Eigen::VectorXd v(2);
  v << x, y;
  return v;
}

Model two_state(double q12, double q21, Eigen::VectorXd mu,
                Eigen::VectorXd sigma, Eigen::VectorXd a, Eigen::VectorXd b) {
  return mmbm::validate_model(mat2(-q12, q12, q21, -q21), mu, sigma, a, b);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::ConfigInvalid;
}

TEST(ValidateModel, AcceptsBasicTwoState) {
  Model m = two_state(1, 1, vec2(-1, 1), vec2(1, 1), vec2(0, 0), vec2(1, 2));
  EXPECT_EQ(m.n(), 2);
  EXPECT_DOUBLE_EQ(m.q(0, 0), -1.0);
}

TEST(ValidateModel, RowSumViolation) {
  EXPECT_EQ(code_of([] {
              mmbm::validate_model(mat2(-1, 0.5, 1, -1), vec2(-1, 1),
                                   vec2(1, 1), vec2(0, 0), vec2(1, 2));
            }),
            ErrorCode::RowSumViolation);
}

TEST(ValidateModel, RowSumWithinToleranceIsRenormalized) {
  Eigen::MatrixXd q = mat2(-1, 1, 2, -2);
  q(0, 0) = -1 + 1e-13;  // relative 5e-14 of max rate 2
  Model m = mmbm::validate_model(q, vec2(-1, 1), vec2(1, 1), vec2(0, 0),
                                 vec2(1, 2));
  EXPECT_DOUBLE_EQ(m.q.row(0).sum(), 0.0);
  EXPECT_DOUBLE_EQ(m.q.row(1).sum(), 0.0);
}

TEST(ValidateModel, NegativeRate) {
  EXPECT_EQ(code_of([] {
              mmbm::validate_model(mat2(1, -1, 1, -1), vec2(-1, 1), vec2(1, 1),
                                   vec2(0, 0), vec2(1, 2));
            }),
            ErrorCode::NegativeRate);
}

TEST(ValidateModel, Reducible) {
  EXPECT_EQ(code_of([] {
              mmbm::validate_model(mat2(0, 0, 1, -1), vec2(-1, 1), vec2(1, 1),
                                   vec2(0, 0), vec2(1, 2));
            }),
            ErrorCode::Reducible);
}

TEST(ValidateModel, BarrierOrder) {
  EXPECT_EQ(code_of([] {
              two_state(1, 1, vec2(-1, 1), vec2(1, 1), vec2(0, 3), vec2(1, 2));
            }),
            ErrorCode::BarrierOrder);
}

TEST(ValidateModel, KappaZeroWithCommonBarrierPairRejected) {
  EXPECT_EQ(code_of([] {
              two_state(1, 1, vec2(1, -1), vec2(1, 1), vec2(0, 0), vec2(1, 1));
            }),
            ErrorCode::AllBarriersDegenerateWithKappaZero);
}

TEST(ValidateModel, KappaZeroWithDistinctBarriersIsAcceptedHere) {
  // Staggered barriers keep the model valid at this stage even though the
  // lowest interval is active for every state; the stationary solver rejects
  // that combination when it meets the defective zero mode.
  Model m = two_state(1, 1, vec2(1, -1), vec2(1, 1), vec2(0, 0), vec2(1, 2));
  EXPECT_NEAR(mmbm::asymptotic_drift(m), 0.0, 1e-14);
}

TEST(ValidateModel, AllInertModelIsLegalDespiteZeroDrift) {
  Model m = two_state(1, 1, vec2(0, 0), vec2(0, 0), vec2(0, 0), vec2(1, 2));
  EXPECT_TRUE(m.deterministic_of_j());
}

TEST(ValidateModel, NearCoincidentBarriersRejected) {
  EXPECT_EQ(code_of([] {
              two_state(1, 1, vec2(-1, 1), vec2(1, 1), vec2(0, 0),
                        vec2(1, 1 + 1e-14));
            }),
            ErrorCode::ConfigInvalid);
}

TEST(ValidateModel, NegativeSigmaRejected) {
  EXPECT_EQ(code_of([] {
              two_state(1, 1, vec2(-1, 1), vec2(-0.5, 1), vec2(0, 0),
                        vec2(1, 2));
            }),
            ErrorCode::ConfigInvalid);
}

TEST(StationaryVector, SymmetricTwoState) {
  Eigen::VectorXd pi = mmbm::stationary_vector(mat2(-0.7, 0.7, 0.7, -0.7));
  EXPECT_NEAR(pi(0), 0.5, 1e-14);
  EXPECT_NEAR(pi(1), 0.5, 1e-14);
}

TEST(StationaryVector, SingleState) {
  Eigen::MatrixXd q(1, 1);
  q << 0;
  Eigen::VectorXd pi = mmbm::stationary_vector(q);
  EXPECT_DOUBLE_EQ(pi(0), 1.0);
}

TEST(StationaryVector, AsymmetricTwoState) {
  Eigen::VectorXd pi = mmbm::stationary_vector(mat2(-1, 1, 2, -2));
  EXPECT_NEAR(pi(0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(pi(1), 1.0 / 3.0, 1e-14);
}

TEST(StationaryVector, RandomIrreducibleChains) {
  std::mt19937_64 rng(20240811);
  std::uniform_int_distribution<int> nn(1, 6);
  for (int rep = 0; rep < 1000; ++rep) {
    int n = nn(rng);
    Eigen::MatrixXd q = testutil::random_irreducible_q(rng, n);
    Eigen::VectorXd pi = mmbm::stationary_vector(q);
    EXPECT_LE((pi.transpose() * q).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(std::abs(pi.sum() - 1.0), 1e-12);
    EXPECT_GT(pi.minCoeff(), 0.0);
  }
}

TEST(AsymptoticDrift, HandComputedValues) {
  Model sym = two_state(1, 1, vec2(1, -1), vec2(1, 1), vec2(0, 0), vec2(1, 2));
  EXPECT_NEAR(mmbm::asymptotic_drift(sym), 0.0, 1e-14);

  Eigen::MatrixXd q1(1, 1);
  q1 << 0;
  Eigen::VectorXd one(1), mu1(1), s1(1), a1(1), b1(1);
  mu1 << -1;
  s1 << 1;
  a1 << 0;
  b1 << 1;
  Model single = mmbm::validate_model(q1, mu1, s1, a1, b1);
  EXPECT_DOUBLE_EQ(mmbm::asymptotic_drift(single), -1.0);

  // pi = (2/3, 1/3) for rates (1, 2); mu = (2, -1) gives kappa = 1.
  Model skew = two_state(1, 2, vec2(2, -1), vec2(1, 1), vec2(0, 0), vec2(1, 2));
  EXPECT_NEAR(mmbm::asymptotic_drift(skew), 1.0, 1e-14);
}

TEST(ClassifyStates, CasePatterns) {
  Model c1 = two_state(1, 1, vec2(-1, 0.5), vec2(0, 1), vec2(0, 0), vec2(1, 2));
  auto cls1 = mmbm::classify_states(c1);
  EXPECT_EQ(cls1.e_plus, (std::vector<int>{1}));
  EXPECT_EQ(cls1.e_minus, (std::vector<int>{0, 1}));

  Model c2 = two_state(1, 1, vec2(-2, 1), vec2(1, 0), vec2(0, 0), vec2(1, 2));
  auto cls2 = mmbm::classify_states(c2);
  EXPECT_EQ(cls2.e_plus, (std::vector<int>{0, 1}));
  EXPECT_EQ(cls2.e_minus, (std::vector<int>{0}));

  Model inert =
      two_state(1, 1, vec2(0, 0), vec2(0, 0), vec2(0, 0), vec2(1, 2));
  auto cls3 = mmbm::classify_states(inert);
  EXPECT_TRUE(cls3.e_plus.empty());
  EXPECT_TRUE(cls3.e_minus.empty());
}

TEST(ClassifyStates, DependsOnlyOnSigns) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  Model base =
      two_state(1, 1, vec2(-1, 0.5), vec2(0, 1), vec2(0, 0), vec2(1, 2));
  auto ref = mmbm::classify_states(base);
  for (int rep = 0; rep < 50; ++rep) {
    Model m = two_state(1, 1, vec2(-scale(rng), scale(rng)),
                        vec2(0, scale(rng)), vec2(0, 0), vec2(1, 2));
    auto cls = mmbm::classify_states(m);
    EXPECT_EQ(cls.e_plus, ref.e_plus);
    EXPECT_EQ(cls.e_minus, ref.e_minus);
  }
}

TEST(ModelJson, RoundTrip) {
  Model m = two_state(1, 2, vec2(-1, 1), vec2(1, 0), vec2(0, 0.5), vec2(1, 2));
  Model back = mmbm::model_from_json(mmbm::model_to_json(m));
  EXPECT_EQ(back.n(), 2);
  EXPECT_TRUE(back.q.isApprox(m.q));
  EXPECT_TRUE(back.mu.isApprox(m.mu));
  EXPECT_TRUE(back.sigma.isApprox(m.sigma));
  EXPECT_TRUE(back.a.isApprox(m.a));
  EXPECT_TRUE(back.b.isApprox(m.b));
}

TEST(ModelJson, MissingFieldRejected) {
  nlohmann::json j = {{"q", {{-1, 1}, {1, -1}}},
                      {"mu", {-1, 1}},
                      {"sigma", {1, 1}},
                      {"a", {0, 0}}};
  EXPECT_EQ(code_of([&] { mmbm::model_from_json(j); }),
            ErrorCode::ConfigInvalid);
}

}  // namespace
