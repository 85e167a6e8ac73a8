#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "mmbm/decomposition.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"

namespace mmbm {

enum class PencilKind { Stationary, Dividend };

// Quadratic matrix pencil P(lambda) = a2 lambda^2 + a1 lambda + a0 restricted
// to an interval's active states. Stationary: a2=diag(sigma^2/2), a1=-diag(mu),
// a0=Q_EE^T. Dividend: a1=+diag(mu), a0=Q_EE - delta I.
struct QuadraticPencil {
  Eigen::MatrixXd a2, a1, a0;
  std::vector<int> active;   // global state ids, sorted
  int expected_modes = 0;    // 2#{sigma>0} + #{sigma=0, mu!=0}
  double coef_scale = 1.0;
  bool full_active = false;  // stationary only: E_k is the whole state space

  int dim() const { return static_cast<int>(active.size()); }

  Eigen::MatrixXcd eval(std::complex<double> lambda) const {
    return (a2.cast<std::complex<double>>() * (lambda * lambda) +
            a1.cast<std::complex<double>>() * lambda +
            a0.cast<std::complex<double>>());
  }
};

inline QuadraticPencil build_pencil(const Model& m,
                                    const std::vector<int>& active,
                                    PencilKind kind, double delta = 0.0) {
  QuadraticPencil p;
  p.active = active;
  const int n = static_cast<int>(active.size());
  p.a2 = Eigen::MatrixXd::Zero(n, n);
  p.a1 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd qee(n, n);
  for (int r = 0; r < n; ++r) {
    int i = active[static_cast<size_t>(r)];
    p.a2(r, r) = 0.5 * m.sigma(i) * m.sigma(i);
    p.a1(r, r) = (kind == PencilKind::Stationary) ? -m.mu(i) : m.mu(i);
    for (int c = 0; c < n; ++c) qee(r, c) = m.q(i, active[static_cast<size_t>(c)]);
    if (m.sigma(i) > 0.0)
      p.expected_modes += 2;
    else if (m.mu(i) != 0.0)
      p.expected_modes += 1;
  }
  p.a0 = (kind == PencilKind::Stationary)
             ? Eigen::MatrixXd(qee.transpose())
             : Eigen::MatrixXd(qee - delta * Eigen::MatrixXd::Identity(n, n));
  p.full_active = (kind == PencilKind::Stationary) && (n == m.n());
  p.coef_scale = std::max({1.0, p.a2.cwiseAbs().maxCoeff(),
                           p.a1.cwiseAbs().maxCoeff(),
                           p.a0.cwiseAbs().maxCoeff()});
  return p;
}

// Exponential-mode basis: columns gamma(:,m) with exponents lambda(m), all
// semisimple (diagonal Lambda); complex modes in exact conjugate pairs.
struct JordanPair {
  Eigen::VectorXcd lambda;  // sorted by (Re, Im)
  Eigen::MatrixXcd gamma;   // dim x m, unit-norm phase-fixed columns
  int modes() const { return static_cast<int>(lambda.size()); }
};

namespace detail {

// Deterministic phase: rotate so the largest-magnitude component is real
// positive.
inline void fix_phase(Eigen::VectorXcd& v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      arg = i;
    }
  if (best > 0.0) v *= std::conj(v(arg)) / std::abs(v(arg));
}

}  // namespace detail

inline JordanPair solve_pencil(const QuadraticPencil& p) {
  const std::string op = "solve_pencil";
  const int n = p.dim();
  const int m = p.expected_modes;
  JordanPair jp;
  if (m == 0) {
    jp.lambda.resize(0);
    jp.gamma.resize(n, 0);
    return jp;
  }

  // Companion linearization: [[0, I], [-a0, -a1]] x = lambda [[I, 0], [0, a2]] x.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  A.topRightCorner(n, n).setIdentity();
  A.bottomLeftCorner(n, n) = -p.a0;
  A.bottomRightCorner(n, n) = -p.a1;
  B.topLeftCorner(n, n).setIdentity();
  B.bottomRightCorner(n, n) = p.a2;

  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges;
  ges.compute(A, B, /*computeEigenvectors=*/false);
  if (ges.info() != Eigen::Success)
    throw Error(ErrorCode::NumericallySingular, op, "QZ iteration failed");

  std::vector<std::complex<double>> finite;
  for (int i = 0; i < 2 * n; ++i) {
    std::complex<double> alpha = ges.alphas()(i);
    double beta = ges.betas()(i);
    double mag = std::abs(alpha) + std::abs(beta);
    if (mag == 0.0 || std::abs(beta) < 1e-12 * mag) continue;  // infinite mode
    finite.push_back(alpha / beta);
  }
  if (static_cast<int>(finite.size()) != m)
    throw Error(ErrorCode::CountMismatch, op,
                "finite eigenvalue count disagrees with the degree formula",
                {{"expected", m}, {"found", finite.size()}});

  double lam_scale = 1.0;
  for (auto& l : finite) lam_scale = std::max(lam_scale, std::abs(l));
  const double cluster_tol = 1e-8 * lam_scale;

  std::sort(finite.begin(), finite.end(), [](auto x, auto y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  });

  if (p.full_active) {
    int near_zero = 0;
    for (auto& l : finite)
      if (std::abs(l) <= cluster_tol) ++near_zero;
    if (near_zero >= 2)
      throw Error(ErrorCode::DegenerateZeroMode, op,
                  "double zero mode on a full-active interval (kappa = 0)");
  }

  // Transitive clustering of nearby eigenvalues in sorted order.
  struct Cluster {
    std::complex<double> mean;
    int size;
  };
  std::vector<Cluster> clusters;
  {
    size_t i = 0;
    while (i < finite.size()) {
      size_t j = i + 1;
      std::complex<double> sum = finite[i];
      while (j < finite.size() &&
             std::abs(finite[j] - finite[j - 1]) < cluster_tol) {
        sum += finite[j];
        ++j;
      }
      Cluster c;
      c.size = static_cast<int>(j - i);
      c.mean = sum / static_cast<double>(c.size);
      if (std::abs(c.mean.imag()) <= cluster_tol) c.mean.imag(0.0);
      if (std::abs(c.mean) <= 1e-12 * lam_scale) c.mean = 0.0;
      clusters.push_back(c);
      i = j;
    }
  }

  // Mode vectors: numerical nullspace of P(lambda) at each cluster mean. For
  // complex clusters only the +Im member is factored; the conjugate reuses
  // conjugated vectors so realification is exact.
  struct ModeCol {
    std::complex<double> lambda;
    Eigen::VectorXcd v;
  };
  std::vector<ModeCol> cols;
  for (size_t ci = 0; ci < clusters.size(); ++ci) {
    const auto& c = clusters[ci];
    if (c.mean.imag() < 0.0) continue;  // handled via its conjugate
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(p.eval(c.mean),
                                           Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    double smax = s(0);
    int null_dim = 0;
    for (int i = n - 1; i >= 0; --i) {
      if (s(i) <= 1e-10 * std::max(smax, p.coef_scale))
        ++null_dim;
      else
        break;
    }
    if (null_dim < c.size)
      throw Error(ErrorCode::NotSemisimple, op,
                  "repeated eigenvalue with deficient eigenspace",
                  {{"lambda_re", c.mean.real()},
                   {"lambda_im", c.mean.imag()},
                   {"multiplicity", c.size},
                   {"geometric", null_dim}});
    for (int t = 0; t < c.size; ++t) {
      Eigen::VectorXcd v = svd.matrixV().col(n - 1 - t);
      detail::fix_phase(v);
      cols.push_back({c.mean, v});
      if (c.mean.imag() > 0.0)
        cols.push_back({std::conj(c.mean), v.conjugate()});
    }
  }
  if (static_cast<int>(cols.size()) != m)
    throw Error(ErrorCode::CountMismatch, op,
                "conjugate pairing lost or duplicated a mode",
                {{"expected", m}, {"assembled", cols.size()}});

  std::sort(cols.begin(), cols.end(), [](const ModeCol& x, const ModeCol& y) {
    if (x.lambda.real() != y.lambda.real())
      return x.lambda.real() < y.lambda.real();
    return x.lambda.imag() < y.lambda.imag();
  });

  jp.lambda.resize(m);
  jp.gamma.resize(n, m);
  for (int i = 0; i < m; ++i) {
    jp.lambda(i) = cols[static_cast<size_t>(i)].lambda;
    jp.gamma.col(i) = cols[static_cast<size_t>(i)].v;
  }

  // Defining property of the pair.
  Eigen::MatrixXcd resid =
      p.a2.cast<std::complex<double>>() * jp.gamma *
          jp.lambda.array().square().matrix().asDiagonal() +
      p.a1.cast<std::complex<double>>() * jp.gamma *
          jp.lambda.asDiagonal() +
      p.a0.cast<std::complex<double>>() * jp.gamma;
  if (resid.cwiseAbs().maxCoeff() > 1e-10 * p.coef_scale *
                                        std::max(1.0, lam_scale * lam_scale))
    throw Error(ErrorCode::NumericallySingular, op,
                "pencil residual exceeds tolerance",
                {{"residual", resid.cwiseAbs().maxCoeff()}});

  // Stacked rank: [gamma; gamma Lambda] must have full column rank.
  Eigen::MatrixXcd stacked(2 * n, m);
  stacked.topRows(n) = jp.gamma;
  stacked.bottomRows(n) = jp.gamma * jp.lambda.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(stacked);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-10 * sv(0))
    throw Error(ErrorCode::RankDeficient, op,
                "mode matrix is rank deficient",
                {{"smin", sv(sv.size() - 1)}, {"smax", sv(0)}});
  return jp;
}

// Affine particular solution w(z) = alpha0 + AlphaC * c + beta z for forcing
// rhs(z) = r0 + RC * c + r1 z, where c collects unknown constants resolved by
// the outer linear system (dividend barrier values). The a2 term drops since
// w'' = 0, leaving a1 beta + a0 w(z) = rhs(z).
struct ParticularSolution {
  Eigen::VectorXd alpha0;
  Eigen::MatrixXd alpha_c;  // dim x n_constants
  Eigen::VectorXd beta;
};

inline ParticularSolution particular_solution(const QuadraticPencil& p,
                                              const Eigen::VectorXd& r0,
                                              const Eigen::MatrixXd& rc,
                                              const Eigen::VectorXd& r1) {
  const std::string op = "particular_solution";
  const int n = p.dim();
  ParticularSolution w;
  w.alpha0 = Eigen::VectorXd::Zero(n);
  w.alpha_c = Eigen::MatrixXd::Zero(n, rc.cols());
  w.beta = Eigen::VectorXd::Zero(n);
  bool trivial = r0.isZero(0.0) && r1.isZero(0.0) &&
                 (rc.cols() == 0 || rc.isZero(0.0));
  if (trivial) return w;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(p.a0);
  if (!lu.isInvertible())
    throw Error(ErrorCode::SingularA0, op,
                "constant-coefficient block is singular with nonzero forcing");
  w.beta = lu.solve(r1);
  w.alpha0 = lu.solve(r0 - p.a1 * w.beta);
  if (rc.cols() > 0) w.alpha_c = lu.solve(rc);

  // Residual spot-check of a1 w' + a0 w = rhs (three abscissae; constants
  // checked column-wise).
  for (double z : {-1.0, 0.0, 1.0}) {
    Eigen::VectorXd res = p.a1 * w.beta + p.a0 * (w.alpha0 + w.beta * z) -
                          (r0 + r1 * z);
    double tol = 1e-10 * p.coef_scale *
                 std::max({1.0, r0.cwiseAbs().maxCoeff(),
                           r1.cwiseAbs().maxCoeff()});
    if (res.cwiseAbs().maxCoeff() > tol)
      throw Error(ErrorCode::NumericallySingular, op,
                  "particular solution residual exceeds tolerance",
                  {{"residual", res.cwiseAbs().maxCoeff()}});
  }
  if (rc.cols() > 0) {
    Eigen::MatrixXd res = p.a0 * w.alpha_c - rc;
    if (res.cwiseAbs().maxCoeff() >
        1e-10 * p.coef_scale * std::max(1.0, rc.cwiseAbs().maxCoeff()))
      throw Error(ErrorCode::NumericallySingular, op,
                  "constant-column particular solution residual too large");
  }
  return w;
}

// One interval's complete representation: modes, reference point and affine
// particular part. Value for local row r:
//   x_r(z) = sum_m gamma(r,m) e^{lambda_m (z - z_ref)} u_m
//            + alpha0_r + (AlphaC c)_r + beta_r z.
struct IntervalBasis {
  JordanPair jp;
  ParticularSolution part;
  double z_ref = 0.0;
  double lo = 0.0, hi = 0.0;
  std::vector<int> active;

  // Coefficient row of the representation's d-th derivative at z for local
  // row r, over this interval's mode coefficients.
  Eigen::RowVectorXcd mode_row(int r, double z, int d) const {
    const int m = jp.modes();
    Eigen::RowVectorXcd row(m);
    for (int k = 0; k < m; ++k) {
      std::complex<double> lam = jp.lambda(k);
      std::complex<double> f = std::exp(lam * (z - z_ref));
      for (int t = 0; t < d; ++t) f *= lam;
      row(k) = jp.gamma(r, k) * f;
    }
    return row;
  }

  // Known affine part (and its unknown-constant columns) of the d-th
  // derivative at z for local row r.
  double part_known(int r, double z, int d) const {
    if (d == 0) return part.alpha0(r) + part.beta(r) * z;
    if (d == 1) return part.beta(r);
    return 0.0;
  }
  Eigen::RowVectorXd part_const_row(int r, int d) const {
    if (part.alpha_c.cols() == 0 || d > 0)
      return Eigen::RowVectorXd::Zero(part.alpha_c.cols());
    return part.alpha_c.row(r);
  }
};

}  // namespace mmbm
