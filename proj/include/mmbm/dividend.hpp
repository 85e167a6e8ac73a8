#pragma once

#include <algorithm>
#include <complex>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmbm/decomposition.hpp"
#include "mmbm/distribution.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"
#include "mmbm/spectral.hpp"

namespace mmbm {

// Validation for the discounted-dividend problem: all lower barriers at
// zero, positive discount, no inert states (a sigma=0 state needs drift for
// its first-order equation). The asymptotic-drift degeneracy of the
// stationary problem is irrelevant here and deliberately not checked.
inline Model validate_dividend_model(const Model& raw, double delta) {
  const std::string op = "validate_dividend_model";
  Model m = validate_model_core(raw.q, raw.mu, raw.sigma, raw.a, raw.b, op);
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw Error(ErrorCode::ConfigInvalid, op, "discount rate must be positive",
                {{"delta", delta}});
  for (int i = 0; i < m.n(); ++i) {
    if (m.a(i) != 0.0)
      throw Error(ErrorCode::ConfigInvalid, op,
                  "dividend model requires every lower barrier at zero",
                  {{"state", i + 1}, {"a", m.a(i)}});
    if (!(m.b(i) > 0.0))
      throw Error(ErrorCode::BarrierOrder, op,
                  "dividend barrier must be positive",
                  {{"state", i + 1}, {"b", m.b(i)}});
    if (m.inert(i))
      throw Error(ErrorCode::DegenerateModel, op,
                  "state with zero volatility needs nonzero drift",
                  {{"state", i + 1}});
  }
  return m;
}

// Full solver state: per-interval exponential modes plus the barrier values
// V(b(j), j) carried as explicit unknowns tied to the representation.
struct SolvedDividend {
  Model model;
  double delta = 0.0;
  IntervalPartition partition;
  std::vector<IntervalBasis> bases;
  std::vector<Eigen::VectorXcd> coeffs;
  Eigen::VectorXd constants;  // V(b(j), j) per state
  std::vector<int> last_interval;
  double condition_estimate = 0.0;
  double linear_residual = 0.0;
  int unknowns = 0;

  double value(int j, double z, int d) const {
    z = std::min(std::max(z, 0.0), model.b(j));
    int k = std::min(partition.interval_of(z),
                     last_interval[static_cast<size_t>(j)]);
    const IntervalBasis& basis = bases[static_cast<size_t>(k) - 1];
    int r = partition.index_in_active(k, j);
    std::complex<double> v =
        (basis.mode_row(r, z, d) * coeffs[static_cast<size_t>(k) - 1])(0, 0);
    return v.real() + basis.part_known(r, z, d) +
           basis.part_const_row(r, d).dot(constants);
  }

  ValueFunction to_value_function() const {
    auto core = std::make_shared<const SolvedDividend>(*this);
    ValueFunction vf;
    vf.model = model;
    vf.delta = delta;
    vf.rep = [core](int j, double z, int d) { return core->value(j, z, d); };
    return vf;
  }
};

inline SolvedDividend solve_dividend_full(const Model& raw, double delta) {
  const std::string op = "solve_dividend";
  Model m = validate_dividend_model(raw, delta);
  const int n = m.n();

  SolvedDividend sol;
  sol.model = m;
  sol.delta = delta;
  sol.partition = compute_partition(m);
  const int K = sol.partition.K();

  sol.bases.reserve(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const auto& act = sol.partition.active_set(k);
    QuadraticPencil pencil =
        build_pencil(m, act, PencilKind::Dividend, delta);
    IntervalBasis basis;
    basis.jp = solve_pencil(pencil);
    // Capped states feed the interval as an immediate payout plus their
    // barrier value: q_{jc} (c_c + z - b_c), moved to the right-hand side.
    const int dim = pencil.dim();
    Eigen::VectorXd r0 = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd r1 = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd rc = Eigen::MatrixXd::Zero(dim, n);
    for (int r = 0; r < dim; ++r) {
      int j = act[static_cast<size_t>(r)];
      for (int c = 0; c < n; ++c) {
        if (m.b(c) > sol.partition.lo(k)) continue;  // still active
        r0(r) += m.q(j, c) * m.b(c);
        r1(r) -= m.q(j, c);
        rc(r, c) -= m.q(j, c);
      }
    }
    basis.part = particular_solution(pencil, r0, rc, r1);
    basis.lo = sol.partition.lo(k);
    basis.hi = sol.partition.hi(k);
    basis.z_ref = 0.5 * (basis.lo + basis.hi);
    basis.active = act;
    sol.bases.push_back(std::move(basis));
  }

  std::vector<int> col_offset(static_cast<size_t>(K) + 1, 0);
  for (int k = 1; k <= K; ++k)
    col_offset[static_cast<size_t>(k)] =
        col_offset[static_cast<size_t>(k) - 1] +
        sol.bases[static_cast<size_t>(k) - 1].jp.modes();
  const int mode_total = col_offset[static_cast<size_t>(K)];
  const int total = mode_total + n;

  enum class Family { Entry, Continuity, Differentiability, Pasting, Tie };
  struct RowSpec {
    Family family;
    int state;
    double location;
    int k_left, k_right, d;
  };
  std::vector<RowSpec> specs;
  for (int j : sol.partition.active_set(1))
    if (m.sigma(j) > 0.0 || m.mu(j) < 0.0)
      specs.push_back({Family::Entry, j, 0.0, 1, -1, 0});
  for (int k = 1; k <= K; ++k) {
    if (k < K)
      for (int j : sol.partition.active_set(k))
        if (sol.partition.index_in_active(k + 1, j) >= 0) {
          specs.push_back(
              {Family::Continuity, j, sol.partition.hi(k), k, k + 1, 0});
          if (m.sigma(j) > 0.0)
            specs.push_back({Family::Differentiability, j,
                             sol.partition.hi(k), k, k + 1, 1});
        }
    for (int j : sol.partition.active_set(k))
      if (m.b(j) == sol.partition.hi(k)) {
        if (m.sigma(j) > 0.0 || m.mu(j) > 0.0)
          specs.push_back({Family::Pasting, j, m.b(j), k, -1, 1});
        specs.push_back({Family::Tie, j, m.b(j), k, -1, 0});
      }
  }
  if (static_cast<int>(specs.size()) != total)
    throw Error(ErrorCode::CountMismatch, op,
                "constraint count disagrees with the unknown count",
                {{"rows", specs.size()}, {"columns", total}});

  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(total, total);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(total);
  for (size_t s = 0; s < specs.size(); ++s) {
    const RowSpec& spec = specs[s];
    const long row = static_cast<long>(s);
    const IntervalBasis& left =
        sol.bases[static_cast<size_t>(spec.k_left) - 1];
    int rl = sol.partition.index_in_active(spec.k_left, spec.state);
    A.block(row, col_offset[static_cast<size_t>(spec.k_left) - 1], 1,
            left.jp.modes()) = left.mode_row(rl, spec.location, spec.d);
    A.block(row, mode_total, 1, n) +=
        left.part_const_row(rl, spec.d).cast<std::complex<double>>();
    double rhs = -left.part_known(rl, spec.location, spec.d);
    if (spec.k_right > 0) {
      const IntervalBasis& right =
          sol.bases[static_cast<size_t>(spec.k_right) - 1];
      int rr = sol.partition.index_in_active(spec.k_right, spec.state);
      A.block(row, col_offset[static_cast<size_t>(spec.k_right) - 1], 1,
              right.jp.modes()) = -right.mode_row(rr, spec.location, spec.d);
      A.block(row, mode_total, 1, n) -=
          right.part_const_row(rr, spec.d).cast<std::complex<double>>();
      rhs += right.part_known(rr, spec.location, spec.d);
    }
    if (spec.family == Family::Pasting) rhs += 1.0;
    if (spec.family == Family::Tie) A(row, mode_total + spec.state) -= 1.0;
    b(row) = rhs;
  }
  for (long r = 0; r < A.rows(); ++r) {
    double scale = A.row(r).cwiseAbs().maxCoeff();
    if (scale > 0.0) {
      A.row(r) /= scale;
      b(r) /= scale;
    }
  }

  sol.unknowns = total;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  double rcond = lu.rcond();
  sol.condition_estimate = (rcond > 0.0) ? 1.0 / rcond : 1e300;
  if (!(rcond > 1e-14))
    throw Error(ErrorCode::NumericallySingular, op,
                "constraint system condition estimate exceeds 1e14",
                {{"condition", sol.condition_estimate}});
  Eigen::VectorXcd u = lu.solve(b);
  double bnorm = b.cwiseAbs().maxCoeff();
  sol.linear_residual = (A * u - b).cwiseAbs().maxCoeff();
  if (sol.linear_residual > 1e-10 * std::max(bnorm, 1e-30))
    throw Error(ErrorCode::NumericallySingular, op,
                "linear system residual exceeds tolerance",
                {{"residual", sol.linear_residual}});

  sol.coeffs.resize(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k)
    sol.coeffs[static_cast<size_t>(k) - 1] =
        u.segment(col_offset[static_cast<size_t>(k) - 1],
                  sol.bases[static_cast<size_t>(k) - 1].jp.modes());
  sol.constants.resize(n);
  for (int j = 0; j < n; ++j) {
    std::complex<double> c = u(mode_total + j);
    if (std::abs(c.imag()) > 1e-9 * std::max(1.0, std::abs(c.real())))
      throw Error(ErrorCode::NumericallySingular, op,
                  "barrier value came out nonreal", {{"imag", c.imag()}});
    sol.constants(j) = c.real();
  }

  sol.last_interval.assign(static_cast<size_t>(n), 1);
  for (int j = 0; j < n; ++j)
    for (int k = 1; k <= K; ++k)
      if (sol.partition.index_in_active(k, j) >= 0)
        sol.last_interval[static_cast<size_t>(j)] = k;

  for (int k = 1; k <= K; ++k) {
    const IntervalBasis& basis = sol.bases[static_cast<size_t>(k) - 1];
    for (double t : {0.0, 0.5, 1.0}) {
      double z = basis.lo + t * (basis.hi - basis.lo);
      for (size_t r = 0; r < basis.active.size(); ++r)
        for (int d = 0; d <= 2; ++d) {
          std::complex<double> v =
              (basis.mode_row(static_cast<int>(r), z, d) *
               sol.coeffs[static_cast<size_t>(k) - 1])(0, 0);
          if (std::abs(v.imag()) > 1e-9 * std::max(1.0, std::abs(v.real())))
            throw Error(ErrorCode::NumericallySingular, op,
                        "representation has a nonreal residue",
                        {{"imag", v.imag()}, {"z", z}});
        }
    }
  }
  return sol;
}

inline ValueFunction solve_dividend(const Model& m, double delta) {
  return solve_dividend_full(m, delta).to_value_function();
}

// Max absolute residual of the coupled discounted system over interior grid
// points: (sigma^2/2) V_j'' + mu_j V_j' - delta V_j
//         + sum_c q_{jc} [V(z AND b_c, c) + (z - b_c)^+].
inline double dividend_residual(const ValueFunction& vf,
                                int grid_per_interval = 1000) {
  const Model& m = vf.model;
  IntervalPartition part = compute_partition(m);
  double worst = 0.0;
  for (int k = 1; k <= part.K(); ++k) {
    double lo = part.lo(k), hi = part.hi(k);
    double inset = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    for (int g = 0; g <= grid_per_interval; ++g) {
      double z = lo + (hi - lo) * g / grid_per_interval;
      z = std::min(std::max(z, lo + inset), hi - inset);
      for (int j : part.active_set(k)) {
        double r = 0.5 * m.sigma(j) * m.sigma(j) * vf.rep(j, z, 2) +
                   m.mu(j) * vf.rep(j, z, 1) - vf.delta * vf.rep(j, z, 0);
        for (int c = 0; c < m.n(); ++c)
          r += m.q(j, c) * vf.evaluate_value(z, c);
        worst = std::max(worst, std::abs(r));
      }
    }
  }
  return worst;
}

// Boundary and regularity residuals of a solved value function. Gaps across
// interior breakpoints are measured by Taylor extrapolation from both sides
// so that smooth variation does not register. Curvature extremes are reported
// for diagnosis only: the value function switches between concave and convex
// regions depending on the drift sign (already visible in the single-state
// solution), so neither curvature direction is a global property and neither
// participates in the pass flag.
struct DividendBoundaryReport {
  double entry_residual = 0.0;
  double pasting_residual = 0.0;
  double continuity_gap = 0.0;
  double differentiability_gap = 0.0;
  double monotone_margin = 0.0;   // most negative analytic derivative
  double value_margin = 0.0;      // most negative value
  double curvature_min = 0.0;     // most negative grid second difference
  double curvature_max = 0.0;     // most positive grid second difference
  bool pass = false;
};

inline DividendBoundaryReport verify_boundary(const ValueFunction& vf) {
  const Model& m = vf.model;
  IntervalPartition part = compute_partition(m);
  DividendBoundaryReport rep;
  const double h = 3e-6;
  for (int j = 0; j < m.n(); ++j) {
    if (m.sigma(j) > 0.0 || m.mu(j) < 0.0)
      rep.entry_residual =
          std::max(rep.entry_residual, std::abs(vf.rep(j, 0.0, 0)));
    if (m.sigma(j) > 0.0 || m.mu(j) > 0.0)
      rep.pasting_residual = std::max(rep.pasting_residual,
                                      std::abs(vf.rep(j, m.b(j), 1) - 1.0));
    for (size_t t = 1; t + 1 < part.breakpoints.size(); ++t) {
      double l = part.breakpoints[t];
      if (l >= m.b(j)) continue;
      double left = vf.rep(j, l - h, 0) + h * vf.rep(j, l - h, 1) +
                    0.5 * h * h * vf.rep(j, l - h, 2);
      double right = vf.rep(j, l + h, 0) - h * vf.rep(j, l + h, 1) +
                     0.5 * h * h * vf.rep(j, l + h, 2);
      rep.continuity_gap = std::max(rep.continuity_gap, std::abs(left - right));
      if (m.sigma(j) > 0.0) {
        double dl = vf.rep(j, l - h, 1) + h * vf.rep(j, l - h, 2);
        double dr = vf.rep(j, l + h, 1) - h * vf.rep(j, l + h, 2);
        rep.differentiability_gap =
            std::max(rep.differentiability_gap, std::abs(dl - dr));
      }
    }
    double step = m.b(j) / 1000.0;
    for (int g = 0; g <= 1000; ++g) {
      double z = g * step;
      rep.monotone_margin = std::min(rep.monotone_margin, vf.rep(j, z, 1));
      rep.value_margin = std::min(rep.value_margin, vf.rep(j, z, 0));
    }
    if (m.sigma(j) > 0.0) {
      for (int g = 1; g < 1000; ++g) {
        double z = g * step;
        double d2 = vf.rep(j, z - step, 0) - 2.0 * vf.rep(j, z, 0) +
                    vf.rep(j, z + step, 0);
        rep.curvature_min = std::min(rep.curvature_min, d2);
        rep.curvature_max = std::max(rep.curvature_max, d2);
      }
    }
  }
  rep.pass = rep.entry_residual <= 1e-9 && rep.pasting_residual <= 1e-6 &&
             rep.continuity_gap <= 1e-8 && rep.differentiability_gap <= 1e-8 &&
             rep.monotone_margin >= -1e-9 && rep.value_margin >= -1e-9;
  return rep;
}

}  // namespace mmbm
