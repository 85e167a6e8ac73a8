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

// Bookkeeping attached to each assembled constraint row.
struct ConstraintTag {
  enum class Family { Entry, Continuity, Differentiability, Exit };
  Family family;
  int state;
  double location;
};

struct AssembledSystem {
  Eigen::MatrixXcd a;
  Eigen::VectorXcd b;
  std::vector<ConstraintTag> rows;
  std::vector<int> col_offset;  // column block start per interval, size K+1
};

// Builds the square gluing/boundary system over all interval mode
// coefficients. Row families:
//   Entry            Pi_i(lo) = 0 where state i starts diffusing or drifting
//                    up (an atom forms instead when sigma=0 and mu<0)
//   Continuity       matching CDF values across an interior breakpoint
//   Differentiability matching densities there (diffusive states only)
//   Exit             Pi_i(hi) = pi_i where i stops, unless the mass piles
//                    into an atom at the cap (sigma=0, mu>0)
inline AssembledSystem assemble_constraints(
    const Model& m, const IntervalPartition& part, const ProjectionMaps& maps,
    const std::vector<IntervalBasis>& bases, const Eigen::VectorXd& pi) {
  const std::string op = "assemble_constraints";
  const int K = part.K();

  AssembledSystem sys;
  sys.col_offset.assign(static_cast<size_t>(K) + 1, 0);
  for (int k = 1; k <= K; ++k)
    sys.col_offset[static_cast<size_t>(k)] =
        sys.col_offset[static_cast<size_t>(k) - 1] +
        bases[static_cast<size_t>(k) - 1].jp.modes();
  const int total = sys.col_offset[static_cast<size_t>(K)];

  struct RowSpec {
    ConstraintTag tag;
    int k_left;
    int k_right;  // -1 for single-sided rows
    int d;
    double rhs_extra;  // pi_i on exit rows, 0 otherwise
  };
  std::vector<RowSpec> specs;
  using Family = ConstraintTag::Family;
  for (int k = 1; k <= K; ++k) {
    const auto& mp = maps.at(k);
    for (int i : mp.d_bar_plus)
      specs.push_back({{Family::Entry, i, part.lo(k)}, k, -1, 0, 0.0});
    if (k < K) {
      for (int i : mp.u)
        if (m.in_e_plus(i) || m.in_e_minus(i))
          specs.push_back(
              {{Family::Continuity, i, part.hi(k)}, k, k + 1, 0, 0.0});
      for (int i : mp.u_tilde)
        specs.push_back(
            {{Family::Differentiability, i, part.hi(k)}, k, k + 1, 1, 0.0});
    }
    for (int i : mp.u_bar_minus)
      specs.push_back({{Family::Exit, i, part.hi(k)}, k, -1, 0, pi(i)});
  }
  if (static_cast<int>(specs.size()) != total)
    throw Error(ErrorCode::CountMismatch, op,
                "constraint count disagrees with the mode count",
                {{"rows", specs.size()}, {"columns", total}});

  sys.a = Eigen::MatrixXcd::Zero(total, total);
  sys.b = Eigen::VectorXcd::Zero(total);
  sys.rows.reserve(specs.size());
  for (size_t r = 0; r < specs.size(); ++r) {
    const RowSpec& s = specs[r];
    const long row = static_cast<long>(r);
    const IntervalBasis& left = bases[static_cast<size_t>(s.k_left) - 1];
    int rl = part.index_in_active(s.k_left, s.tag.state);
    sys.a.block(row, sys.col_offset[static_cast<size_t>(s.k_left) - 1], 1,
                left.jp.modes()) = left.mode_row(rl, s.tag.location, s.d);
    double rhs = s.rhs_extra - left.part_known(rl, s.tag.location, s.d);
    if (s.k_right > 0) {
      const IntervalBasis& right = bases[static_cast<size_t>(s.k_right) - 1];
      int rr = part.index_in_active(s.k_right, s.tag.state);
      sys.a.block(row, sys.col_offset[static_cast<size_t>(s.k_right) - 1], 1,
                  right.jp.modes()) =
          -right.mode_row(rr, s.tag.location, s.d);
      rhs += right.part_known(rr, s.tag.location, s.d);
    }
    sys.b(row) = rhs;
    sys.rows.push_back(s.tag);
  }

  // Row equilibration keeps CDF-value rows and derivative rows on the same
  // footing regardless of mode magnitudes.
  for (long r = 0; r < sys.a.rows(); ++r) {
    double scale = sys.a.row(r).cwiseAbs().maxCoeff();
    if (scale > 0.0) {
      sys.a.row(r) /= scale;
      sys.b(r) /= scale;
    }
  }
  return sys;
}

// Full solver state: kept alive behind the distribution's evaluation closure
// and exposed for diagnostics and perturbation tests.
struct SolvedStationary {
  Model model;
  Eigen::VectorXd pi;
  IntervalPartition partition;
  std::vector<IntervalBasis> bases;
  std::vector<Eigen::VectorXcd> coeffs;  // mode coefficients per interval
  std::vector<Atom> atoms;
  std::vector<int> first_interval, last_interval;  // active range per state
  double condition_estimate = 0.0;
  double linear_residual = 0.0;
  int unknowns = 0;

  // d-th derivative of the piecewise representation of Pi_i at z, clamped
  // into the state's band.
  double value(int i, double z, int d) const {
    z = std::min(std::max(z, model.a(i)), model.b(i));
    int k = partition.interval_of(z);
    k = std::min(std::max(k, first_interval[static_cast<size_t>(i)]),
                 last_interval[static_cast<size_t>(i)]);
    const IntervalBasis& basis = bases[static_cast<size_t>(k) - 1];
    int r = partition.index_in_active(k, i);
    std::complex<double> v =
        (basis.mode_row(r, z, d) * coeffs[static_cast<size_t>(k) - 1])(0, 0);
    return v.real() + basis.part_known(r, z, d);
  }

  StationaryDistribution to_distribution() const {
    auto core = std::make_shared<const SolvedStationary>(*this);
    StationaryDistribution dist;
    dist.model = model;
    dist.pi = pi;
    dist.atoms = atoms;
    dist.rep = [core](int i, double z, int d) { return core->value(i, z, d); };
    return dist;
  }
};

inline SolvedStationary solve_stationary_full(const Model& raw) {
  const std::string op = "solve_stationary";
  Model m = validate_model(raw.q, raw.mu, raw.sigma, raw.a, raw.b);
  if (m.deterministic_of_j())
    throw Error(ErrorCode::DegenerateModel, op,
                "every state is inert; the level admits no unique "
                "stationary law");

  SolvedStationary sol;
  sol.model = m;
  sol.pi = stationary_vector(m.q);
  sol.partition = compute_partition(m);
  const int K = sol.partition.K();
  ProjectionMaps maps = projection_maps(sol.partition, m);

  sol.bases.reserve(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const auto& act = sol.partition.active_set(k);
    QuadraticPencil pencil = build_pencil(m, act, PencilKind::Stationary);
    IntervalBasis basis;
    basis.jp = solve_pencil(pencil);
    Eigen::VectorXd forcing = forcing_constants(sol.partition, m, k, sol.pi);
    basis.part = particular_solution(
        pencil, forcing, Eigen::MatrixXd::Zero(pencil.dim(), 0),
        Eigen::VectorXd::Zero(pencil.dim()));
    basis.lo = sol.partition.lo(k);
    basis.hi = sol.partition.hi(k);
    basis.z_ref = 0.5 * (basis.lo + basis.hi);
    basis.active = act;
    sol.bases.push_back(std::move(basis));
  }

  AssembledSystem sys =
      assemble_constraints(m, sol.partition, maps, sol.bases, sol.pi);
  sol.unknowns = static_cast<int>(sys.a.rows());

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(sys.a);
  double rcond = lu.rcond();
  sol.condition_estimate = (rcond > 0.0) ? 1.0 / rcond : 1e300;
  if (!(rcond > 1e-14))
    throw Error(ErrorCode::NumericallySingular, op,
                "constraint system condition estimate exceeds 1e14",
                {{"condition", sol.condition_estimate}});
  Eigen::VectorXcd u = lu.solve(sys.b);
  double bnorm = sys.b.cwiseAbs().maxCoeff();
  sol.linear_residual = (sys.a * u - sys.b).cwiseAbs().maxCoeff();
  if (sol.linear_residual > 1e-10 * std::max(bnorm, 1e-30))
    throw Error(ErrorCode::NumericallySingular, op,
                "linear system residual exceeds tolerance",
                {{"residual", sol.linear_residual}});

  sol.coeffs.resize(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k)
    sol.coeffs[static_cast<size_t>(k) - 1] =
        u.segment(sys.col_offset[static_cast<size_t>(k) - 1],
                  sol.bases[static_cast<size_t>(k) - 1].jp.modes());

  sol.first_interval.assign(static_cast<size_t>(m.n()), 0);
  sol.last_interval.assign(static_cast<size_t>(m.n()), 0);
  for (int i = 0; i < m.n(); ++i) {
    int lo = 0, hi = 0;
    for (int k = 1; k <= K; ++k)
      if (sol.partition.index_in_active(k, i) >= 0) {
        if (lo == 0) lo = k;
        hi = k;
      }
    sol.first_interval[static_cast<size_t>(i)] = lo;
    sol.last_interval[static_cast<size_t>(i)] = hi;
  }

  // Conjugate-pair structure must realify the representation; sample it.
  for (int k = 1; k <= K; ++k) {
    const IntervalBasis& basis = sol.bases[static_cast<size_t>(k) - 1];
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
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

  for (int i = 0; i < m.n(); ++i) {
    if (m.atom_at_lower(i))
      sol.atoms.push_back({i, m.a(i), sol.value(i, m.a(i), 0)});
    if (m.atom_at_upper(i))
      sol.atoms.push_back({i, m.b(i), sol.pi(i) - sol.value(i, m.b(i), 0)});
  }
  return sol;
}

inline StationaryDistribution solve_stationary(const Model& m) {
  return solve_stationary_full(m).to_distribution();
}

}  // namespace mmbm
