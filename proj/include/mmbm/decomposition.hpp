#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"

namespace mmbm {

// Partition of the content axis by the barrier values. Intervals are
// I_k = (l_{k-1}, l_k] for k = 1..K; state i is active on I_k iff its barrier
// interval contains I_k.
struct IntervalPartition {
  std::vector<double> breakpoints;        // l_0 < l_1 < ... < l_K
  std::vector<std::vector<int>> active;   // E_k at index k-1, sorted
  std::vector<std::vector<int>> finished; // b(j) <= l_{k-1}, saturated at pi_j
  std::vector<std::vector<int>> pending;  // a(j) >= l_k, not yet started

  int K() const { return static_cast<int>(breakpoints.size()) - 1; }
  double lo(int k) const { return breakpoints[static_cast<size_t>(k) - 1]; }
  double hi(int k) const { return breakpoints[static_cast<size_t>(k)]; }
  const std::vector<int>& active_set(int k) const {
    return active[static_cast<size_t>(k) - 1];
  }

  // Interval index k in 1..K containing z, with the half-open convention
  // (l_{k-1}, l_k]; z at or below l_0 maps to 1, above l_K to K.
  int interval_of(double z) const {
    int k = static_cast<int>(std::lower_bound(breakpoints.begin() + 1,
                                              breakpoints.end() - 1, z) -
                             breakpoints.begin());
    return std::max(1, std::min(K(), k));
  }

  // Position of state i inside E_k, or -1 if inactive there.
  int index_in_active(int k, int i) const {
    const auto& e = active_set(k);
    auto it = std::lower_bound(e.begin(), e.end(), i);
    if (it == e.end() || *it != i) return -1;
    return static_cast<int>(it - e.begin());
  }
};

inline IntervalPartition compute_partition(const Model& m) {
  const std::string op = "compute_partition";
  std::vector<double> pts;
  for (int i = 0; i < m.n(); ++i) {
    pts.push_back(m.a(i));
    pts.push_back(m.b(i));
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 2)
    throw Error(ErrorCode::DegenerateModel, op, "all barriers coincide",
                {{"level", pts.front()}});

  IntervalPartition p;
  p.breakpoints = std::move(pts);
  const int K = p.K();
  p.active.resize(K);
  p.finished.resize(K);
  p.pending.resize(K);
  for (int k = 1; k <= K; ++k) {
    for (int i = 0; i < m.n(); ++i) {
      if (m.a(i) <= p.lo(k) && p.hi(k) <= m.b(i))
        p.active[k - 1].push_back(i);
      else if (m.b(i) <= p.lo(k))
        p.finished[k - 1].push_back(i);
      else if (m.a(i) >= p.hi(k))
        p.pending[k - 1].push_back(i);
      else
        // A state straddling a breakpoint interior would contradict the
        // breakpoint construction.
        throw Error(ErrorCode::CountMismatch, op,
                    "state neither active, finished nor pending on interval",
                    {{"state", i + 1}, {"k", k}});
    }
    if (p.active[k - 1].empty())
      throw Error(ErrorCode::DegenerateModel, op,
                  "no active state on an interval", {{"k", k}});
  }
  return p;
}

// Right-hand side of the interval ODE: saturated states contribute their full
// mass pi_j, pending states contribute nothing (the joint CDF strictly below
// a(j) vanishes even when an atom sits at a(j) itself).
inline Eigen::VectorXd forcing_constants(const IntervalPartition& p,
                                         const Model& m, int k,
                                         const Eigen::VectorXd& pi) {
  const auto& act = p.active_set(k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<long>(act.size()));
  for (size_t idx = 0; idx < act.size(); ++idx) {
    int i = act[idx];
    double s = 0.0;
    for (int j : p.finished[static_cast<size_t>(k) - 1]) s += m.q(j, i) * pi(j);
    rhs(static_cast<long>(idx)) = -s;
  }
  return rhs;
}

// Index lists realizing the boundary selector matrices used by the constraint
// assembly; E_0 = E_{K+1} = empty by convention. The d-family looks down at
// l_{k-1}, the u-family up at l_k.
struct ProjectionMaps {
  struct PerInterval {
    std::vector<int> d;           // E_k intersect E_{k-1}
    std::vector<int> d_plus;      // d intersect E+
    std::vector<int> d_tilde;     // d intersect E+ intersect E-
    std::vector<int> d_bar;       // E_k minus E_{k-1} (states entering)
    std::vector<int> d_bar_plus;  // d_bar intersect E+
    std::vector<int> u;           // E_k intersect E_{k+1}
    std::vector<int> u_minus;     // u intersect E-
    std::vector<int> u_tilde;     // u intersect E+ intersect E-
    std::vector<int> u_bar;       // E_k minus E_{k+1} (states ending)
    std::vector<int> u_bar_minus; // u_bar intersect E-
  };
  std::vector<PerInterval> per_interval;  // index k-1
  const PerInterval& at(int k) const {
    return per_interval[static_cast<size_t>(k) - 1];
  }
};

inline ProjectionMaps projection_maps(const IntervalPartition& p,
                                      const Model& m) {
  ProjectionMaps maps;
  const int K = p.K();
  maps.per_interval.resize(K);
  auto inter = [](const std::vector<int>& x, const std::vector<int>& y) {
    std::vector<int> out;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(),
                          std::back_inserter(out));
    return out;
  };
  auto diff = [](const std::vector<int>& x, const std::vector<int>& y) {
    std::vector<int> out;
    std::set_difference(x.begin(), x.end(), y.begin(), y.end(),
                        std::back_inserter(out));
    return out;
  };
  auto filt = [&](const std::vector<int>& x, auto pred) {
    std::vector<int> out;
    for (int i : x)
      if (pred(i)) out.push_back(i);
    return out;
  };
  const std::vector<int> empty;
  for (int k = 1; k <= K; ++k) {
    const auto& ek = p.active_set(k);
    const auto& below = (k > 1) ? p.active_set(k - 1) : empty;
    const auto& above = (k < K) ? p.active_set(k + 1) : empty;
    auto& pi = maps.per_interval[static_cast<size_t>(k) - 1];
    pi.d = inter(ek, below);
    pi.d_plus = filt(pi.d, [&](int i) { return m.in_e_plus(i); });
    pi.d_tilde = filt(pi.d, [&](int i) {
      return m.in_e_plus(i) && m.in_e_minus(i);
    });
    pi.d_bar = diff(ek, below);
    pi.d_bar_plus = filt(pi.d_bar, [&](int i) { return m.in_e_plus(i); });
    pi.u = inter(ek, above);
    pi.u_minus = filt(pi.u, [&](int i) { return m.in_e_minus(i); });
    pi.u_tilde = filt(pi.u, [&](int i) {
      return m.in_e_plus(i) && m.in_e_minus(i);
    });
    pi.u_bar = diff(ek, above);
    pi.u_bar_minus = filt(pi.u_bar, [&](int i) { return m.in_e_minus(i); });
  }
  return maps;
}

}  // namespace mmbm
