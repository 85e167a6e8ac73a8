#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mmbm/decomposition.hpp"
#include "mmbm/dividend.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"

namespace mmbm {

// Monte Carlo configuration shared by the path estimators.
struct SimConfig {
  double dt = 1e-3;
  double horizon = 2e4;
  double burn_in = 1e3;
  long replications = 10000;
  std::uint64_t seed = 1;
  double z0 = 0.0;
  int j0 = 0;
  int threads = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// One reproducible stream per replication. Results are merged in replication
// order, so the thread count cannot change any output.
inline std::mt19937_64 replication_stream(std::uint64_t seed,
                                          std::uint64_t rep) {
  return std::mt19937_64(splitmix64(splitmix64(seed) + rep));
}

struct PathRng {
  std::mt19937_64 gen;
  std::normal_distribution<double> gauss{0.0, 1.0};
  std::uniform_real_distribution<double> unif{0.0, 1.0};

  explicit PathRng(std::mt19937_64 g) : gen(g) {}
  double normal() { return gauss(gen); }
  double uniform() { return unif(gen); }
  double exponential(double rate) {
    if (!(rate > 0))
      return std::numeric_limits<double>::infinity();
    return -std::log1p(-unif(gen)) / rate;
  }
  int next_state(const Model& m, int j) {
    double total = -m.q(j, j);
    double u = unif(gen) * total;
    double acc = 0.0;
    int last = j == 0 ? 1 : 0;
    for (int k = 0; k < m.n(); ++k) {
      if (k == j || m.q(j, k) <= 0.0) continue;
      acc += m.q(j, k);
      last = k;
      if (u < acc) return k;
    }
    return last;
  }
};

inline void check_sim_config(const Model& m, const SimConfig& cfg,
                             const std::string& op) {
  if (!(cfg.dt > 0) || !std::isfinite(cfg.dt))
    throw Error(ErrorCode::ConfigInvalid, op, "dt must be positive");
  if (!(cfg.horizon > cfg.burn_in) || !(cfg.burn_in >= 0))
    throw Error(ErrorCode::ConfigInvalid, op,
                "needs 0 <= burn_in < horizon");
  if (cfg.replications < 1)
    throw Error(ErrorCode::ConfigInvalid, op, "replications must be >= 1");
  if (cfg.threads < 1)
    throw Error(ErrorCode::ConfigInvalid, op, "threads must be >= 1");
  if (cfg.j0 < 0 || cfg.j0 >= m.n())
    throw Error(ErrorCode::ConfigInvalid, op, "initial state out of range");
  IntervalPartition part = compute_partition(m);
  double min_width = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= part.K(); ++k)
    min_width = std::min(min_width, part.hi(k) - part.lo(k));
  if (!(cfg.dt <= min_width / 10.0))
    throw Error(ErrorCode::ConfigInvalid, op,
                "dt must be at most one tenth of the narrowest interval",
                {{"dt", cfg.dt}, {"min_width", min_width}});
}

}  // namespace detail

// Accumulated statistics of one simulated path. Occupancy time at interior
// positions lands in a fixed fine histogram; time spent exactly on a barrier
// is kept separate so empirical atoms are exact. Dividend samples are filled
// by empirical_dividend, which runs one path per replication.
struct PathEstimates {
  Model model;
  SimConfig config;
  double elapsed = 0.0;
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  Eigen::MatrixXd hist;            // state by bin, recorded time
  Eigen::VectorXd occupancy;       // total recorded time per state
  Eigen::VectorXd atom_low;        // time exactly at a(i)
  Eigen::VectorXd atom_high;       // time exactly at b(i)
  Eigen::VectorXd lower_regulator; // accumulated push up from a(i)
  Eigen::VectorXd upper_regulator; // accumulated push down from b(i)
  std::vector<double> regen_times;
  std::vector<double> regen_overshoots;
  std::vector<double> dividend_samples;
  std::vector<char> ruin_flags;
};

inline constexpr int kHistBins = 4096;

// Simulates one reflected modulated path: exact exponential sojourns, Euler
// steps inside each sojourn, projected (clamped) reflection at the barriers
// with the clamped amounts accumulated into the regulators, and a clamp into
// the new band at every switch. Deterministic for a fixed seed.
inline PathEstimates simulate_path(const Model& raw, const SimConfig& cfg) {
  const char* op = "simulate_path";
  Model m = validate_model_core(raw.q, raw.mu, raw.sigma, raw.a, raw.b, op);
  detail::check_sim_config(m, cfg, op);

  PathEstimates est;
  est.model = m;
  est.config = cfg;
  est.grid_lo = m.a.minCoeff();
  est.grid_hi = m.b.maxCoeff();
  est.hist = Eigen::MatrixXd::Zero(m.n(), kHistBins);
  est.occupancy = Eigen::VectorXd::Zero(m.n());
  est.atom_low = Eigen::VectorXd::Zero(m.n());
  est.atom_high = Eigen::VectorXd::Zero(m.n());
  est.lower_regulator = Eigen::VectorXd::Zero(m.n());
  est.upper_regulator = Eigen::VectorXd::Zero(m.n());
  const double bin_width = (est.grid_hi - est.grid_lo) / kHistBins;

  detail::PathRng rng(detail::replication_stream(cfg.seed, 0));
  int j = cfg.j0;
  double z = std::min(std::max(cfg.z0, m.a(j)), m.b(j));
  double t = 0.0;

  auto record = [&](int state, double pos, double weight) {
    est.occupancy(state) += weight;
    if (pos == m.a(state)) {
      est.atom_low(state) += weight;
    } else if (pos == m.b(state)) {
      est.atom_high(state) += weight;
    } else {
      int bin = static_cast<int>((pos - est.grid_lo) / bin_width);
      bin = std::min(std::max(bin, 0), kHistBins - 1);
      est.hist(state, bin) += weight;
    }
  };

  while (t < cfg.horizon) {
    double sojourn = rng.exponential(-m.q(j, j));
    double t_end = std::min(t + sojourn, cfg.horizon);
    while (t < t_end) {
      double h = std::min(cfg.dt, t_end - t);
      z += m.mu(j) * h + m.sigma(j) * std::sqrt(h) * rng.normal();
      if (m.sigma(j) > 0.0 && m.b(j) > m.a(j)) {
        // Symmetrized reflection for diffusive states: fold overshoots back
        // into the band. Plain clamping parks an O(sqrt(dt)) artificial atom
        // on the barrier and misses the CDF tolerance; folding is weak order
        // one at the barrier. The folded amount is still the regulator push.
        while (z < m.a(j) || z > m.b(j)) {
          if (z < m.a(j)) {
            est.lower_regulator(j) += m.a(j) - z;
            z = 2.0 * m.a(j) - z;
          } else {
            est.upper_regulator(j) += z - m.b(j);
            z = 2.0 * m.b(j) - z;
          }
        }
      } else if (z < m.a(j)) {
        est.lower_regulator(j) += m.a(j) - z;
        z = m.a(j);
      } else if (z > m.b(j)) {
        est.upper_regulator(j) += z - m.b(j);
        z = m.b(j);
      }
      t += h;
      if (!(z >= m.a(j) && z <= m.b(j)))
        throw Error(ErrorCode::NumericallySingular, op,
                    "path left its barrier band");
      if (t > cfg.burn_in) record(j, z, std::min(h, t - cfg.burn_in));
    }
    if (t >= cfg.horizon) break;
    int k = rng.next_state(m, j);
    double pre = z;
    if (z > m.b(k)) {
      est.upper_regulator(k) += z - m.b(k);
      z = m.b(k);
      if (k == 0 && pre > m.b(0) + 1e-9 && t > cfg.burn_in) {
        est.regen_times.push_back(t);
        est.regen_overshoots.push_back(pre);
      }
    } else if (z < m.a(k)) {
      est.lower_regulator(k) += m.a(k) - z;
      z = m.a(k);
    }
    j = k;
  }
  est.elapsed = est.occupancy.sum();
  return est;
}

// Time-average CDF estimate: row i, column g holds the fraction of recorded
// time with J = i and Z <= grid[g]. Histogram bins count as below the query
// point when their left edge is, so the in-bin error is at most one bin of
// diffuse mass.
inline Eigen::MatrixXd empirical_stationary(const PathEstimates& est,
                                            const std::vector<double>& grid) {
  if (!(est.elapsed > 0))
    throw Error(ErrorCode::ConfigInvalid, "empirical_stationary",
                "no recorded time after burn-in");
  int n = est.model.n();
  double bin_width = (est.grid_hi - est.grid_lo) / kHistBins;
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(n, kHistBins + 1);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < kHistBins; ++k)
      prefix(i, k + 1) = prefix(i, k) + est.hist(i, k);
  Eigen::MatrixXd cdf(n, static_cast<int>(grid.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double zq = grid[g];
    int full = 0;
    if (zq >= est.grid_lo)
      full = std::min(
          static_cast<int>(std::floor((zq - est.grid_lo) / bin_width)) + 1,
          kHistBins);
    for (int i = 0; i < n; ++i) {
      double mass = prefix(i, full);
      if (est.model.a(i) <= zq) mass += est.atom_low(i);
      if (est.model.b(i) <= zq) mass += est.atom_high(i);
      cdf(i, static_cast<int>(g)) = mass / est.elapsed;
    }
  }
  return cdf;
}

// Regeneration statistics of the clamping down-jumps into the first state.
struct RegenEstimate {
  double eta_hat = 0.0;
  double eta_ci_halfwidth = 0.0;       // 95% Poisson-style band
  double overshoot_ci_halfwidth = 0.0; // 95% DKW band for the CDF
  long cycles = 0;
  std::vector<double> overshoots;      // sorted pre-jump positions

  double cdf(double z) const {
    if (overshoots.empty()) return 0.0;
    auto it = std::upper_bound(overshoots.begin(), overshoots.end(), z);
    return static_cast<double>(it - overshoots.begin()) /
           static_cast<double>(overshoots.size());
  }
};

inline RegenEstimate empirical_regeneration(const PathEstimates& est) {
  const char* op = "empirical_regeneration";
  long cycles = static_cast<long>(est.regen_times.size());
  if (cycles < 200)
    throw Error(ErrorCode::TooFewCycles, op,
                "need at least 200 regeneration cycles",
                {{"cycles", cycles}});
  RegenEstimate r;
  r.cycles = cycles;
  r.eta_hat = static_cast<double>(cycles) / est.elapsed;
  r.eta_ci_halfwidth = 1.96 * std::sqrt(static_cast<double>(cycles)) /
                       est.elapsed;
  r.overshoots = est.regen_overshoots;
  std::sort(r.overshoots.begin(), r.overshoots.end());
  r.overshoot_ci_halfwidth =
      1.36 / std::sqrt(static_cast<double>(cycles));
  return r;
}

// Discounted dividend estimate from independent replications.
struct DividendEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ruin_fraction = 0.0;
  long replications = 0;
  long no_ruin = 0;       // paths that hit the horizon before ruin
  bool truncated = false; // true when no_ruin > 0
  std::vector<double> samples;
};

namespace detail {

// One surplus path: reflected above at b(J), absorbed at 0. Returns the
// discounted payout and whether ruin happened before the horizon. A Brownian
// bridge draw catches barrier crossings between grid points, which removes
// the leading discretization bias of the ruin time.
inline std::pair<double, bool> dividend_replication(const Model& m,
                                                    double delta, double z0,
                                                    int j0,
                                                    const SimConfig& cfg,
                                                    std::uint64_t rep) {
  PathRng rng(replication_stream(cfg.seed, rep));
  double t = 0.0, z = z0, pay = 0.0;
  int j = j0;
  if (z <= 0.0) return {0.0, true};
  while (t < cfg.horizon) {
    double sojourn = rng.exponential(-m.q(j, j));
    double t_end = std::min(t + sojourn, cfg.horizon);
    bool ruined = false;
    while (t < t_end) {
      double h = std::min(cfg.dt, t_end - t);
      if (m.sigma(j) > 0.0) {
        double s2h = m.sigma(j) * m.sigma(j) * h;
        double znew = z + m.mu(j) * h + std::sqrt(s2h) * rng.normal();
        if (znew <= 0.0) {
          ruined = true;
          t += h;
          break;
        }
        if (rng.uniform() < std::exp(-2.0 * z * znew / s2h)) {
          ruined = true;
          t += 0.5 * h;
          break;
        }
        // Exact one-step upper reflection: draw the running maximum of the
        // Brownian bridge between the endpoints and pay out its excess over
        // the barrier. Paying only the endpoint overshoot would miss the
        // intra-step touches and bias the payout low by O(sqrt(dt)).
        double d = znew - z;
        double mx = 0.5 * (z + znew +
                           std::sqrt(d * d - 2.0 * s2h *
                                                 std::log1p(-rng.uniform())));
        if (mx > m.b(j)) {
          double push = mx - m.b(j);
          pay += std::exp(-delta * (t + h)) * push;
          znew -= push;
          if (znew <= 0.0) {
            ruined = true;
            t += h;
            break;
          }
        }
        z = znew;
        t += h;
      } else {
        double znew = z + m.mu(j) * h;
        if (znew <= 0.0) {
          t += z / -m.mu(j);
          ruined = true;
          break;
        }
        if (znew > m.b(j)) {
          pay += std::exp(-delta * (t + h)) * (znew - m.b(j));
          znew = m.b(j);
        }
        z = znew;
        t += h;
      }
    }
    if (ruined) return {pay, true};
    if (t >= cfg.horizon) break;
    int k = rng.next_state(m, j);
    if (z > m.b(k)) {
      pay += std::exp(-delta * t) * (z - m.b(k));
      z = m.b(k);
    }
    j = k;
  }
  return {pay, false};
}

}  // namespace detail

inline DividendEstimate empirical_dividend(const Model& raw, double delta,
                                           double z0, int j0,
                                           const SimConfig& cfg) {
  const char* op = "empirical_dividend";
  Model m = validate_dividend_model(raw, delta);
  detail::check_sim_config(m, cfg, op);
  if (j0 < 0 || j0 >= m.n())
    throw Error(ErrorCode::ConfigInvalid, op, "initial state out of range");
  if (!(z0 >= 0.0 && z0 <= m.b(j0)))
    throw Error(ErrorCode::ConfigInvalid, op,
                "initial level must lie in [0, b(j0)]");

  long reps = cfg.replications;
  DividendEstimate out;
  out.replications = reps;
  out.samples.assign(static_cast<std::size_t>(reps), 0.0);
  std::vector<char> ruined(static_cast<std::size_t>(reps), 0);

  auto worker = [&](long first) {
    for (long r = first; r < reps; r += cfg.threads) {
      auto res = detail::dividend_replication(m, delta, z0, j0, cfg,
                                              static_cast<std::uint64_t>(r));
      out.samples[static_cast<std::size_t>(r)] = res.first;
      ruined[static_cast<std::size_t>(r)] = res.second ? 1 : 0;
    }
  };
  if (cfg.threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  double sum = 0.0;
  long ruin_count = 0;
  for (long r = 0; r < reps; ++r) {
    sum += out.samples[static_cast<std::size_t>(r)];
    ruin_count += ruined[static_cast<std::size_t>(r)];
  }
  out.mean = sum / static_cast<double>(reps);
  double ss = 0.0;
  for (double x : out.samples) ss += (x - out.mean) * (x - out.mean);
  if (reps > 1)
    out.std_error = std::sqrt(ss / static_cast<double>(reps - 1) /
                              static_cast<double>(reps));
  out.ruin_fraction = static_cast<double>(ruin_count) /
                      static_cast<double>(reps);
  out.no_ruin = reps - ruin_count;
  out.truncated = out.no_ruin > 0;
  return out;
}

// Laplace transform of the first exit time of (-h, h) by a Brownian motion
// started at 0, estimated by simulation with bridge-corrected crossings.
struct ExitEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  long replications = 0;
};

inline ExitEstimate exit_lst_mc(double h, double mu, double sigma, double rate,
                                long reps = 20000, double dt = 0.0,
                                std::uint64_t seed = 99, int threads = 1) {
  const char* op = "exit_lst_mc";
  if (!(h > 0) || !(sigma > 0) || !(rate > 0))
    throw Error(ErrorCode::ConfigInvalid, op,
                "needs h > 0, sigma > 0, rate > 0");
  if (reps < 2 || threads < 1)
    throw Error(ErrorCode::ConfigInvalid, op, "needs reps >= 2, threads >= 1");
  if (dt <= 0.0) dt = (h / sigma) * (h / sigma) / 200.0;

  std::vector<double> samples(static_cast<std::size_t>(reps), 0.0);
  auto worker = [&](long first) {
    for (long r = first; r < reps; r += threads) {
      detail::PathRng rng(detail::replication_stream(
          seed, static_cast<std::uint64_t>(r)));
      double x = 0.0, t = 0.0;
      double exit_time = -1.0;
      while (exit_time < 0.0) {
        double xn = x + mu * dt + sigma * std::sqrt(dt) * rng.normal();
        if (xn >= h || xn <= -h) {
          exit_time = t + dt;
          break;
        }
        double pu = std::exp(-2.0 * (h - x) * (h - xn) / (sigma * sigma * dt));
        double pd = std::exp(-2.0 * (h + x) * (h + xn) / (sigma * sigma * dt));
        if (rng.uniform() < pu || rng.uniform() < pd) {
          exit_time = t + 0.5 * dt;
          break;
        }
        x = xn;
        t += dt;
      }
      samples[static_cast<std::size_t>(r)] = std::exp(-rate * exit_time);
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  ExitEstimate out;
  out.replications = reps;
  double sum = 0.0;
  for (double s : samples) sum += s;
  out.estimate = sum / static_cast<double>(reps);
  double ss = 0.0;
  for (double s : samples) ss += (s - out.estimate) * (s - out.estimate);
  out.std_error = std::sqrt(ss / static_cast<double>(reps - 1) /
                            static_cast<double>(reps));
  return out;
}

}  // namespace mmbm
