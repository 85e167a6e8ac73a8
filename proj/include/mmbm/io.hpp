#pragma once

// File handling for the command line tool: model files, byte-stable CSV
// emission, and run manifests. The CSV builders return strings so callers
// can also compare outputs for exact reproducibility.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmbm/closed_forms.hpp"
#include "mmbm/distribution.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/model.hpp"
#include "mmbm/simulate.hpp"

namespace mmbm {

inline constexpr const char* kToolVersion = "0.1.0";

// 17 significant digits round-trip a double exactly and print identically
// across runs, which the reproducibility checks rely on. Negative zero is
// folded into zero so formulas that underflow from below print cleanly.
inline std::string format17(double x) {
  if (x == 0.0) x = 0.0;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf);
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string(buf);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::ConfigInvalid, "read_file",
                "cannot open file", {{"path", path}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::ConfigInvalid, "write_file",
                "cannot open file for writing", {{"path", path}});
  out << content;
  if (!out)
    throw Error(ErrorCode::ConfigInvalid, "write_file", "write failed",
                {{"path", path}});
}

inline nlohmann::json parse_json_text(const std::string& text,
                                      const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "parse_json",
                std::string("invalid JSON: ") + e.what(),
                {{"origin", origin}});
  }
}

// CSV over each state's own band [a(i), b(i)]: state index is 1-based,
// cdf includes any barrier atom at b(i), density is the absolutely
// continuous part.
inline std::string stationary_csv(const StationaryDistribution& dist,
                                  int grid_points) {
  if (grid_points < 2)
    throw Error(ErrorCode::ConfigInvalid, "stationary_csv",
                "grid needs at least two points", {{"grid", grid_points}});
  std::ostringstream out;
  out << "state,z,cdf,density\n";
  for (int i = 0; i < dist.model.n(); ++i) {
    double lo = dist.model.a(i), hi = dist.model.b(i);
    for (int g = 0; g < grid_points; ++g) {
      double z = lo + (hi - lo) * static_cast<double>(g) /
                          static_cast<double>(grid_points - 1);
      out << (i + 1) << ',' << format17(z) << ','
          << format17(dist.evaluate_cdf(z, i)) << ','
          << format17(dist.evaluate_density(z, i)) << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json atoms_json(const StationaryDistribution& dist) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Atom& at : dist.atoms)
    arr.push_back({{"state", at.state + 1},
                   {"location", at.location},
                   {"mass", at.mass}});
  return arr;
}

inline std::string dividend_csv(const ValueFunction& vf, int grid_points) {
  if (grid_points < 2)
    throw Error(ErrorCode::ConfigInvalid, "dividend_csv",
                "grid needs at least two points", {{"grid", grid_points}});
  std::ostringstream out;
  out << "state,z,value,derivative\n";
  for (int j = 0; j < vf.model.n(); ++j) {
    double hi = vf.model.b(j);
    for (int g = 0; g < grid_points; ++g) {
      double z = hi * static_cast<double>(g) /
                 static_cast<double>(grid_points - 1);
      out << (j + 1) << ',' << format17(z) << ',' << format17(vf.rep(j, z, 0))
          << ',' << format17(vf.rep(j, z, 1)) << '\n';
    }
  }
  return out.str();
}

inline std::string regen_csv(const RegenerationResult& r, int grid_points) {
  if (grid_points < 2)
    throw Error(ErrorCode::ConfigInvalid, "regen_csv",
                "grid needs at least two points", {{"grid", grid_points}});
  std::ostringstream out;
  out << "z,H\n";
  for (int g = 0; g < grid_points; ++g) {
    double z = r.b1 + (r.b2 - r.b1) * static_cast<double>(g) /
                          static_cast<double>(grid_points - 1);
    out << format17(z) << ',' << format17(r.H(z)) << '\n';
  }
  return out.str();
}

// Empirical counterparts used by the simulate subcommand.

inline std::string simulate_regen_csv(const RegenEstimate& est,
                                      double b_low, double b_high,
                                      int grid_points) {
  std::ostringstream out;
  out << "z,H,se\n";
  double n = static_cast<double>(est.cycles);
  for (int g = 0; g < grid_points; ++g) {
    double z = b_low + (b_high - b_low) * static_cast<double>(g) /
                           static_cast<double>(grid_points - 1);
    double h = est.cdf(z);
    double se = n > 0 ? std::sqrt(std::max(0.0, h * (1.0 - h) / n)) : 0.0;
    out << format17(z) << ',' << format17(h) << ',' << format17(se) << '\n';
  }
  return out.str();
}

inline std::string simulate_dividend_csv(int state_one_based, double z0,
                                         const DividendEstimate& est) {
  std::ostringstream out;
  out << "state,z,value,value_se\n";
  out << state_one_based << ',' << format17(z0) << ',' << format17(est.mean)
      << ',' << format17(est.std_error) << '\n';
  return out.str();
}

// Mean and standard error of the repeated-path empirical CDF per state on a
// shared grid spanning the union of the bands.
struct SimStationarySummary {
  std::vector<double> grid;
  Eigen::MatrixXd mean;  // state by grid point
  Eigen::MatrixXd se;
};

inline SimStationarySummary summarize_stationary_paths(const Model& m,
                                                       const SimConfig& base,
                                                       int replications,
                                                       int grid_points) {
  if (replications < 1)
    throw Error(ErrorCode::ConfigInvalid, "summarize_stationary_paths",
                "need at least one replication", {{"reps", replications}});
  if (grid_points < 2)
    throw Error(ErrorCode::ConfigInvalid, "summarize_stationary_paths",
                "grid needs at least two points", {{"grid", grid_points}});
  SimStationarySummary s;
  double lo = m.a.minCoeff(), hi = m.b.maxCoeff();
  s.grid.resize(static_cast<size_t>(grid_points));
  for (int g = 0; g < grid_points; ++g)
    s.grid[static_cast<size_t>(g)] =
        lo + (hi - lo) * static_cast<double>(g) /
                 static_cast<double>(grid_points - 1);
  const int n = m.n();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, grid_points);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(n, grid_points);
  for (int r = 0; r < replications; ++r) {
    SimConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(r);
    PathEstimates est = simulate_path(m, cfg);
    Eigen::MatrixXd emp = empirical_stationary(est, s.grid);
    sum += emp;
    sum_sq += emp.cwiseProduct(emp);
  }
  s.mean = sum / static_cast<double>(replications);
  if (replications > 1) {
    Eigen::MatrixXd var =
        (sum_sq - sum.cwiseProduct(sum) / static_cast<double>(replications)) /
        static_cast<double>(replications - 1);
    s.se = (var.cwiseMax(0.0) / static_cast<double>(replications))
               .cwiseSqrt();
  } else {
    s.se = Eigen::MatrixXd::Zero(n, grid_points);
  }
  return s;
}

inline std::string simulate_stationary_csv(const SimStationarySummary& s) {
  std::ostringstream out;
  out << "state,z,cdf,cdf_se\n";
  for (int i = 0; i < s.mean.rows(); ++i)
    for (int g = 0; g < s.mean.cols(); ++g)
      out << (i + 1) << ',' << format17(s.grid[static_cast<size_t>(g)]) << ','
          << format17(s.mean(i, g)) << ',' << format17(s.se(i, g)) << '\n';
  return out.str();
}

inline nlohmann::json make_manifest(const std::string& subcommand,
                                    const nlohmann::json& config,
                                    const std::string& input_bytes,
                                    const std::vector<std::uint64_t>& seeds,
                                    double wall_clock_seconds) {
  nlohmann::json seed_arr = nlohmann::json::array();
  for (std::uint64_t s : seeds) seed_arr.push_back(s);
  return nlohmann::json{
      {"subcommand", subcommand},
      {"version", kToolVersion},
      {"input_hash", input_bytes.empty() ? "" : fnv1a64_hex(input_bytes)},
      {"config", config},
      {"seeds", seed_arr},
      {"wall_clock_seconds", wall_clock_seconds}};
}

}  // namespace mmbm
