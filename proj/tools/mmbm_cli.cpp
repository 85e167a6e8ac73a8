// Command line front end: model validation, band decomposition, stationary
// laws, closed-form oracles, regeneration quantities, dividend values, Monte
// Carlo simulation, and the acceptance selftest.
//
// Exit codes: 0 success, 2 invalid input (bad file, bad flags, model fails
// validation), 3 numerical failure. Errors are printed to stderr as a single
// JSON object.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "mmbm/closed_forms.hpp"
#include "mmbm/decomposition.hpp"
#include "mmbm/distribution.hpp"
#include "mmbm/dividend.hpp"
#include "mmbm/errors.hpp"
#include "mmbm/io.hpp"
#include "mmbm/model.hpp"
#include "mmbm/selftest.hpp"
#include "mmbm/simulate.hpp"
#include "mmbm/stationary.hpp"

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

void emit(const std::string& dir, const std::string& name,
          const std::string& content) {
  std::filesystem::create_directories(dir);
  mmbm::write_file((std::filesystem::path(dir) / name).string(), content);
}

void emit_json(const std::string& dir, const std::string& name,
               const json& doc) {
  emit(dir, name, doc.dump(2) + "\n");
}

// Loads the file twice conceptually: raw bytes feed the manifest hash, the
// parsed document feeds the model builders.
struct LoadedModel {
  std::string bytes;
  json doc;
};

LoadedModel load(const std::string& path) {
  LoadedModel lm;
  lm.bytes = mmbm::read_file(path);
  lm.doc = mmbm::parse_json_text(lm.bytes, path);
  return lm;
}

struct TimedRun {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// Parameter extraction for the closed-form families. Each check failure is an
// input error so callers get exit code 2 with a message naming the mismatch.
mmbm::TwoStateCommonParams common_params_from(const mmbm::Model& m) {
  const char* op = "oracle";
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, op, what);
  };
  need(m.n() == 2, "this family needs exactly two states");
  need(m.mu(0) == m.mu(1), "this family needs equal drifts");
  need(m.sigma(0) == m.sigma(1), "this family needs equal volatilities");
  need(m.a(0) == 0.0 && m.a(1) == 0.0, "this family needs lower barriers at 0");
  need(m.b(0) < m.b(1), "this family needs b1 < b2");
  mmbm::TwoStateCommonParams p;
  p.mu = m.mu(0);
  p.sigma = m.sigma(0);
  p.q12 = m.q(0, 1);
  p.q21 = m.q(1, 0);
  p.b1 = m.b(0);
  p.b2 = m.b(1);
  return p;
}

mmbm::DividendTwoStateParams dividend_params_from(const mmbm::Model& m,
                                                  double delta) {
  const char* op = "oracle";
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, op, what);
  };
  need(m.n() == 2, "this family needs exactly two states");
  need(m.q(0, 1) == m.q(1, 0), "this family needs symmetric switching rates");
  need(m.a(0) == 0.0 && m.a(1) == 0.0, "this family needs lower barriers at 0");
  need(m.b(0) < m.b(1), "this family needs b1 < b2");
  mmbm::DividendTwoStateParams p;
  p.lambda = m.q(0, 1);
  p.delta = delta;
  p.mu1 = m.mu(0);
  p.mu2 = m.mu(1);
  p.sigma1 = m.sigma(0);
  p.sigma2 = m.sigma(1);
  p.b1 = m.b(0);
  p.b2 = m.b(1);
  return p;
}

json stationary_diagnostics(const mmbm::SolvedStationary& sol,
                            const mmbm::StationaryDistribution& dist) {
  return json{{"pi", vec_json(sol.pi)},
              {"kappa", mmbm::asymptotic_drift(sol.model, sol.pi)},
              {"unknowns", sol.unknowns},
              {"condition_estimate", sol.condition_estimate},
              {"linear_residual", sol.linear_residual},
              {"balance_residual", mmbm::balance_residual(dist, 1000)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-sided reflected Markov-modulated Brownian motion: stationary "
      "laws, regeneration quantities, dividend values, and simulation"};
  app.require_subcommand(1);

  std::string model_path, out_dir, family, mode;
  int grid = 400;
  double delta = 0.5;
  mmbm::SimConfig sim;
  sim.threads = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  long reps = -1;  // per-mode default resolved after parsing
  int j0 = 1;      // states are 1-based on the command line

  auto add_model = [&](CLI::App* sub) {
    sub->add_option("model", model_path, "model JSON file")->required();
  };
  auto add_out = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--out", out_dir, "output directory");
    if (required) opt->required();
  };

  CLI::App* c_validate =
      app.add_subcommand("validate", "check a model file and report pi, kappa");
  add_model(c_validate);
  add_out(c_validate, false);

  CLI::App* c_decompose = app.add_subcommand(
      "decompose", "print the barrier partition and active state sets");
  add_model(c_decompose);
  add_out(c_decompose, false);

  CLI::App* c_stationary = app.add_subcommand(
      "stationary", "solve the joint stationary distribution");
  add_model(c_stationary);
  add_out(c_stationary, true);
  c_stationary->add_option("--grid", grid, "points per state in cdf.csv");

  CLI::App* c_oracle = app.add_subcommand(
      "oracle", "evaluate a closed-form special case with the same schemas");
  add_model(c_oracle);
  add_out(c_oracle, true);
  c_oracle
      ->add_option("--family", family,
                   "one of: common, nodiff1, nodiff2, single, "
                   "dividend-two-state, dividend-single")
      ->required();
  c_oracle->add_option("--grid", grid, "points per state");
  c_oracle->add_option("--delta", delta, "discount rate (dividend families)");

  CLI::App* c_regen = app.add_subcommand(
      "regen", "closed-form regeneration rate and overshoot law");
  add_model(c_regen);
  add_out(c_regen, true);
  c_regen->add_option("--grid", grid, "points in regen.csv");

  CLI::App* c_dividend = app.add_subcommand(
      "dividend", "solve the expected discounted dividend value");
  add_model(c_dividend);
  add_out(c_dividend, true);
  c_dividend->add_option("--delta", delta, "discount rate")->required();
  c_dividend->add_option("--grid", grid, "points per state in value.csv");

  CLI::App* c_simulate =
      app.add_subcommand("simulate", "Monte Carlo estimates from paths");
  add_model(c_simulate);
  add_out(c_simulate, true);
  c_simulate
      ->add_option("--mode", mode, "one of: stationary, regen, dividend")
      ->required();
  c_simulate->add_option("--dt", sim.dt, "Euler step");
  c_simulate->add_option("--horizon", sim.horizon, "path horizon");
  c_simulate->add_option("--burn-in", sim.burn_in, "discarded initial time");
  c_simulate->add_option("--reps", reps, "replications (paths or payouts)");
  c_simulate->add_option("--seed", sim.seed, "base seed");
  c_simulate->add_option("--z0", sim.z0, "initial level");
  c_simulate->add_option("--j0", j0, "initial state, 1-based");
  c_simulate->add_option("--threads", sim.threads,
                         "worker threads (dividend mode)");
  c_simulate->add_option("--delta", delta, "discount rate (dividend mode)");
  c_simulate->add_option("--grid", grid, "points in the output grid");

  CLI::App* c_selftest = app.add_subcommand(
      "selftest", "run the acceptance checks; exit 0 only if all pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err{{"code", "ConfigInvalid"},
             {"op", "cli"},
             {"message", std::string(e.what())},
             {"detail", json::object()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (*c_selftest) return mmbm::run_acceptance(std::cout) ? 0 : 1;

    TimedRun timer;

    if (*c_validate) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json(lm.doc);
      Eigen::VectorXd pi = mmbm::stationary_vector(m.q);
      json atoms = json::array();
      for (int i = 0; i < m.n(); ++i) {
        if (m.atom_at_lower(i))
          atoms.push_back({{"state", i + 1}, {"location", m.a(i)}});
        if (m.atom_at_upper(i))
          atoms.push_back({{"state", i + 1}, {"location", m.b(i)}});
      }
      json report{{"ok", true},
                  {"states", m.n()},
                  {"pi", vec_json(pi)},
                  {"kappa", mmbm::asymptotic_drift(m, pi)},
                  {"expected_atoms", atoms}};
      std::cout << report.dump(2) << "\n";
      if (!out_dir.empty()) {
        emit_json(out_dir, "report.json", report);
        emit_json(out_dir, "manifest.json",
                  mmbm::make_manifest("validate", json::object(), lm.bytes, {},
                                      timer.seconds()));
      }
      return 0;
    }

    if (*c_decompose) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json(lm.doc);
      mmbm::IntervalPartition part = mmbm::compute_partition(m);
      json intervals = json::array();
      for (int k = 1; k <= part.K(); ++k) {
        json active = json::array();
        for (int i : part.active_set(k)) active.push_back(i + 1);
        intervals.push_back({{"index", k},
                             {"lo", part.lo(k)},
                             {"hi", part.hi(k)},
                             {"active", active}});
      }
      json report{{"breakpoints", part.breakpoints},
                  {"intervals", intervals}};
      std::cout << report.dump(2) << "\n";
      if (!out_dir.empty()) {
        emit_json(out_dir, "partition.json", report);
        emit_json(out_dir, "manifest.json",
                  mmbm::make_manifest("decompose", json::object(), lm.bytes,
                                      {}, timer.seconds()));
      }
      return 0;
    }

    if (*c_stationary) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json(lm.doc);
      mmbm::SolvedStationary sol = mmbm::solve_stationary_full(m);
      mmbm::StationaryDistribution dist = sol.to_distribution();
      emit(out_dir, "cdf.csv", mmbm::stationary_csv(dist, grid));
      emit_json(out_dir, "atoms.json", mmbm::atoms_json(dist));
      emit_json(out_dir, "diagnostics.json",
                stationary_diagnostics(sol, dist));
      emit_json(out_dir, "manifest.json",
                mmbm::make_manifest("stationary", json{{"grid", grid}},
                                    lm.bytes, {}, timer.seconds()));
      return 0;
    }

    if (*c_oracle) {
      LoadedModel lm = load(model_path);
      json cfg{{"family", family}, {"grid", grid}};
      if (family == "common" || family == "nodiff1" || family == "nodiff2" ||
          family == "single") {
        mmbm::Model m = mmbm::model_from_json(lm.doc);
        mmbm::StationaryDistribution dist;
        if (family == "common")
          dist = mmbm::cf_common_two_state(common_params_from(m));
        else if (family == "nodiff1")
          dist = mmbm::cf_nodiff_state1(m);
        else if (family == "nodiff2")
          dist = mmbm::cf_nodiff_state2(m);
        else {
          if (m.n() != 1)
            throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, "oracle",
                              "this family needs exactly one state");
          dist = mmbm::cf_single_state(m.mu(0), m.sigma(0), m.a(0), m.b(0));
        }
        emit(out_dir, "cdf.csv", mmbm::stationary_csv(dist, grid));
        emit_json(out_dir, "atoms.json", mmbm::atoms_json(dist));
        emit_json(out_dir, "diagnostics.json", json{{"family", family}});
      } else if (family == "dividend-two-state" ||
                 family == "dividend-single") {
        cfg["delta"] = delta;
        mmbm::Model m = mmbm::model_from_json_core(lm.doc);
        mmbm::ValueFunction vf;
        if (family == "dividend-two-state") {
          vf = mmbm::cf_dividend_two_state(dividend_params_from(m, delta));
        } else {
          if (m.n() != 1)
            throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, "oracle",
                              "this family needs exactly one state");
          vf = mmbm::cf_dividend_single_state(m.mu(0), m.sigma(0), delta,
                                              m.b(0));
        }
        emit(out_dir, "value.csv", mmbm::dividend_csv(vf, grid));
        emit_json(out_dir, "diagnostics.json",
                  json{{"family", family}, {"delta", delta}});
      } else {
        throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, "oracle",
                          "unknown family", {{"family", family}});
      }
      emit_json(out_dir, "manifest.json",
                mmbm::make_manifest("oracle", cfg, lm.bytes, {},
                                    timer.seconds()));
      return 0;
    }

    if (*c_regen) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json(lm.doc);
      mmbm::RegenerationResult r =
          mmbm::cf_regeneration(common_params_from(m));
      emit(out_dir, "regen.csv", mmbm::regen_csv(r, grid));
      emit_json(out_dir, "diagnostics.json", json{{"eta", r.eta}});
      emit_json(out_dir, "manifest.json",
                mmbm::make_manifest("regen", json{{"grid", grid}}, lm.bytes,
                                    {}, timer.seconds()));
      return 0;
    }

    if (*c_dividend) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json_core(lm.doc);
      mmbm::SolvedDividend sol = mmbm::solve_dividend_full(m, delta);
      mmbm::ValueFunction vf = sol.to_value_function();
      mmbm::DividendBoundaryReport rep = mmbm::verify_boundary(vf);
      emit(out_dir, "value.csv", mmbm::dividend_csv(vf, grid));
      emit_json(out_dir, "diagnostics.json",
                json{{"delta", delta},
                     {"unknowns", sol.unknowns},
                     {"condition_estimate", sol.condition_estimate},
                     {"linear_residual", sol.linear_residual},
                     {"constants", vec_json(sol.constants)},
                     {"residual", mmbm::dividend_residual(vf, 1000)},
                     {"entry_residual", rep.entry_residual},
                     {"pasting_residual", rep.pasting_residual},
                     {"continuity_gap", rep.continuity_gap},
                     {"differentiability_gap", rep.differentiability_gap},
                     {"boundary_pass", rep.pass}});
      emit_json(out_dir, "manifest.json",
                mmbm::make_manifest("dividend",
                                    json{{"delta", delta}, {"grid", grid}},
                                    lm.bytes, {}, timer.seconds()));
      return 0;
    }

    if (*c_simulate) {
      LoadedModel lm = load(model_path);
      mmbm::Model m = mmbm::model_from_json_core(lm.doc);
      if (j0 < 1 || j0 > m.n())
        throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, "simulate",
                          "initial state out of range",
                          {{"j0", j0}, {"states", m.n()}});
      sim.j0 = j0 - 1;
      // Payout accumulation has no warm-up phase; only an explicit flag
      // keeps a burn-in there.
      if (mode == "dividend" && c_simulate->count("--burn-in") == 0)
        sim.burn_in = 0.0;
      json cfg{{"mode", mode},     {"dt", sim.dt},
               {"horizon", sim.horizon}, {"burn_in", sim.burn_in},
               {"seed", sim.seed}, {"z0", sim.z0},
               {"j0", j0},         {"threads", sim.threads},
               {"grid", grid}};
      std::vector<std::uint64_t> seeds{sim.seed};
      json diagnostics;

      if (mode == "stationary") {
        int r = static_cast<int>(reps < 0 ? 3 : reps);
        cfg["reps"] = r;
        seeds.clear();
        for (int i = 0; i < r; ++i)
          seeds.push_back(sim.seed + static_cast<std::uint64_t>(i));
        mmbm::SimStationarySummary s =
            mmbm::summarize_stationary_paths(m, sim, r, grid);
        emit(out_dir, "cdf.csv", mmbm::simulate_stationary_csv(s));
        diagnostics = json{{"replications", r}};
      } else if (mode == "regen") {
        cfg["reps"] = 1;
        mmbm::RegenEstimate reg =
            mmbm::empirical_regeneration(mmbm::simulate_path(m, sim));
        emit(out_dir, "regen.csv",
             mmbm::simulate_regen_csv(reg, m.b(0), m.b.maxCoeff(), grid));
        diagnostics = json{{"eta_hat", reg.eta_hat},
                           {"eta_ci_halfwidth", reg.eta_ci_halfwidth},
                           {"overshoot_ci_halfwidth",
                            reg.overshoot_ci_halfwidth},
                           {"cycles", reg.cycles}};
      } else if (mode == "dividend") {
        sim.replications = reps < 0 ? 10000 : reps;
        cfg["reps"] = sim.replications;
        cfg["delta"] = delta;
        mmbm::DividendEstimate est =
            mmbm::empirical_dividend(m, delta, sim.z0, sim.j0, sim);
        emit(out_dir, "value.csv",
             mmbm::simulate_dividend_csv(j0, sim.z0, est));
        diagnostics = json{{"mean", est.mean},
                           {"std_error", est.std_error},
                           {"ruin_fraction", est.ruin_fraction},
                           {"no_ruin", est.no_ruin},
                           {"truncated", est.truncated},
                           {"replications", est.replications}};
      } else {
        throw mmbm::Error(mmbm::ErrorCode::ConfigInvalid, "simulate",
                          "unknown mode", {{"mode", mode}});
      }
      emit_json(out_dir, "diagnostics.json", diagnostics);
      emit_json(out_dir, "manifest.json",
                mmbm::make_manifest("simulate", cfg, lm.bytes, seeds,
                                    timer.seconds()));
      return 0;
    }

    return 0;
  } catch (const mmbm::Error& e) {
    std::cerr << e.to_json().dump() << "\n";
    return mmbm::is_input_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    json err{{"code", "Unknown"},
             {"op", "cli"},
             {"message", std::string(e.what())},
             {"detail", json::object()}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
}
