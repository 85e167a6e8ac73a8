#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmbm/errors.hpp"

namespace mmbm {

// Markov-modulated Brownian motion instance: background chain generator q,
// per-state drift mu, diffusion sigma >= 0 and barriers a <= b. Immutable
// after validation; all member functions are const.
struct Model {
  Eigen::MatrixXd q;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  Eigen::VectorXd a;
  Eigen::VectorXd b;

  int n() const { return static_cast<int>(mu.size()); }

  double max_rate() const {
    double m = 0.0;
    for (int i = 0; i < n(); ++i)
      for (int j = 0; j < n(); ++j) m = std::max(m, std::abs(q(i, j)));
    return m;
  }

  // States whose CDF can be pushed to 0 at their lower barrier (no atom there).
  bool in_e_plus(int i) const { return sigma(i) > 0.0 || mu(i) > 0.0; }
  // States whose CDF reaches pi_i continuously at their upper barrier.
  bool in_e_minus(int i) const { return sigma(i) > 0.0 || mu(i) < 0.0; }

  bool atom_at_lower(int i) const { return sigma(i) == 0.0 && mu(i) < 0.0; }
  bool atom_at_upper(int i) const { return sigma(i) == 0.0 && mu(i) > 0.0; }
  bool inert(int i) const { return sigma(i) == 0.0 && mu(i) == 0.0; }

  // True when Z is a deterministic function of J (every state inert); the
  // stationary solver rejects such models, the simulator accepts them.
  bool deterministic_of_j() const {
    for (int i = 0; i < n(); ++i)
      if (!inert(i)) return false;
    return true;
  }
};

struct StateClassification {
  std::vector<int> e_plus;
  std::vector<int> e_minus;
};

inline StateClassification classify_states(const Model& m) {
  StateClassification c;
  for (int i = 0; i < m.n(); ++i) {
    if (m.in_e_plus(i)) c.e_plus.push_back(i);
    if (m.in_e_minus(i)) c.e_minus.push_back(i);
  }
  return c;
}

// pi with pi q = 0, sum pi = 1, pi > 0. Dense solve with one equation
// replaced by the normalization row.
inline Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(q.rows());
  if (n == 1) return Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd m = q.transpose();
  m.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible())
    throw Error(ErrorCode::SingularSystem, "stationary_vector",
                "normalized balance system is singular");
  Eigen::VectorXd pi = lu.solve(rhs);
  pi /= pi.sum();
  double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  double resid = (pi.transpose() * q).cwiseAbs().maxCoeff();
  if (resid > 1e-10 * scale || pi.minCoeff() <= 0.0)
    throw Error(ErrorCode::SingularSystem, "stationary_vector",
                "solution fails pi q = 0 or positivity",
                {{"residual", resid}});
  return pi;
}

inline double asymptotic_drift(const Model& m, const Eigen::VectorXd& pi) {
  return m.mu.dot(pi);
}

inline double asymptotic_drift(const Model& m) {
  return asymptotic_drift(m, stationary_vector(m.q));
}

namespace detail {

// Strong connectivity of the support digraph (edge i->j iff q_ij > 0):
// forward and backward reachability from state 0 must both cover everything.
inline bool strongly_connected(const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(q.rows());
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v) {
        double rate = forward ? q(u, v) : q(v, u);
        if (u != v && rate > 0.0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return std::count(seen.begin(), seen.end(), 1) == n;
  };
  return reach(true) && reach(false);
}

inline void require_finite(const Eigen::VectorXd& v, const std::string& field,
                           const std::string& op) {
  for (int i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i)))
      throw Error(ErrorCode::ConfigInvalid, op, "non-finite entry in " + field,
                  {{"field", field}, {"index", i + 1}});
}

}  // namespace detail

// Shape, rate, irreducibility and barrier checks shared by the stationary
// and dividend entry points. Row sums within 1e-12 relative tolerance are
// re-normalized by adjusting the diagonal (JSON round-trips lose trailing
// bits). The drift-degeneracy check does NOT live here: it only concerns the
// stationary problem.
inline Model validate_model_core(Eigen::MatrixXd q, Eigen::VectorXd mu,
                                 Eigen::VectorXd sigma, Eigen::VectorXd a,
                                 Eigen::VectorXd b,
                                 const std::string& op = "validate_model") {
  const int n = static_cast<int>(mu.size());
  if (n < 1)
    throw Error(ErrorCode::ConfigInvalid, op, "model needs at least one state");
  if (q.rows() != n || q.cols() != n || sigma.size() != n || a.size() != n ||
      b.size() != n)
    throw Error(ErrorCode::ConfigInvalid, op,
                "q must be n x n and mu/sigma/a/b of length n",
                {{"n", n},
                 {"q_rows", q.rows()},
                 {"q_cols", q.cols()}});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!std::isfinite(q(i, j)))
        throw Error(ErrorCode::ConfigInvalid, op, "non-finite rate",
                    {{"row", i + 1}, {"col", j + 1}});
  detail::require_finite(mu, "mu", op);
  detail::require_finite(sigma, "sigma", op);
  detail::require_finite(a, "a", op);
  detail::require_finite(b, "b", op);

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && q(i, j) < 0.0)
        throw Error(ErrorCode::NegativeRate, op,
                    "off-diagonal rate is negative",
                    {{"row", i + 1}, {"col", j + 1}, {"value", q(i, j)}});

  double rate_scale = std::max(1e-300, q.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i) {
    double s = q.row(i).sum();
    if (std::abs(s) > 1e-12 * rate_scale)
      throw Error(ErrorCode::RowSumViolation, op, "row does not sum to zero",
                  {{"row", i + 1}, {"sum", s}});
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) off += q(i, j);
    q(i, i) = -off;
  }

  if (!detail::strongly_connected(q))
    throw Error(ErrorCode::Reducible, op,
                "support graph of q is not strongly connected");

  for (int i = 0; i < n; ++i) {
    if (sigma(i) < 0.0)
      throw Error(ErrorCode::ConfigInvalid, op, "sigma must be nonnegative",
                  {{"state", i + 1}, {"value", sigma(i)}});
    if (a(i) > b(i))
      throw Error(ErrorCode::BarrierOrder, op, "a(i) exceeds b(i)",
                  {{"state", i + 1}, {"a", a(i)}, {"b", b(i)}});
  }

  // Distinct barrier values closer than 1e-12 * scale would make breakpoint
  // deduplication ambiguous; reject rather than merge silently.
  {
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) {
      vals.push_back(a(i));
      vals.push_back(b(i));
    }
    std::sort(vals.begin(), vals.end());
    double scale = std::max(1.0, std::max(std::abs(vals.front()),
                                          std::abs(vals.back())));
    for (size_t i = 1; i < vals.size(); ++i) {
      double d = vals[i] - vals[i - 1];
      if (d > 0.0 && d < 1e-12 * scale)
        throw Error(ErrorCode::ConfigInvalid, op,
                    "barrier values nearly coincide; merge or separate them",
                    {{"lower", vals[i - 1]}, {"upper", vals[i]}});
    }
  }

  return Model{std::move(q), std::move(mu), std::move(sigma), std::move(a),
               std::move(b)};
}

// Full validation for the stationary problem.
inline Model validate_model(Eigen::MatrixXd q, Eigen::VectorXd mu,
                            Eigen::VectorXd sigma, Eigen::VectorXd a,
                            Eigen::VectorXd b) {
  const std::string op = "validate_model";
  Model m = validate_model_core(std::move(q), std::move(mu), std::move(sigma),
                                std::move(a), std::move(b), op);

  // The classical degenerate case: every state shares one common barrier
  // pair, so the single interval is active for all states, and kappa = 0
  // there yields a defective double zero mode. When barriers differ across
  // states the same degeneracy can still arise on one interval; that is
  // caught at spectral time instead, since kappa is irrelevant for the
  // discounted (dividend) problem over the same barriers. All-inert models
  // are exempt (the simulator handles them; the stationary solver refuses
  // them later).
  if (!m.deterministic_of_j() && m.a.minCoeff() == m.a.maxCoeff() &&
      m.b.minCoeff() == m.b.maxCoeff() && m.a(0) < m.b(0)) {
    double kappa = asymptotic_drift(m);
    double mu_scale = std::max(1.0, m.mu.cwiseAbs().maxCoeff());
    if (std::abs(kappa) <= 1e-12 * mu_scale)
      throw Error(ErrorCode::AllBarriersDegenerateWithKappaZero, op,
                  "zero asymptotic drift with a single common barrier pair",
                  {{"kappa", kappa}});
  }
  return m;
}

struct ModelParts {
  Eigen::MatrixXd q;
  Eigen::VectorXd mu, sigma, a, b;
};

// Shape-level JSON parsing shared by the loaders below; semantic checks are
// left to the validators so each operation can apply its own rules.
inline ModelParts model_parts_from_json(const nlohmann::json& j) {
  const std::string op = "model_from_json";
  auto get_vec = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array())
      throw Error(ErrorCode::ConfigInvalid, op,
                  std::string("missing or non-array field '") + key + "'");
    std::vector<double> v;
    for (const auto& x : j[key]) {
      if (!x.is_number())
        throw Error(ErrorCode::ConfigInvalid, op,
                    std::string("non-numeric entry in '") + key + "'");
      v.push_back(x.get<double>());
    }
    return v;
  };
  if (!j.contains("q") || !j["q"].is_array())
    throw Error(ErrorCode::ConfigInvalid, op, "missing or non-array field 'q'");
  const auto& qj = j["q"];
  const int n = static_cast<int>(qj.size());
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i) {
    if (!qj[i].is_array() || static_cast<int>(qj[i].size()) != n)
      throw Error(ErrorCode::ConfigInvalid, op, "'q' must be a square matrix",
                  {{"row", i + 1}});
    for (int k = 0; k < n; ++k) {
      if (!qj[i][k].is_number())
        throw Error(ErrorCode::ConfigInvalid, op, "non-numeric rate in 'q'",
                    {{"row", i + 1}, {"col", k + 1}});
      q(i, k) = qj[i][k].get<double>();
    }
  }
  auto to_eigen = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
        v.data(), static_cast<long>(v.size())));
  };
  std::vector<double> mu = get_vec("mu"), sigma = get_vec("sigma"),
                      a = get_vec("a"), b = get_vec("b");
  if (static_cast<int>(mu.size()) != n || static_cast<int>(sigma.size()) != n ||
      static_cast<int>(a.size()) != n || static_cast<int>(b.size()) != n)
    throw Error(ErrorCode::ConfigInvalid, op,
                "mu/sigma/a/b lengths must match q dimension", {{"n", n}});
  return ModelParts{std::move(q), to_eigen(mu), to_eigen(sigma), to_eigen(a),
                    to_eigen(b)};
}

inline Model model_from_json(const nlohmann::json& j) {
  ModelParts p = model_parts_from_json(j);
  return validate_model(std::move(p.q), std::move(p.mu), std::move(p.sigma),
                        std::move(p.a), std::move(p.b));
}

// Structural checks only; used where the consumer applies its own semantics
// (the simulator and the dividend solver both accept models the stationary
// validator refuses).
inline Model model_from_json_core(const nlohmann::json& j) {
  ModelParts p = model_parts_from_json(j);
  return validate_model_core(std::move(p.q), std::move(p.mu),
                             std::move(p.sigma), std::move(p.a),
                             std::move(p.b));
}

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json qj = nlohmann::json::array();
  for (int i = 0; i < m.n(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < m.n(); ++k) row.push_back(m.q(i, k));
    qj.push_back(row);
  }
  auto vec = [](const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
  };
  return nlohmann::json{{"q", qj},
                        {"mu", vec(m.mu)},
                        {"sigma", vec(m.sigma)},
                        {"a", vec(m.a)},
                        {"b", vec(m.b)}};
}

}  // namespace mmbm
