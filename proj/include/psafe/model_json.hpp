// JSON reading/writing of PodtshsModel, with field-path error reporting.
#pragma once

#include "psafe/model.hpp"

#include <json.hpp>

namespace psafe {

using Json = nlohmann::json;

namespace detail {

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "missing field");
  return j.at(key);
}

inline double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline int as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline std::vector<double> as_vector(const Json& j, const std::string& path, std::size_t n) {
  if (!j.is_array() || j.size() != n) throw ConfigError(path, "expected an array of length " + std::to_string(n));
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return v;
}

template <class M>
M as_matrix(const Json& j, const std::string& path, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(rows))
    throw ConfigError(path, "expected " + std::to_string(rows) + " rows");
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = as_vector(j[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]",
                               static_cast<std::size_t>(cols));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

template <class V>
V as_eigen_vector(const Json& j, const std::string& path, Eigen::Index n) {
  const auto v = as_vector(j, path, static_cast<std::size_t>(n));
  V out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = v[static_cast<std::size_t>(i)];
  return out;
}

template <class M>
Json matrix_to_json(const M& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

template <class V>
Json vector_to_json(const V& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

/// Reads the "dim" field so callers can dispatch to the right template instance.
inline int model_dimension(const Json& j) { return detail::as_int(detail::field(j, "dim", ""), "dim"); }

template <int Dim>
PodtshsModel<Dim> model_from_json(const Json& j, bool gaussian_pipeline = false) {
  using namespace detail;
  using VecT = Vec<Dim>;
  using MatT = Mat<Dim>;
  PodtshsModel<Dim> m;
  m.dim = as_int(field(j, "dim", ""), "dim");
  if (m.dim < 1 || (Dim != Eigen::Dynamic && m.dim != Dim)) throw ConfigError("dim", "unsupported dimension");
  m.obs_dim = j.contains("obs_dim") ? as_int(j.at("obs_dim"), "obs_dim") : m.dim;
  if (m.obs_dim < 1 || m.obs_dim > m.dim) throw ConfigError("obs_dim", "must satisfy 1 <= l <= m");
  m.n_modes = as_int(field(j, "modes", ""), "modes");
  if (m.n_modes < 1) throw ConfigError("modes", "must be at least 1");
  m.n_obs_symbols = j.contains("obs_symbols") ? as_int(j.at("obs_symbols"), "obs_symbols") : m.n_modes;
  if (m.n_obs_symbols < 1) throw ConfigError("obs_symbols", "must be at least 1");
  const auto& inputs = field(j, "inputs", "");
  if (!inputs.is_array() || inputs.empty()) throw ConfigError("inputs", "expected a nonempty array");
  m.inputs = as_vector(inputs, "inputs", inputs.size());
  const auto nq = static_cast<std::size_t>(m.n_modes);
  const auto nu = m.inputs.size();
  const int d = m.dim;
  const int l = m.obs_dim;

  const auto& A = field(j, "A", "");
  if (!A.is_array() || A.size() != nq) throw ConfigError("A", "expected one matrix per mode");
  const auto& C = field(j, "C", "");
  if (!C.is_array() || C.size() != nq) throw ConfigError("C", "expected one matrix per mode");
  const auto& g = field(j, "g", "");
  if (!g.is_array() || g.size() != nq) throw ConfigError("g", "expected one row per mode");
  for (std::size_t q = 0; q < nq; ++q) {
    const std::string pq = "[" + std::to_string(q) + "]";
    m.A.push_back(as_matrix<MatT>(A[q], "A" + pq, d, d));
    m.C.push_back(as_matrix<ObsMap<Dim>>(C[q], "C" + pq, l, d));
    if (!g[q].is_array() || g[q].size() != nu) throw ConfigError("g" + pq, "expected one vector per input");
    std::vector<VecT> gq;
    for (std::size_t u = 0; u < nu; ++u)
      gq.push_back(as_eigen_vector<VecT>(g[q][u], "g" + pq + "[" + std::to_string(u) + "]", d));
    m.g.push_back(std::move(gq));
  }
  m.V = as_matrix<MatT>(field(j, "V", ""), "V", d, d);
  m.W = as_matrix<ObsMat<Dim>>(field(j, "W", ""), "W", l, l);

  const auto& Tq = field(j, "Tq", "");
  if (!Tq.is_array() || Tq.size() != nu) throw ConfigError("Tq", "expected one table per input");
  for (std::size_t u = 0; u < nu; ++u) {
    const std::string pu = "Tq[" + std::to_string(u) + "]";
    if (!Tq[u].is_array() || Tq[u].size() != nq) throw ConfigError(pu, "expected one row per mode");
    std::vector<std::vector<double>> tab;
    for (std::size_t q = 0; q < nq; ++q)
      tab.push_back(as_vector(Tq[u][q], pu + "[" + std::to_string(q) + "]", nq));
    m.Tq.push_back(std::move(tab));
  }
  const auto& Yq = field(j, "Yq", "");
  if (!Yq.is_array() || Yq.size() != nq) throw ConfigError("Yq", "expected one row per mode");
  for (std::size_t q = 0; q < nq; ++q)
    m.Yq.push_back(as_vector(Yq[q], "Yq[" + std::to_string(q) + "]", static_cast<std::size_t>(m.n_obs_symbols)));

  const auto& safe = field(j, "safe_set", "");
  if (!safe.is_array() || safe.size() != nq) throw ConfigError("safe_set", "expected one box per mode");
  for (std::size_t q = 0; q < nq; ++q) {
    const std::string pq = "safe_set[" + std::to_string(q) + "]";
    if (!safe[q].is_array() || safe[q].size() != static_cast<std::size_t>(d))
      throw ConfigError(pq, "expected one [lo, hi] interval per dimension");
    Box b{VecX(d), VecX(d)};
    for (int k = 0; k < d; ++k) {
      const auto iv = as_vector(safe[q][static_cast<std::size_t>(k)], pq + "[" + std::to_string(k) + "]", 2);
      b.lo(k) = iv[0];
      b.hi(k) = iv[1];
    }
    m.safe.push_back(std::move(b));
  }
  const auto& rho = field(j, "rho", "");
  m.R_q = as_vector(field(rho, "modes", "rho"), "rho.modes", nq);
  m.mu0 = as_eigen_vector<VecT>(field(rho, "mean", "rho"), "rho.mean", d);
  m.P0 = as_matrix<MatT>(field(rho, "cov", "rho"), "rho.cov", d, d);
  m.horizon = as_int(field(j, "horizon", ""), "horizon");
  if (j.contains("h_q")) m.h_q = as_number(j.at("h_q"), "h_q");
  m.validate(gaussian_pipeline);
  return m;
}

template <int Dim>
Json model_to_json(const PodtshsModel<Dim>& m) {
  using namespace detail;
  Json j;
  j["schema"] = "psafe.model/1";
  j["dim"] = m.dim;
  j["obs_dim"] = m.obs_dim;
  j["modes"] = m.n_modes;
  j["obs_symbols"] = m.n_obs_symbols;
  j["inputs"] = m.inputs;
  Json A = Json::array(), C = Json::array(), g = Json::array();
  for (int q = 0; q < m.n_modes; ++q) {
    const auto qs = static_cast<std::size_t>(q);
    A.push_back(matrix_to_json(m.A[qs]));
    C.push_back(matrix_to_json(m.C[qs]));
    Json gq = Json::array();
    for (const auto& v : m.g[qs]) gq.push_back(vector_to_json(v));
    g.push_back(gq);
  }
  j["A"] = A;
  j["C"] = C;
  j["g"] = g;
  j["V"] = matrix_to_json(m.V);
  j["W"] = matrix_to_json(m.W);
  j["Tq"] = m.Tq;
  j["Yq"] = m.Yq;
  Json safe = Json::array();
  for (const auto& b : m.safe) {
    Json box = Json::array();
    for (Eigen::Index k = 0; k < b.dim(); ++k) box.push_back({b.lo(k), b.hi(k)});
    safe.push_back(box);
  }
  j["safe_set"] = safe;
  j["rho"] = {{"modes", m.R_q}, {"mean", vector_to_json(m.mu0)}, {"cov", matrix_to_json(m.P0)}};
  j["horizon"] = m.horizon;
  j["h_q"] = m.h_q;
  return j;
}

/// Stable hash of the model's canonical JSON form.
template <int Dim>
std::string model_hash(const PodtshsModel<Dim>& m) {
  return hex64(fnv1a(model_to_json(m).dump()));
}

/// Room-temperature benchmark: x' = (1-b)x + c q' + b x_a + v, y = x + w,
/// mode observed exactly. Switching the heater on (u = 1) or keeping it off succeeds with probability
/// `p_follow`; a running heater only responds to u = 0 with probability `p_release`.
inline PodtshsModel<1> thermostat_model(double v_var = 0.5, double w_var = 0.5, double p_follow = 0.9,
                                        double p_release = 0.2, double mu0 = 19.75, int horizon = 5) {
  constexpr double b = 0.0167, c = 0.8, xa = 6.0;
  PodtshsModel<1> m;
  m.n_modes = 2;
  m.dim = 1;
  m.obs_dim = 1;
  m.n_obs_symbols = 2;
  m.inputs = {0.0, 1.0};
  for (int q = 0; q < 2; ++q) {
    m.A.push_back(Mat<1>::Constant(1.0 - b));
    std::vector<Vec<1>> gq;
    for (int u = 0; u < 2; ++u) gq.push_back(Vec<1>::Constant(c * q + b * xa));
    m.g.push_back(gq);
    ObsMap<1> C(1, 1);
    C(0, 0) = 1.0;
    m.C.push_back(C);
    m.safe.push_back(Box{VecX::Constant(1, 17.5), VecX::Constant(1, 22.0)});
  }
  m.V = Mat<1>::Constant(v_var);
  m.W = ObsMat<1>::Constant(1, 1, w_var);
  m.Tq = {{{p_follow, 1.0 - p_follow}, {p_release, 1.0 - p_release}},
          {{1.0 - p_follow, p_follow}, {1.0 - p_follow, p_follow}}};
  m.Yq = {{1.0, 0.0}, {0.0, 1.0}};
  m.R_q = {1.0, 0.0};
  m.mu0 = Vec<1>::Constant(mu0);
  m.P0 = Mat<1>::Constant(1.0);
  m.horizon = horizon;
  m.validate(true);
  return m;
}

}  // namespace psafe
