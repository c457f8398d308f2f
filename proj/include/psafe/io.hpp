// JSON artifacts: RBF indicators, policies and bound reports.
#pragma once

#include "psafe/bounds.hpp"
#include "psafe/model_json.hpp"
#include "psafe/pbvi.hpp"

namespace psafe {

/// Provenance stamped into every artifact.
struct ArtifactMeta {
  std::string config_hash;
  std::string model_hash;
  std::uint64_t seed = 0;
};

inline void stamp(Json& j, const std::string& schema, const ArtifactMeta& meta) {
  j["schema"] = schema;
  j["config_hash"] = meta.config_hash;
  j["model_hash"] = meta.model_hash;
  j["seed"] = meta.seed;
}

inline ArtifactMeta read_meta(const Json& j, const std::string& schema) {
  if (!j.contains("schema") || j.at("schema") != schema)
    throw ConfigError("schema", "expected " + schema);
  ArtifactMeta m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.model_hash = j.at("model_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

template <int Dim>
Json mixture_to_json(const ModeMixture<Dim>& mix) {
  Json modes = Json::array();
  for (int q = 0; q < mix.n_modes(); ++q) {
    Json comps = Json::array();
    for (const auto& c : mix[q])
      comps.push_back({{"weight", c.weight}, {"mean", detail::vector_to_json(c.mean)}, {"cov", detail::matrix_to_json(c.cov)}});
    modes.push_back(comps);
  }
  return modes;
}

template <int Dim>
ModeMixture<Dim> mixture_from_json(const Json& j, int dim, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected one component list per mode");
  ModeMixture<Dim> mix(static_cast<int>(j.size()));
  for (std::size_t q = 0; q < j.size(); ++q)
    for (std::size_t k = 0; k < j[q].size(); ++k) {
      const auto p = path + "[" + std::to_string(q) + "][" + std::to_string(k) + "]";
      const auto& c = j[q][k];
      mix[static_cast<int>(q)].push_back(
          {detail::as_number(detail::field(c, "weight", p), p + ".weight"),
           detail::as_eigen_vector<Vec<Dim>>(detail::field(c, "mean", p), p + ".mean", dim),
           detail::as_matrix<Mat<Dim>>(detail::field(c, "cov", p), p + ".cov", dim, dim)});
    }
  return mix;
}

template <int Dim>
Json rbf_to_json(const RbfIndicator<Dim>& rbf, const ArtifactMeta& meta) {
  Json j;
  stamp(j, "psafe.rbf/1", meta);
  j["delta_I"] = rbf.delta_I;
  j["bandwidth_factor"] = rbf.bandwidth_factor;
  j["components_per_mode"] = rbf.components_per_mode;
  j["modes"] = mixture_to_json(rbf.mix);
  return j;
}

template <int Dim>
RbfIndicator<Dim> rbf_from_json(const Json& j, int dim) {
  read_meta(j, "psafe.rbf/1");
  RbfIndicator<Dim> rbf;
  rbf.delta_I = j.at("delta_I").get<double>();
  rbf.bandwidth_factor = j.at("bandwidth_factor").get<double>();
  rbf.components_per_mode = j.at("components_per_mode").get<std::vector<int>>();
  rbf.mix = mixture_from_json<Dim>(j.at("modes"), dim, "modes");
  return rbf;
}

inline Json alpha_to_json(const FiniteAlpha& a) {
  return {{"action", a.action}, {"values", std::vector<double>(a.values.data(), a.values.data() + a.values.size())}};
}

template <int Dim>
Json alpha_to_json(const GmAlpha<Dim>& a) {
  return {{"action", a.action}, {"sup_estimate", a.sup_estimate}, {"modes", mixture_to_json(a.mix)}};
}

inline FiniteAlpha finite_alpha_from_json(const Json& j) {
  const auto v = j.at("values").get<std::vector<double>>();
  return {Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size())), j.at("action").get<int>()};
}

template <int Dim>
GmAlpha<Dim> gm_alpha_from_json(const Json& j, int dim) {
  GmAlpha<Dim> a;
  a.action = j.at("action").get<int>();
  a.sup_estimate = j.at("sup_estimate").get<double>();
  a.mix = mixture_from_json<Dim>(j.at("modes"), dim, "modes");
  return a;
}

template <class Alpha>
Json policy_to_json(const SolveResult<Alpha>& r, const std::string& backend, const ArtifactMeta& meta) {
  Json j;
  stamp(j, "psafe.policy/1", meta);
  j["backend"] = backend;
  j["horizon"] = r.policy.horizon();
  j["value_at_rho"] = r.value_at_rho;
  j["action_at_rho"] = r.action_at_rho;
  j["backups_per_level"] = r.backups_per_level;
  j["alpha_sup"] = r.alpha_sup;
  Json levels = Json::array();
  for (const auto& lv : r.policy.levels) {
    Json l = Json::array();
    for (const auto& a : lv) l.push_back(alpha_to_json(a));
    levels.push_back(l);
  }
  j["levels"] = levels;
  return j;
}

/// Reads a policy document; `read_alpha` converts one alpha object.
template <class Alpha, class ReadAlpha>
SolveResult<Alpha> policy_from_json(const Json& j, const std::string& backend, ReadAlpha read_alpha) {
  read_meta(j, "psafe.policy/1");
  if (j.at("backend") != backend) throw ConfigError("backend", "policy was solved with another backend");
  SolveResult<Alpha> r;
  r.value_at_rho = j.at("value_at_rho").get<double>();
  r.action_at_rho = j.at("action_at_rho").get<int>();
  r.backups_per_level = j.at("backups_per_level").get<std::vector<int>>();
  r.alpha_sup = j.at("alpha_sup").get<std::vector<double>>();
  for (const auto& lv : j.at("levels")) {
    std::vector<Alpha> level;
    for (const auto& a : lv) level.push_back(read_alpha(a));
    r.policy.levels.push_back(std::move(level));
  }
  return r;
}

inline const char* backend_name(BackendKind k) { return k == BackendKind::Finite ? "finite" : "gaussian"; }

inline Json bound_report_to_json(const BoundReport& r, const ArtifactMeta& meta) {
  Json j;
  stamp(j, "psafe.bounds/1", meta);
  const auto& c = r.constants;
  j["backend"] = backend_name(r.backend);
  j["horizon"] = r.N;
  j["parameters"] = {{"delta_x", r.delta_x},
                     {"delta_y", r.delta_y},
                     {"delta_I", r.delta_I},
                     {"epsilon", r.epsilon},
                     {"delta_sigma_proxy", r.delta_sigma_proxy}};
  j["constants"] = {{"lambda", c.lambda},       {"lambda_bar", c.lambda_bar}, {"beta1_y", c.beta1_y},
                    {"beta2_y", c.beta2_y},     {"beta1_x", c.beta1_x},       {"beta2_x", c.beta2_x},
                    {"lmax_W", c.lmax_W},       {"lmax_V", c.lmax_V},         {"h_x1", c.L.h_x1},
                    {"h_x2", c.L.h_x2},         {"h_y1", c.L.h_y1},           {"h_y2", c.L.h_y2},
                    {"h_q", c.L.h_q},           {"phi_v_star", c.L.phi_v_star}, {"phi_w_star", c.L.phi_w_star}};
  j["alpha_bar"] = r.alpha_bar;
  j["phi_sigma"] = r.phi_sigma;
  j["components"] = {{"abstraction", r.abstraction},
                     {"abstraction_statement", r.abstraction_statement},
                     {"observation", r.observation},
                     {"pbvi_proxy", r.pbvi_proxy}};
  Json sigma_part = Json::array(), grid_part = Json::array();
  for (const auto& e : r.eta_alpha_run) {
    sigma_part.push_back(e.sigma_part);
    grid_part.push_back(e.grid_part);
  }
  j["run_conditional"] = {{"eta_sigma", r.eta_sigma_run},
                          {"eta_alpha_sigma_part", sigma_part},
                          {"eta_alpha_grid_part", grid_part}};
  j["value"] = r.value;
  j["certified_part"] = r.certified_part();
  j["heuristic_total"] = r.heuristic_total();
  j["interval"] = {r.interval_lo(), r.interval_hi()};
  return j;
}

}  // namespace psafe
