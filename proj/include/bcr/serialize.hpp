#pragma once

#include <json.hpp>

#include "bcr/search.hpp"

namespace bcr {

using json = nlohmann::json;

// Non-finite numbers become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline const char* ref_type_name(RefType r) { return r == RefType::class_conditional ? "cls" : "glob"; }

inline json to_json(const Matrix& m) {
  json a = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) a.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return a;
}

inline Matrix matrix_from_json(const json& a) {
  Matrix m;
  for (const auto& r : a) m.append_row(r.get<std::vector<double>>());
  return m;
}

inline json to_json(const GmmBackbone& b) {
  json j;
  j["steps"] = b.schedule().steps();
  j["conditional"] = b.conditional();
  j["feature_dim"] = b.feature_dim();
  j["mixtures"] = json::array();
  for (const auto& m : b.mixtures())
    j["mixtures"].push_back({{"weights", m.weights}, {"means", to_json(m.means)}, {"variances", to_json(m.variances)}});
  return j;
}

inline GmmBackbone backbone_from_json(const json& j) {
  std::vector<Mixture> mix;
  for (const auto& m : j.at("mixtures"))
    mix.push_back({m.at("weights").get<std::vector<double>>(), matrix_from_json(m.at("means")),
                   matrix_from_json(m.at("variances"))});
  return GmmBackbone(std::move(mix), NoiseSchedule(j.at("steps").get<int>()), j.at("conditional").get<bool>(),
                     j.at("feature_dim").get<std::size_t>());
}

inline json to_json(const Encoder& e) {
  json j;
  j["width"] = e.width();
  j["target_min"] = e.target_min();
  j["target_range"] = e.target_range();
  j["blocks"] = json::array();
  for (const auto& b : e.blocks())
    j["blocks"].push_back({{"column", e.schema().columns[b.column].name},
                           {"offset", b.offset},
                           {"width", b.width},
                           {"categorical", b.categorical},
                           {"mean", b.mean},
                           {"sd", b.sd}});
  return j;
}

inline json to_json(const Stage2Params& s, Task task) {
  json j;
  j["K"] = s.K;
  j["guidance"] = guidance_name(s.guidance);
  if (s.guided()) {
    j["gamma_family"] = gamma_name(s.family);
    j["gamma_min"] = s.gamma_min;
    j["gamma_max"] = s.gamma_max;
    j["t_g"] = s.t_g;
    j["ref_ratio"] = ratio_name(s.ref_ratio);
    j["ref_type"] = ref_type_name(effective_ref_type(s, task));
  }
  if (s.guidance == GuidanceMode::vae) {
    j["latent"] = s.latent;
    j["beta_family"] = anneal_name(s.beta_family);
  }
  return j;
}

inline json to_json(const GridEntry& e) {
  json j{{"sampler", sampler_name(e.sampler)}, {"gkd", e.gkd}, {"utility", num(e.utility)}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

// One trial-log line. Wall-clock times are deliberately absent so that
// repeated runs produce identical logs.
inline json to_json(const TrialRecord& r, Task task) {
  json j;
  j["trial"] = r.trial;
  j["params"] = to_json(r.params, task);
  j["sampler"] = sampler_name(r.sampler);
  j["gkd"] = r.gkd;
  j["objective"] = num(r.objective);
  j["seed"] = r.seed;
  j["grid"] = json::array();
  for (const auto& e : r.grid) j["grid"].push_back(to_json(e));
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline json to_json(const MetricReport& m) {
  return {{"task", m.task},       {"psi", num(m.psi)},       {"f1", opt_num(m.f1)},
          {"precision", m.precision}, {"recall", m.recall}, {"dcr1_share", m.dcr1_share},
          {"nndr", m.nndr},       {"n_syn", m.n_syn}};
}

inline json to_json(const DeltaReport& r) {
  return {{"n", r.deltas.size()},
          {"deltas", r.deltas},
          {"median", r.median},
          {"mean", r.mean},
          {"ci95", {r.ci_low, r.ci_high}},
          {"wilcoxon", {{"w_plus", r.wilcoxon.w_plus},
                        {"p_one_sided", r.wilcoxon.p_greater},
                        {"p_two_sided", r.wilcoxon.p_two_sided},
                        {"exact", r.wilcoxon.exact}}},
          {"wins", r.wins_label()}};
}

// Best configuration in the column layout K, G, Gamma, phi, B_ratio, Type,
// GKD, Sampler.
inline std::string best_config_table(const std::string& dataset, const TrialRecord& r, Task task) {
  const auto& s = r.params;
  auto phi = [&]() -> std::string {
    if (!s.guided()) return "-";
    if (s.guidance == GuidanceMode::identity) return "identity";
    return "beta-VAE(" + std::to_string(s.latent) + ")";
  };
  auto sampler = [&]() -> std::string {
    switch (r.sampler) {
      case SamplerKind::chamfer: return "CS";
      case SamplerKind::md: return "MD";
      case SamplerKind::stratified: return "Stratified";
      case SamplerKind::iboss: return "IBOSS";
      case SamplerKind::hdbscan: return "HDBSCAN";
    }
    return "?";
  };
  char kbuf[32];
  std::snprintf(kbuf, sizeof kbuf, "%.1f", s.K);
  const std::vector<std::string> head{"Dataset", "K", "G", "Gamma", "phi", "B_ratio", "Type", "GKD", "Sampler"};
  const std::vector<std::string> row{dataset,
                                     kbuf,
                                     s.guided() ? "on" : "off",
                                     s.guided() ? gamma_name(s.family) : "-",
                                     phi(),
                                     s.guided() ? ratio_name(s.ref_ratio) : "-",
                                     s.guided() ? ref_type_name(effective_ref_type(s, task)) : "-",
                                     r.gkd ? "on" : "off",
                                     sampler()};
  std::string out;
  for (int line = 0; line < 2; ++line) {
    const auto& cells = line == 0 ? head : row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::size_t w = std::max(head[c].size(), row[c].size()) + 2;
      std::string cell = cells[c];
      if (c + 1 < cells.size()) cell.resize(w, ' ');
      out += cell;
    }
    out += '\n';
  }
  return out;
}

}  // namespace bcr
