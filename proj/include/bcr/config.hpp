#pragma once

#include <filesystem>

#include "bcr/io.hpp"
#include "bcr/serialize.hpp"

namespace bcr {

struct SelectionConfig {
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  bool grid = false;  // pick sampler and GKD by validation utility
  std::size_t batch_size = 0;
  std::size_t k = 10;
};

struct RunConfig {
  std::string name;
  std::string dataset_path;
  Schema schema;
  SplitRatios ratios{};
  std::uint64_t split_seed = 0;
  BackboneOptions backbone{};
  GenerationSettings generation{};
  Stage2Params stage2{};
  SelectionConfig selection{};
  std::uint64_t seed = 0;
  std::size_t n_seeds = 5;
  bool from_search = false;  // refine with the best search configuration
  SearchSpace space{};
  std::size_t trials = 30;
  std::size_t startup = 10;
  std::vector<double> sweep_K{0.1, 0.5, 1, 3, 5, 10, 20};
  std::string out_dir = "runs";
  json raw;

  std::vector<std::uint64_t> eval_seeds() const {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < n_seeds; ++i) s.push_back(seed + i);
    return s;
  }

  // Fingerprints of the settings each stage depends on.
  std::string prepare_hash() const {
    json j{{"dataset", raw.at("dataset")}, {"split", raw.value("split", json::object())}};
    return hex64(fnv1a(j.dump()));
  }
  std::string backbone_hash() const {
    json j{{"prepare", prepare_hash()}, {"backbone", raw.value("backbone", json::object())}};
    return hex64(fnv1a(j.dump()));
  }
};

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("config: missing field '" + path + key + "'");
  return j.at(key);
}

template <typename T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field '" + path + "' has the wrong type");
  }
}

template <typename T>
T value_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return get_as<T>(j.at(key), path + key);
}

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<std::pair<const char*, E>, N>& table, const std::string& path) {
  for (const auto& [name, v] : table)
    if (s == name) return v;
  throw ConfigError("config: field '" + path + "' has unknown value '" + s + "'");
}

inline GammaFamily parse_gamma(const std::string& s, const std::string& path) {
  return parse_enum<GammaFamily, 4>(s,
                                    {{{"constant", GammaFamily::constant},
                                      {"linear", GammaFamily::linear},
                                      {"cosine", GammaFamily::cosine},
                                      {"sine", GammaFamily::sine}}},
                                    path);
}

inline AnnealFamily parse_anneal(const std::string& s, const std::string& path) {
  return parse_enum<AnnealFamily, 5>(s,
                                     {{{"constant", AnnealFamily::constant},
                                       {"linear", AnnealFamily::linear},
                                       {"cosine", AnnealFamily::cosine},
                                       {"sine", AnnealFamily::sine},
                                       {"cyclical", AnnealFamily::cyclical}}},
                                     path);
}

inline GuidanceMode parse_guidance(const std::string& s, const std::string& path) {
  return parse_enum<GuidanceMode, 3>(
      s, {{{"none", GuidanceMode::none}, {"identity", GuidanceMode::identity}, {"vae", GuidanceMode::vae}}}, path);
}

inline Task parse_task(const std::string& s, const std::string& path) {
  return parse_enum<Task, 3>(
      s, {{{"binary", Task::binary}, {"multiclass", Task::multiclass}, {"regression", Task::regression}}}, path);
}

// "none", "1", "1/2", ... or a number in (0, 1].
inline std::optional<double> parse_ratio(const json& j, const std::string& path) {
  if (j.is_null()) return std::nullopt;
  if (j.is_number()) return j.get<double>();
  const auto s = get_as<std::string>(j, path);
  if (s == "none") return std::nullopt;
  if (s == "1") return 1.0;
  if (s.rfind("1/", 0) == 0) {
    try {
      return 1.0 / std::stod(s.substr(2));
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("config: field '" + path + "' has unknown ratio '" + s + "'");
}

inline Schema parse_schema(const json& j, const std::string& path) {
  Schema s;
  const json& cols = require(j, "columns", path);
  if (!cols.is_array()) throw ConfigError("config: field '" + path + "columns' must be an array");
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::string p = path + "columns[" + std::to_string(i) + "].";
    Column c;
    c.name = get_as<std::string>(require(cols[i], "name", p), p + "name");
    const auto type = get_as<std::string>(require(cols[i], "type", p), p + "type");
    if (type == "numeric") {
      c.kind = ColumnKind::numeric;
    } else if (type == "categorical") {
      c.kind = ColumnKind::categorical;
      c.categories = get_as<std::vector<std::string>>(require(cols[i], "categories", p), p + "categories");
    } else {
      throw ConfigError("config: field '" + p + "type' must be numeric or categorical");
    }
    s.columns.push_back(std::move(c));
  }
  const std::string tp = path + "target.";
  const json& t = require(j, "target", path);
  s.target.name = get_as<std::string>(require(t, "name", tp), tp + "name");
  s.target.task = parse_task(get_as<std::string>(require(t, "task", tp), tp + "task"), tp + "task");
  if (s.target.task != Task::regression)
    s.target.classes = get_as<std::vector<std::string>>(require(t, "classes", tp), tp + "classes");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + path + " " + e.what());
  }
  return s;
}

}  // namespace detail

inline Stage2Params parse_stage2(const json& g, double K, Task task) {
  using namespace detail;
  const std::string p = "guidance.";
  Stage2Params s;
  s.K = K;
  s.guidance = parse_guidance(value_or<std::string>(g, "mode", p, "none"), p + "mode");
  s.family = parse_gamma(value_or<std::string>(g, "gamma_family", p, "cosine"), p + "gamma_family");
  s.gamma_min = value_or<double>(g, "gamma_min", p, 1e-8);
  s.gamma_max = value_or<double>(g, "gamma_max", p, 1.0);
  s.t_g = value_or<int>(g, "t_g", p, 10);
  s.ref_ratio = g.contains("ref_ratio") ? parse_ratio(g.at("ref_ratio"), p + "ref_ratio") : std::optional<double>(0.25);
  const auto rt = value_or<std::string>(g, "ref_type", p, "auto");
  if (rt == "cls") s.ref_type = RefType::class_conditional;
  else if (rt == "glob") s.ref_type = RefType::global;
  else if (rt != "auto") throw ConfigError("config: field 'guidance.ref_type' must be auto, cls or glob");
  if (g.contains("vae")) {
    const json& v = g.at("vae");
    s.latent = value_or<std::size_t>(v, "latent", p + "vae.", 8);
    s.beta_family = parse_anneal(value_or<std::string>(v, "beta_family", p + "vae.", "linear"), p + "vae.beta_family");
  }
  if (!s.guided()) {
    s.ref_ratio.reset();
    return s;
  }
  if (!(s.gamma_min >= 0.0 && s.gamma_min <= s.gamma_max)) throw ConfigError("config: need 0 <= gamma_min <= gamma_max");
  if (s.t_g < 3 || s.t_g > 20) throw ConfigError("config: field 'guidance.t_g' must lie in [3, 20]");
  if (!s.ref_ratio) throw ConfigError("config: reference ratio 'none' is invalid with guidance enabled");
  if (!(*s.ref_ratio > 0.0 && *s.ref_ratio <= 1.0)) throw ConfigError("config: field 'guidance.ref_ratio' outside (0, 1]");
  if (s.guidance == GuidanceMode::vae && s.latent == 0) throw ConfigError("config: field 'guidance.vae.latent' must be >= 1");
  effective_ref_type(s, task);
  return s;
}

// Relative dataset paths resolve against the config file's directory.
inline RunConfig parse_config(const json& j, const std::string& base_dir = ".") {
  using namespace detail;
  RunConfig c;
  c.raw = j;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  c.name = value_or<std::string>(j, "name", "", "dataset");
  const json& ds = require(j, "dataset", "");
  c.dataset_path = get_as<std::string>(require(ds, "path", "dataset."), "dataset.path");
  if (std::filesystem::path(c.dataset_path).is_relative())
    c.dataset_path = (std::filesystem::path(base_dir) / c.dataset_path).lexically_normal().string();
  c.schema = parse_schema(require(ds, "schema", "dataset."), "dataset.schema.");
  const Task task = c.schema.task();

  const json sp = j.value("split", json::object());
  c.split_seed = value_or<std::uint64_t>(sp, "seed", "split.", 0);
  if (sp.contains("ratios")) {
    const auto r = get_as<std::vector<double>>(sp.at("ratios"), "split.ratios");
    if (r.size() != 3) throw ConfigError("config: field 'split.ratios' needs three values");
    c.ratios = {r[0], r[1], r[2]};
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9 || r[0] <= 0 || r[1] <= 0 || r[2] <= 0)
      throw ConfigError("config: field 'split.ratios' must be positive and sum to 1");
  }

  const json bb = j.value("backbone", json::object());
  c.backbone.components = value_or<std::size_t>(bb, "components", "backbone.", 3);
  c.backbone.steps = value_or<int>(bb, "steps", "backbone.", 200);
  c.backbone.max_iter = value_or<int>(bb, "max_iter", "backbone.", 200);
  c.backbone.tol = value_or<double>(bb, "tol", "backbone.", 1e-8);
  c.backbone.var_floor = value_or<double>(bb, "var_floor", "backbone.", 1e-4);
  c.backbone.seed = value_or<std::uint64_t>(bb, "seed", "backbone.", 0);
  if (c.backbone.components == 0) throw ConfigError("config: field 'backbone.components' must be >= 1");
  if (c.backbone.steps < 3) throw ConfigError("config: field 'backbone.steps' must be >= 3");

  const json ge = j.value("generation", json::object());
  c.generation.M = value_or<std::size_t>(ge, "M", "generation.", 50);
  c.generation.batch_size = value_or<std::size_t>(ge, "batch_size", "generation.", 256);
  c.generation.vae_epochs = value_or<int>(ge, "vae_epochs", "generation.", 500);
  c.generation.vae_lr = value_or<double>(ge, "vae_lr", "generation.", 1e-3);
  c.generation.beta_min = value_or<double>(ge, "beta_min", "generation.", 0.0);
  c.generation.beta_max = value_or<double>(ge, "beta_max", "generation.", 1.0);
  c.generation.beta_cycle = value_or<int>(ge, "beta_cycle", "generation.", 50);
  if (c.generation.M == 0) throw ConfigError("config: field 'generation.M' must be >= 1");
  if (c.generation.batch_size == 0) throw ConfigError("config: field 'generation.batch_size' must be >= 1");

  const json se = j.value("selection", json::object());
  const double K = value_or<double>(se, "K", "selection.", 1.0);
  if (!(K >= 0.1 && K <= 25.0)) throw ConfigError("config: field 'selection.K' must lie in [0.1, 25]");
  if (K >= static_cast<double>(c.generation.M)) throw ConfigError("config: selection.K must be below generation.M");
  c.selection.sampler = parse_enum<SamplerKind, 5>(value_or<std::string>(se, "sampler", "selection.", "chamfer"),
                                                   {{{"chamfer", SamplerKind::chamfer},
                                                     {"stratified", SamplerKind::stratified},
                                                     {"iboss", SamplerKind::iboss},
                                                     {"hdbscan", SamplerKind::hdbscan},
                                                     {"md", SamplerKind::md}}},
                                                   "selection.sampler");
  c.selection.gkd = value_or<bool>(se, "gkd", "selection.", false);
  c.selection.grid = value_or<bool>(se, "grid", "selection.", false);
  c.selection.batch_size = value_or<std::size_t>(se, "batch_size", "selection.", 0);
  c.selection.k = value_or<std::size_t>(se, "k", "selection.", 10);
  if (c.selection.gkd && task == Task::regression) throw ConfigError("config: GKD is undefined for regression");

  c.stage2 = parse_stage2(j.value("guidance", json::object()), K, task);
  if (c.stage2.guided() && c.stage2.t_g > c.backbone.steps)
    throw ConfigError("config: guidance.t_g exceeds backbone.steps");

  c.seed = value_or<std::uint64_t>(j, "seed", "", 0);
  const json ev = j.value("evaluation", json::object());
  c.n_seeds = value_or<std::size_t>(ev, "seeds", "evaluation.", 5);
  if (c.n_seeds == 0) throw ConfigError("config: field 'evaluation.seeds' must be >= 1");
  c.from_search = value_or<bool>(ev, "from_search", "evaluation.", false);

  const json sr = j.value("search", json::object());
  c.trials = value_or<std::size_t>(sr, "trials", "search.", 30);
  c.startup = value_or<std::size_t>(sr, "startup", "search.", 10);
  if (c.startup > c.trials) c.startup = c.trials;
  if (sr.contains("guidance")) {
    c.space.guidance.clear();
    for (const auto& g : get_as<std::vector<std::string>>(sr.at("guidance"), "search.guidance"))
      c.space.guidance.push_back(parse_guidance(g, "search.guidance"));
  }
  if (sr.contains("ref_type")) {
    const auto rt = get_as<std::string>(sr.at("ref_type"), "search.ref_type");
    if (rt == "cls") c.space.ref_type = RefType::class_conditional;
    else if (rt == "glob") c.space.ref_type = RefType::global;
    else if (rt != "auto") throw ConfigError("config: field 'search.ref_type' must be auto, cls or glob");
  }
  c.space.validate();

  const json sw = j.value("sweep", json::object());
  if (sw.contains("K")) c.sweep_K = get_as<std::vector<double>>(sw.at("K"), "sweep.K");
  for (double k : c.sweep_K)
    if (!(k > 0.0) || k >= static_cast<double>(c.generation.M))
      throw ConfigError("config: every sweep.K value must satisfy 0 < K < M");

  c.out_dir = value_or<std::string>(j, "output", "", "runs");
  if (const char* env = std::getenv("BCR_OUT"); env && !j.contains("output")) c.out_dir = env;
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const MissingArtifact&) {
    throw ConfigError("config: cannot open '" + path + "'");
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string().empty()
                             ? "."
                             : std::filesystem::path(path).parent_path().string());
}

// Parameters in the layout written by to_json(Stage2Params, Task).
inline Stage2Params stage2_from_json(const json& j) {
  using namespace detail;
  const std::string p = "params.";
  Stage2Params s;
  s.K = get_as<double>(require(j, "K", p), p + "K");
  s.guidance = parse_guidance(get_as<std::string>(require(j, "guidance", p), p + "guidance"), p + "guidance");
  if (!s.guided()) return s;
  s.family = parse_gamma(get_as<std::string>(require(j, "gamma_family", p), p + "gamma_family"), p + "gamma_family");
  s.gamma_min = get_as<double>(require(j, "gamma_min", p), p + "gamma_min");
  s.gamma_max = get_as<double>(require(j, "gamma_max", p), p + "gamma_max");
  s.t_g = get_as<int>(require(j, "t_g", p), p + "t_g");
  s.ref_ratio = parse_ratio(require(j, "ref_ratio", p), p + "ref_ratio");
  const auto rt = get_as<std::string>(require(j, "ref_type", p), p + "ref_type");
  s.ref_type = rt == "cls" ? RefType::class_conditional : RefType::global;
  if (s.guidance == GuidanceMode::vae) {
    s.latent = get_as<std::size_t>(require(j, "latent", p), p + "latent");
    s.beta_family = parse_anneal(get_as<std::string>(require(j, "beta_family", p), p + "beta_family"), p + "beta_family");
  }
  return s;
}

// Every setting after defaults are applied; recorded in each manifest.
inline json resolved(const RunConfig& c) {
  const Task task = c.schema.task();
  json j;
  j["name"] = c.name;
  j["dataset"] = {{"path", c.dataset_path}, {"task", task_name(task)}, {"columns", c.schema.columns.size()}};
  j["split"] = {{"seed", c.split_seed}, {"ratios", {c.ratios.train, c.ratios.validation, c.ratios.test}}};
  j["backbone"] = {{"components", c.backbone.components}, {"steps", c.backbone.steps},
                   {"max_iter", c.backbone.max_iter},     {"tol", c.backbone.tol},
                   {"var_floor", c.backbone.var_floor},   {"seed", c.backbone.seed}};
  j["generation"] = {{"M", c.generation.M},
                     {"batch_size", c.generation.batch_size},
                     {"vae_epochs", c.generation.vae_epochs},
                     {"vae_lr", c.generation.vae_lr},
                     {"beta_min", c.generation.beta_min},
                     {"beta_max", c.generation.beta_max},
                     {"beta_cycle", c.generation.beta_cycle}};
  j["guidance"] = to_json(c.stage2, task);
  j["selection"] = {{"K", c.stage2.K},
                    {"sampler", sampler_name(c.selection.sampler)},
                    {"gkd", c.selection.gkd},
                    {"grid", c.selection.grid},
                    {"batch_size", c.selection.batch_size},
                    {"k", c.selection.k}};
  j["evaluation"] = {{"seeds", c.n_seeds}, {"from_search", c.from_search}};
  j["search"] = {{"trials", c.trials}, {"startup", c.startup}};
  j["sweep"] = {{"K", c.sweep_K}};
  j["seed"] = c.seed;
  return j;
}

}  // namespace bcr
