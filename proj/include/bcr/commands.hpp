#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "bcr/config.hpp"

namespace bcr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Refinement of one seed: Stages II and III plus optional distillation.

struct RefineOutcome {
  CandidatePool syn;
  Matrix candidates;  // full D_cand features; `selection` indexes into it
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  std::vector<std::size_t> selection;
  StageTimes times;
};

inline RefineOutcome refine_once(const Problem& p, const GmmBackbone& backbone, const Stage2Params& s,
                                 const SelectionConfig& sel, const GenerationSettings& g, std::uint64_t seed,
                                 RepCache* cache = nullptr, const LearnerOptions& learner = {}) {
  RefineOutcome out;
  const Generation gen = generate(p, backbone, s, g, seed, cache);
  out.times.stage2 = gen.seconds;
  out.sampler = sel.sampler;
  out.gkd = sel.gkd;
  if (sel.grid) {
    GridOptions go;
    go.batch_size = sel.batch_size;
    go.md_k = sel.k;
    go.seed = derive_seed(seed, 0x9e1d);
    go.learner = learner;
    const GridResult r = inner_grid(gen.pool, p, s.K, gen.rep, go);
    if (!std::isfinite(r.utility)) throw NumericError("refine: every sampler in the grid failed");
    out.sampler = r.sampler;
    out.gkd = r.gkd;
  }
  if (out.gkd && !is_classification(p.task())) throw ConfigError("refine: GKD is undefined for regression");

  auto t0 = std::chrono::steady_clock::now();
  CandidatePool pool = gen.pool;
  if (out.gkd) {
    pool = relabel(pool, train_teacher(p.train, {.seed = derive_seed(seed, 0x6cd)}));
    out.times.gkd = seconds_since(t0);
  }
  t0 = std::chrono::steady_clock::now();
  const SelectionSpec spec{out.sampler, target_count(s.K, p.n_real()), sel.batch_size, sel.k, derive_seed(seed, 0x5e1)};
  out.selection = select(pool, p.train, spec, gen.rep);
  out.syn = pool.subset(out.selection);
  out.candidates = gen.pool.features;
  out.times.stage3 = seconds_since(t0);
  return out;
}

inline MetricReport evaluate_synthetic(const Problem& p, const EncodedMatrix& syn, std::uint64_t seed,
                                       const LearnerOptions& learner = {}) {
  MetricReport m;
  m.task = task_name(p.task());
  const Score s = tstr(syn, p.validation, p.test, learner);
  m.psi = s.psi;
  m.f1 = s.f1;
  m.n_syn = syn.size();
  const std::size_t k = std::min<std::size_t>(10, std::min(syn.size(), p.n_real()) - 1);
  if (k >= 1) {
    const auto pr = manifold_precision_recall(syn.values, p.train.values, k);
    m.precision = pr.precision;
    m.recall = pr.recall;
  }
  m.dcr1_share = dcr1_share(syn.values, p.train.values, p.test.values, seed);
  m.nndr = nndr(syn.values, p.train.values);
  return m;
}

// ---------------------------------------------------------------------------
// Run directories

struct StagePaths {
  fs::path root;
  fs::path prepare() const { return root / "prepare"; }
  fs::path backbone() const { return root / "backbone"; }
  fs::path refine() const { return root / "refine"; }
  fs::path search() const { return root / "search"; }
  fs::path sweep() const { return root / "sweep"; }
};

// Existing non-empty outputs are only replaced with `force`.
inline void claim_output(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("output '" + dir.string() + "' already exists; pass --force to overwrite");
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear '" + dir.string() + "': " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

inline void write_json(const fs::path& path, const json& j) { write_file(path.string(), j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  const std::string text = read_file(path.string());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw MissingArtifact("corrupt artifact '" + path.string() + "': " + e.what());
  }
}

inline json read_manifest(const fs::path& dir) {
  const fs::path m = dir / "manifest.json";
  if (!fs::exists(m)) throw MissingArtifact("missing upstream artifact '" + m.string() + "'");
  return read_json(m);
}

inline void check_upstream(const fs::path& dir, const std::string& expected_hash) {
  const json m = read_manifest(dir);
  if (m.value("hash", std::string()) != expected_hash)
    throw ConfigError("config hash mismatch with upstream stage in '" + dir.string() +
                      "'; rerun the upstream command with this config");
}

inline json manifest(const std::string& command, const std::string& hash, const RunConfig& c,
                     const std::vector<std::uint64_t>& seeds, const fs::path& dir) {
  json j;
  j["command"] = command;
  j["hash"] = hash;
  j["config"] = resolved(c);
  j["seeds"] = seeds;
  j["files"] = json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) j["files"][fs::relative(f, dir).generic_string()] = file_hash(f.string());
  return j;
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Commands

struct PrepareSummary {
  std::size_t n = 0, n_train = 0, n_validation = 0, n_test = 0;
};

inline PrepareSummary cmd_prepare(const RunConfig& c, bool force) {
  const StagePaths paths{c.out_dir};
  const Table table = load_csv(c.dataset_path, c.schema);
  const SplitSet raw = split(table, c.ratios, c.split_seed);
  SplitSet s = raw;
  s.train = impute(raw.train, raw.train);
  s.validation = impute(raw.validation, raw.train);
  s.test = impute(raw.test, raw.train);
  const Problem p = make_problem(s);

  const fs::path dir = paths.prepare();
  claim_output(dir, force);
  save_csv((dir / "train.csv").string(), s.train);
  save_csv((dir / "validation.csv").string(), s.validation);
  save_csv((dir / "test.csv").string(), s.test);
  binfmt::save((dir / "train.bcrm").string(), p.train.values);
  binfmt::save((dir / "validation.bcrm").string(), p.validation.values);
  binfmt::save((dir / "test.bcrm").string(), p.test.values);
  write_json(dir / "encoder.json", to_json(p.encoder));

  PrepareSummary sum{table.size(), s.train.size(), s.validation.size(), s.test.size()};
  json m = manifest("prepare", c.prepare_hash(), c, {c.split_seed}, dir);
  m["n"] = sum.n;
  m["n_train"] = sum.n_train;
  m["n_validation"] = sum.n_validation;
  m["n_test"] = sum.n_test;
  m["width"] = p.dim();
  write_json(dir / "manifest.json", m);
  return sum;
}

inline Problem load_problem(const RunConfig& c) {
  const StagePaths paths{c.out_dir};
  check_upstream(paths.prepare(), c.prepare_hash());
  auto load = [&](const char* name) {
    const fs::path f = paths.prepare() / name;
    if (!fs::exists(f)) throw MissingArtifact("missing upstream artifact '" + f.string() + "'");
    return load_csv(f.string(), c.schema);
  };
  SplitSet s;
  s.train = load("train.csv");
  s.validation = load("validation.csv");
  s.test = load("test.csv");
  return make_problem(s);
}

inline GmmBackbone cmd_fit_backbone(const RunConfig& c, bool force) {
  const StagePaths paths{c.out_dir};
  const Problem p = load_problem(c);
  const GmmBackbone b = fit_backbone(p.train, c.backbone);
  const fs::path dir = paths.backbone();
  claim_output(dir, force);
  write_json(dir / "backbone.json", to_json(b));
  json m = manifest("fit-backbone", c.backbone_hash(), c, {c.backbone.seed}, dir);
  m["upstream"] = c.prepare_hash();
  write_json(dir / "manifest.json", m);
  return b;
}

inline GmmBackbone load_backbone(const RunConfig& c) {
  const StagePaths paths{c.out_dir};
  check_upstream(paths.backbone(), c.backbone_hash());
  const json j = read_json(paths.backbone() / "backbone.json");
  try {
    return backbone_from_json(j);
  } catch (const json::exception& e) {
    throw MissingArtifact(std::string("corrupt backbone artifact: ") + e.what());
  }
}

inline void write_runtime_csv(const fs::path& path, const std::vector<std::pair<std::string, StageTimes>>& rows) {
  std::string out = "run,stage2_s,stage3_s,gkd_s,total_s\n";
  for (const auto& [name, t] : rows)
    out += name + "," + fixed(t.stage2, 3) + "," + fixed(t.stage3, 3) + "," + fixed(t.gkd, 3) + "," +
           fixed(t.total(), 3) + "\n";
  write_file(path.string(), out);
}

struct RefineSummary {
  std::vector<MetricReport> metrics;
  std::vector<double> psi_real, psi_backbone;
};

inline RefineSummary cmd_refine(const RunConfig& c, bool force) {
  const StagePaths paths{c.out_dir};
  const Problem p = load_problem(c);
  const GmmBackbone backbone = load_backbone(c);
  Stage2Params s = c.stage2;
  SelectionConfig sel = c.selection;
  std::string source = "config";
  if (c.from_search) {
    const json best = read_json(paths.search() / "best.json");
    if (best.value("hash", std::string()) != c.backbone_hash())
      throw ConfigError("config hash mismatch with search results; rerun search with this config");
    s = stage2_from_json(best.at("params"));
    sel.sampler = parse_sampler(best.at("sampler").get<std::string>());
    sel.gkd = best.at("gkd").get<bool>();
    sel.grid = false;
    source = "search";
  }

  const fs::path dir = paths.refine();
  claim_output(dir, force);
  const auto seeds = c.eval_seeds();
  RefineSummary sum;
  std::vector<std::pair<std::string, StageTimes>> runtimes;
  json per_seed = json::array();
  RepCache reps;
  Stage2Params unguided;
  unguided.K = 1.0;

  // real-data reference does not depend on the generation seed
  const double psi_real = tstr(p.train, p.validation, p.test).psi;
  for (std::uint64_t seed : seeds) {
    const RefineOutcome r = refine_once(p, backbone, s, sel, c.generation, seed, &reps);
    const EncodedMatrix syn = r.syn.encoded();
    const MetricReport m = evaluate_synthetic(p, syn, seed);
    const Generation base = generate(p, backbone, unguided, c.generation, seed, nullptr, 1);
    const double psi_backbone = tstr(base.pool.encoded(), p.validation, p.test).psi;

    const fs::path sd = dir / ("seed_" + std::to_string(seed));
    fs::create_directories(sd);
    save_csv((sd / "dsyn.csv").string(), p.encoder.decode(syn));
    std::string idx;
    for (auto i : r.selection) idx += std::to_string(i) + "\n";
    write_file((sd / "selection.txt").string(), idx);
    binfmt::save((sd / "dcand.bcrm").string(), r.candidates);
    write_json(sd / "dcand.json", {{"rows", r.candidates.rows()},
                                   {"cols", r.candidates.cols()},
                                   {"seed", seed},
                                   {"M", c.generation.M},
                                   {"guided", s.guided()},
                                   {"config_hash", c.backbone_hash()}});
    json mj = to_json(m);
    mj["seed"] = seed;
    mj["sampler"] = sampler_name(r.sampler);
    mj["gkd"] = r.gkd;
    mj["psi_real"] = num(psi_real);
    mj["psi_backbone"] = num(psi_backbone);
    write_json(sd / "metrics.json", mj);
    per_seed.push_back(mj);

    sum.metrics.push_back(m);
    sum.psi_real.push_back(psi_real);
    sum.psi_backbone.push_back(psi_backbone);
    runtimes.emplace_back("seed_" + std::to_string(seed), r.times);
  }

  std::vector<double> psi;
  for (const auto& m : sum.metrics) psi.push_back(m.psi);
  const Task task = p.task();
  json agg;
  agg["dataset"] = c.name;
  agg["task"] = task_name(task);
  agg["params"] = to_json(s, task);
  agg["params_source"] = source;
  agg["seeds"] = seeds;
  agg["psi"] = psi;
  agg["psi_mean"] = mean(psi);
  agg["psi_sd"] = stdev(psi);
  agg["psi_real"] = sum.psi_real;
  agg["psi_real_mean"] = mean(sum.psi_real);
  agg["psi_backbone"] = sum.psi_backbone;
  agg["psi_backbone_mean"] = mean(sum.psi_backbone);
  agg["delta_vs_real"] = delta_percent(mean(psi), mean(sum.psi_real), task);
  agg["delta_vs_backbone"] = delta_percent(mean(psi), mean(sum.psi_backbone), task);
  agg["per_seed"] = per_seed;
  write_json(dir / "aggregate.json", agg);

  std::string seed_list;
  for (auto sd : seeds) seed_list += std::to_string(sd) + "\n";
  write_file((dir / "seeds.txt").string(), seed_list);
  write_runtime_csv(dir / "runtime.csv", runtimes);

  json man = manifest("refine", c.backbone_hash(), c, seeds, dir);
  man["upstream"] = c.backbone_hash();
  write_json(dir / "manifest.json", man);
  return sum;
}

inline SearchResult cmd_search(const RunConfig& c, bool force) {
  const StagePaths paths{c.out_dir};
  const Problem p = load_problem(c);
  const GmmBackbone backbone = load_backbone(c);
  const fs::path dir = paths.search();
  claim_output(dir, force);

  SearchOptions opt;
  opt.n_trials = c.trials;
  opt.tpe.n_start = c.startup;
  opt.seed = c.seed;
  opt.generation = c.generation;
  opt.grid.batch_size = c.selection.batch_size;
  opt.grid.md_k = c.selection.k;
  const Task task = p.task();

  std::ofstream log(dir / "trials.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write trial log in '" + dir.string() + "'");
  const SearchResult res = optimize(p, backbone, c.space, opt, [&](const TrialRecord& r) {
    log << to_json(r, task).dump() << "\n";
    log.flush();
  });
  log.close();

  const TrialRecord& best = res.best_trial();
  json bj = to_json(best, task);
  bj["hash"] = c.backbone_hash();
  bj["dataset"] = c.name;
  write_json(dir / "best.json", bj);
  write_file((dir / "best_config.txt").string(), best_config_table(c.name, best, task));
  std::vector<std::pair<std::string, StageTimes>> runtimes;
  for (const auto& t : res.trials) runtimes.emplace_back("trial_" + std::to_string(t.trial), t.times);
  write_runtime_csv(dir / "runtime.csv", runtimes);

  json man = manifest("search", c.backbone_hash(), c, {c.seed}, dir);
  man["upstream"] = c.backbone_hash();
  man["reps_trained"] = res.reps_trained;
  write_json(dir / "manifest.json", man);
  return res;
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& c, bool force) {
  const StagePaths paths{c.out_dir};
  const Problem p = load_problem(c);
  const GmmBackbone backbone = load_backbone(c);
  const fs::path dir = paths.sweep();
  claim_output(dir, force);

  SweepOptions opt;
  opt.K = c.sweep_K;
  opt.seeds = c.eval_seeds();
  opt.generation = c.generation;
  opt.sampler = c.selection.sampler;
  opt.gkd = c.selection.gkd;
  opt.batch_size = c.selection.batch_size;
  const auto rows = k_sweep(p, backbone, c.stage2, opt);

  std::string csv = "K,psi_mean,psi_sd,n_seeds,ablation\n";
  for (const auto& r : rows)
    csv += fixed(r.K, 1) + "," + fixed(r.mean) + "," + fixed(r.sd) + "," + std::to_string(r.psi.size()) + "," +
           (r.ablation ? "1" : "0") + "\n";
  write_file((dir / "ksweep.csv").string(), csv);
  json man = manifest("sweep", c.backbone_hash(), c, opt.seeds, dir);
  man["upstream"] = c.backbone_hash();
  write_json(dir / "manifest.json", man);
  return rows;
}

// ---------------------------------------------------------------------------
// Cross-dataset report over refine outputs

struct ReportSummary {
  DeltaReport vs_real, vs_backbone;
  std::vector<std::string> datasets;
};

inline fs::path resolve_refine_dir(const fs::path& d) {
  if (fs::exists(d / "aggregate.json")) return d;
  if (fs::exists(d / "refine" / "aggregate.json")) return d / "refine";
  throw MissingArtifact("no refine aggregate under '" + d.string() + "'");
}

inline ReportSummary cmd_report(const std::vector<std::string>& dirs, const fs::path& out, bool force,
                                std::uint64_t seed = 0) {
  if (dirs.empty()) throw ConfigError("report: need at least one run directory");
  struct Row {
    std::string name, task;
    double psi, sd, real, base;
    std::size_t n;
    StageTimes t;
  };
  std::vector<Row> rows;
  for (const auto& d : dirs) {
    const fs::path rd = resolve_refine_dir(d);
    const json a = read_json(rd / "aggregate.json");
    Row r;
    try {
      r.name = a.at("dataset").get<std::string>();
      r.task = a.at("task").get<std::string>();
      r.psi = a.at("psi_mean").get<double>();
      r.sd = a.at("psi_sd").get<double>();
      r.real = a.at("psi_real_mean").get<double>();
      r.base = a.at("psi_backbone_mean").get<double>();
      r.n = a.at("psi").size();
    } catch (const json::exception& e) {
      throw MissingArtifact("corrupt aggregate in '" + rd.string() + "': " + e.what());
    }
    std::ifstream in(rd / "runtime.csv");
    if (!in) throw MissingArtifact("missing runtime table in '" + rd.string() + "'");
    std::string line;
    std::getline(in, line);
    std::size_t k = 0;
    StageTimes sum;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
      if (f.size() < 4) continue;
      sum.stage2 += std::stod(f[1]);
      sum.stage3 += std::stod(f[2]);
      sum.gkd += std::stod(f[3]);
      ++k;
    }
    if (k) sum = {sum.stage2 / k, sum.stage3 / k, sum.gkd / k};
    r.t = sum;
    rows.push_back(r);
  }

  auto task_of = [](const std::string& s) {
    return s == "regression" ? Task::regression : s == "multiclass" ? Task::multiclass : Task::binary;
  };
  std::vector<double> d_real, d_base;
  for (const auto& r : rows) {
    d_real.push_back(delta_percent(r.psi, r.real, task_of(r.task)));
    d_base.push_back(delta_percent(r.psi, r.base, task_of(r.task)));
  }
  ReportSummary sum;
  sum.vs_real = aggregate(d_real, 10000, seed);
  sum.vs_backbone = aggregate(d_base, 10000, derive_seed(seed, 1));

  claim_output(out, force);
  json j;
  j["vs_real"] = to_json(sum.vs_real);
  j["vs_backbone"] = to_json(sum.vs_backbone);
  j["datasets"] = json::array();
  std::string csv = "dataset,stage2_s,stage3_s,gkd_s,total_s\n";
  std::string headroom = "dataset,backbone_gap_pct,bcr_gain_pct\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    sum.datasets.push_back(r.name);
    j["datasets"].push_back({{"dataset", r.name},
                             {"task", r.task},
                             {"n_seeds", r.n},
                             {"psi_mean", r.psi},
                             {"psi_sd", r.sd},
                             {"psi_real", r.real},
                             {"psi_backbone", r.base},
                             {"delta_vs_real", d_real[i]},
                             {"delta_vs_backbone", d_base[i]}});
    csv += r.name + "," + fixed(r.t.stage2, 3) + "," + fixed(r.t.stage3, 3) + "," + fixed(r.t.gkd, 3) + "," +
           fixed(r.t.total(), 3) + "\n";
    headroom += r.name + "," + fixed(delta_percent(r.base, r.real, task_of(r.task)), 4) + "," + fixed(d_base[i], 4) +
                "\n";
  }
  write_json(out / "report.json", j);
  write_file((out / "runtime.csv").string(), csv);
  write_file((out / "headroom.csv").string(), headroom);
  return sum;
}

}  // namespace bcr
