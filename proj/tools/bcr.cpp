#include <CLI11.hpp>

#include "bcr/bcr.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
  auto* opt = app->add_option("--config", c.config, "run configuration (JSON)");
  if (needs_config) opt->required();
  app->add_option("--seed", c.seed, "override the top-level seed");
  app->add_option("--threads", c.threads, "worker threads (default BCR_THREADS or 1)")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output root (overrides config and BCR_OUT)");
  app->add_flag("--force", c.force, "replace existing outputs");
}

bcr::RunConfig load(const Common& c) {
  bcr::RunConfig cfg = bcr::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

void apply_threads(const Common& c) {
  if (c.threads) bcr::set_num_threads(*c.threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chamfer-guided refinement of tabular diffusion samples"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::string> report_dirs;

  auto* prepare = app.add_subcommand("prepare", "split, impute and encode the dataset");
  auto* fit = app.add_subcommand("fit-backbone", "fit the Gaussian-mixture diffusion backbone");
  auto* refine = app.add_subcommand("refine", "generate, select and evaluate over the evaluation seeds");
  auto* search = app.add_subcommand("search", "TPE search over guidance and selection settings");
  auto* sweep = app.add_subcommand("sweep", "TSTR utility across the cardinality multiplier K");
  auto* report = app.add_subcommand("report", "aggregate refine runs into delta and runtime tables");
  for (auto* s : {prepare, fit, refine, search, sweep}) add_common(s, common);
  add_common(report, common, false);
  report->add_option("dirs", report_dirs, "run or refine directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_threads(common);
    if (report->parsed()) {
      std::string out = common.out;
      if (out.empty()) out = std::getenv("BCR_OUT") ? std::getenv("BCR_OUT") : "report";
      const auto r = bcr::cmd_report(report_dirs, out, common.force, common.seed.value_or(0));
      std::cout << "report: " << r.datasets.size() << " datasets, vs backbone " << r.vs_backbone.wins_label()
                << ", median " << bcr::fixed(r.vs_backbone.median, 2) << "%\n";
      return 0;
    }
    const bcr::RunConfig cfg = load(common);
    if (prepare->parsed()) {
      const auto s = bcr::cmd_prepare(cfg, common.force);
      std::cout << "prepare: n=" << s.n << " train=" << s.n_train << " validation=" << s.n_validation
                << " test=" << s.n_test << "\n";
    } else if (fit->parsed()) {
      const auto b = bcr::cmd_fit_backbone(cfg, common.force);
      std::cout << "fit-backbone: " << b.mixtures().size() << " mixture(s), dim " << b.dim() << "\n";
    } else if (refine->parsed()) {
      const auto s = bcr::cmd_refine(cfg, common.force);
      std::vector<double> psi;
      for (const auto& m : s.metrics) psi.push_back(m.psi);
      std::cout << "refine: psi " << bcr::fixed(bcr::mean(psi), 4) << " +- " << bcr::fixed(bcr::stdev(psi), 4)
                << " over " << psi.size() << " seeds (real " << bcr::fixed(bcr::mean(s.psi_real), 4)
                << ", backbone " << bcr::fixed(bcr::mean(s.psi_backbone), 4) << ")\n";
    } else if (search->parsed()) {
      const auto r = bcr::cmd_search(cfg, common.force);
      std::cout << "search: best trial " << r.best << " objective " << bcr::fixed(r.best_trial().objective, 4)
                << "\n";
    } else if (sweep->parsed()) {
      const auto rows = bcr::cmd_sweep(cfg, common.force);
      std::cout << "sweep: " << rows.size() << " rows\n";
    }
    return 0;
  } catch (const bcr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bcr::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bcr::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const bcr::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
