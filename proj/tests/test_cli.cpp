#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bcr/bcr.hpp"

namespace fs = std::filesystem;
using bcr::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  std::string stderr_text;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / ("bcr_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    // first 400 rows of the demo data keep every stage quick
    std::ifstream in(fs::path(BCR_DEMO_DIR) / "fixture_binary.csv");
    std::ofstream out(dir / "data.csv");
    std::string line;
    for (int i = 0; i <= 400 && std::getline(in, line); ++i) out << line << "\n";
  }
  void TearDown() override { fs::remove_all(dir); }

  json base_config() const {
    json j = json::parse(slurp(fs::path(BCR_DEMO_DIR) / "config.json"));
    j["dataset"]["path"] = (dir / "data.csv").string();
    j["output"] = (dir / "run").string();
    j["generation"] = {{"M", 3}, {"batch_size", 64}, {"vae_epochs", 5}};
    j["backbone"]["steps"] = 50;
    j["guidance"]["mode"] = "none";
    j["sweep"]["K"] = {0.1, 0.5, 1, 2};
    return j;
  }

  fs::path write_config(const json& j, const std::string& name = "config.json") const {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  int run(const std::string& args) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(BCR_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                            err.string();
    const int status = std::system(cmd.c_str());
    stderr_text = slurp(err);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  int run(const std::string& cmd, const fs::path& config, const std::string& extra = "") {
    return run(cmd + " --config " + config.string() + " " + extra);
  }
};

}  // namespace

TEST_F(Cli, MissingFieldNamesPathAndExitsTwo) {
  json j = base_config();
  j["dataset"]["schema"].erase("target");
  EXPECT_EQ(run("prepare", write_config(j)), 2);
  EXPECT_NE(stderr_text.find("dataset.schema.target"), std::string::npos) << stderr_text;

  j = base_config();
  j["selection"]["K"] = 30.0;
  EXPECT_EQ(run("prepare", write_config(j)), 2);
  EXPECT_NE(stderr_text.find("selection.K"), std::string::npos) << stderr_text;

  EXPECT_EQ(run("prepare --config " + (dir / "absent.json").string()), 2);
  EXPECT_EQ(run("prepare"), 2);
  EXPECT_EQ(run("prepare", write_config(base_config()), "--threads 0"), 2);
}

TEST_F(Cli, MissingUpstreamArtifactExitsThree) {
  const auto cfg = write_config(base_config());
  EXPECT_EQ(run("fit-backbone", cfg), 3);
  EXPECT_NE(stderr_text.find("prepare"), std::string::npos) << stderr_text;
  ASSERT_EQ(run("prepare", cfg), 0);
  EXPECT_EQ(run("refine", cfg), 3);
  EXPECT_EQ(run("report " + (dir / "nowhere").string() + " --out " + (dir / "rep").string()), 3);
}

TEST_F(Cli, ExistingOutputNeedsForce) {
  const auto cfg = write_config(base_config());
  ASSERT_EQ(run("prepare", cfg), 0);
  EXPECT_EQ(run("prepare", cfg), 2);
  EXPECT_NE(stderr_text.find("--force"), std::string::npos);
  EXPECT_EQ(run("prepare", cfg, "--force"), 0);
}

TEST_F(Cli, PrepareIsReproducible) {
  const auto cfg = write_config(base_config());
  ASSERT_EQ(run("prepare", cfg), 0);
  const json a = json::parse(slurp(dir / "run/prepare/manifest.json"));
  ASSERT_EQ(run("prepare", cfg, "--force"), 0);
  const json b = json::parse(slurp(dir / "run/prepare/manifest.json"));
  EXPECT_EQ(a["files"], b["files"]);
  EXPECT_EQ(a["files"].size(), 7u);
  EXPECT_EQ(a["n"], 400);
  EXPECT_EQ(a["n_train"].get<int>() + a["n_validation"].get<int>() + a["n_test"].get<int>(), 400);
}

TEST_F(Cli, ConfigHashMismatchIsRejected) {
  json j = base_config();
  const auto cfg = write_config(j);
  ASSERT_EQ(run("prepare", cfg), 0);
  ASSERT_EQ(run("fit-backbone", cfg), 0);
  j["split"]["seed"] = 9;
  EXPECT_EQ(run("fit-backbone", write_config(j, "other.json")), 2);
  EXPECT_NE(stderr_text.find("hash mismatch"), std::string::npos) << stderr_text;
  j = base_config();
  j["backbone"]["components"] = 2;
  EXPECT_EQ(run("refine", write_config(j, "other.json")), 2);
}

TEST_F(Cli, RefineSweepReportPipeline) {
  const auto cfg = write_config(base_config());
  ASSERT_EQ(run("prepare", cfg), 0);
  ASSERT_EQ(run("fit-backbone", cfg, "--threads 2"), 0);
  ASSERT_EQ(run("refine", cfg), 0) << stderr_text;

  const fs::path rd = dir / "run/refine";
  const json agg = json::parse(slurp(rd / "aggregate.json"));
  EXPECT_EQ(agg["seeds"], (json{0, 1, 2, 3, 4}));
  ASSERT_EQ(agg["per_seed"].size(), 5u);
  for (const auto& m : agg["per_seed"])
    for (const char* k : {"task", "psi", "f1", "precision", "recall", "dcr1_share", "nndr", "n_syn"})
      EXPECT_TRUE(m.contains(k)) << k;
  for (int s = 0; s < 5; ++s) {
    const fs::path sd = rd / ("seed_" + std::to_string(s));
    for (const char* f : {"dsyn.csv", "selection.txt", "dcand.bcrm", "dcand.json", "metrics.json"})
      EXPECT_TRUE(fs::exists(sd / f)) << sd / f;
  }
  EXPECT_EQ(slurp(rd / "seeds.txt"), "0\n1\n2\n3\n4\n");
  const std::string metrics = slurp(rd / "seed_2/metrics.json");
  const std::string aggregate = slurp(rd / "aggregate.json");

  ASSERT_EQ(run("refine", cfg, "--force --threads 3"), 0);
  EXPECT_EQ(slurp(rd / "seed_2/metrics.json"), metrics);
  EXPECT_EQ(slurp(rd / "aggregate.json"), aggregate);

  ASSERT_EQ(run("sweep", cfg), 0) << stderr_text;
  std::ifstream csv(dir / "run/sweep/ksweep.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "K,psi_mean,psi_sd,n_seeds,ablation");
  std::vector<std::string> K, ablation;
  while (std::getline(csv, line)) {
    K.push_back(line.substr(0, line.find(',')));
    ablation.push_back(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(K, (std::vector<std::string>{"0.1", "0.5", "1.0", "2.0", "1.0"}));
  EXPECT_EQ(ablation, (std::vector<std::string>{"0", "0", "0", "0", "1"}));

  ASSERT_EQ(run("report " + (dir / "run").string() + " --out " + (dir / "rep").string()), 0) << stderr_text;
  const json rep = json::parse(slurp(dir / "rep/report.json"));
  EXPECT_EQ(rep["datasets"].size(), 1u);
  EXPECT_EQ(rep["vs_backbone"]["n"], 1);
  EXPECT_TRUE(fs::exists(dir / "rep/runtime.csv"));
  EXPECT_TRUE(fs::exists(dir / "rep/headroom.csv"));
}

TEST_F(Cli, SearchThenRefineFromBest) {
  json j = base_config();
  j["generation"]["M"] = 26;
  j["search"] = {{"trials", 2}, {"startup", 2}, {"guidance", {"none"}}};
  j["evaluation"] = {{"seeds", 1}, {"from_search", true}};
  const auto cfg = write_config(j);
  ASSERT_EQ(run("prepare", cfg), 0);
  ASSERT_EQ(run("fit-backbone", cfg), 0);
  EXPECT_EQ(run("refine", cfg), 3);
  ASSERT_EQ(run("search", cfg), 0) << stderr_text;
  const std::string log = slurp(dir / "run/search/trials.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  EXPECT_TRUE(fs::exists(dir / "run/search/best_config.txt"));
  ASSERT_EQ(run("refine", cfg), 0) << stderr_text;
  const json agg = json::parse(slurp(dir / "run/refine/aggregate.json"));
  EXPECT_EQ(agg["params_source"], "search");
}
