#include <CLI11.hpp>

#include "bcr/bcr.hpp"

// Writes a synthetic Gaussian-mixture table to CSV.
int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic mixed-type fixture table"};
  bcr::FixtureSpec f;
  std::string task = "binary", out;
  app.add_option("--task", task, "binary | multiclass | regression")
      ->check(CLI::IsMember({"binary", "multiclass", "regression"}));
  app.add_option("--rows", f.rows, "row count");
  app.add_option("--numeric", f.numeric, "numeric columns");
  app.add_option("--classes", f.classes, "classes (classification)");
  app.add_option("--components", f.components, "generator components");
  app.add_option("--seed", f.seed, "seed");
  app.add_option("--out", out, "output CSV")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  f.task = task == "regression" ? bcr::Task::regression : task == "multiclass" ? bcr::Task::multiclass : bcr::Task::binary;
  try {
    bcr::save_csv(out, bcr::make_fixture(f));
  } catch (const bcr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
