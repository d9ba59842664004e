#pragma once

#include "bcr/data.hpp"

namespace bcr {

// Synthetic mixed-type tables drawn from a known Gaussian-mixture generator.
struct FixtureSpec {
  Task task = Task::binary;
  std::size_t rows = 1500;
  std::size_t numeric = 4;
  std::size_t classes = 2;       // ignored for regression
  std::size_t components = 3;    // generator mixture components
  bool categorical = true;       // adds one 3-level column
  double separation = 2.5;       // spread of component means
  double label_noise = 0.1;      // classification: share of labels drawn at random
  double target_noise = 0.1;     // regression: additive noise sd
  std::uint64_t seed = 0;
};

inline Schema fixture_schema(const FixtureSpec& f) {
  Schema s;
  for (std::size_t j = 0; j < f.numeric; ++j) s.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, {}});
  if (f.categorical) s.columns.push_back({"c0", ColumnKind::categorical, {"a", "b", "c"}});
  s.target.name = "y";
  s.target.task = f.task;
  if (f.task != Task::regression)
    for (std::size_t c = 0; c < f.classes; ++c) s.target.classes.push_back("k" + std::to_string(c));
  s.validate();
  return s;
}

// Component k sits at a random point scaled by `separation`. Classification
// assigns each component a class (cycling), then flips a share of labels;
// regression uses a smooth function of the numeric columns.
inline Table make_fixture(const FixtureSpec& f) {
  if (f.numeric == 0) throw ConfigError("fixture: need at least one numeric column");
  if (f.task != Task::regression && f.components < f.classes)
    throw ConfigError("fixture: need at least one component per class");
  Table t{fixture_schema(f), {}};
  Rng rng(derive_seed(f.seed, 0xf1c));
  Matrix means(f.components, f.numeric);
  std::vector<double> scale(f.components);
  for (std::size_t k = 0; k < f.components; ++k) {
    for (auto& v : means.row(k)) v = f.separation * standard_normal(rng);
    scale[k] = 0.6 + 0.8 * uniform01(rng);
  }
  std::vector<double> w(f.numeric);
  for (auto& v : w) v = standard_normal(rng);

  for (std::size_t i = 0; i < f.rows; ++i) {
    const std::size_t k = uniform_index(rng, f.components);
    std::vector<Cell> row;
    std::vector<double> x(f.numeric);
    for (std::size_t j = 0; j < f.numeric; ++j) {
      x[j] = means(k, j) + scale[k] * standard_normal(rng);
      row.emplace_back(x[j]);
    }
    std::size_t cat = 0;
    if (f.categorical) {
      cat = uniform01(rng) < 0.7 ? k % 3 : uniform_index(rng, 3);
      row.emplace_back(cat);
    }
    if (f.task == Task::regression) {
      double y = 0.0;
      for (std::size_t j = 0; j < f.numeric; ++j) y += w[j] * x[j];
      y += std::sin(x[0]) + 0.5 * static_cast<double>(cat) + f.target_noise * standard_normal(rng);
      row.emplace_back(y);
    } else {
      std::size_t label = k % f.classes;
      if (uniform01(rng) < f.label_noise) label = uniform_index(rng, f.classes);
      row.emplace_back(label);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace bcr
