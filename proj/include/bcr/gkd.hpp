#pragma once

#include <set>

#include "bcr/linear_models.hpp"
#include "bcr/pool.hpp"

namespace bcr {

struct TeacherOptions {
  double lr = 0.05;
  double l2 = 1e-3;
  int epochs = 300;
  std::uint64_t seed = 0;
};

// Soft-label teacher: L2-regularised multinomial logistic regression fitted
// on real rows.
struct Teacher {
  SoftmaxModel model;
  std::size_t n_classes = 0;
  int epochs = 0;

  Matrix predict(const Matrix& x) const { return model.predict_proba(x); }
};

inline Teacher train_teacher(const EncodedMatrix& real, const TeacherOptions& opt = {}) {
  if (real.target.task == Task::regression) throw ConfigError("gkd: undefined for regression targets");
  if (real.size() == 0) throw Error("gkd: empty training set");
  std::set<int> seen;
  for (std::size_t i = 0; i < real.size(); ++i) seen.insert(real.target.hard_label(i));
  if (seen.size() < 2) throw Error("gkd: teacher needs at least two classes");
  Teacher t;
  t.n_classes = real.target.n_classes;
  t.model = SoftmaxModel(t.n_classes, real.values.cols());
  t.model.fit(real.values, target_distribution(real.target),
              {.lr = opt.lr, .l2 = opt.l2, .max_epochs = opt.epochs, .patience = 0, .seed = opt.seed});
  t.epochs = t.model.epochs_run();
  return t;
}

// Replaces candidate targets with the teacher's distributions; features are
// left untouched.
inline CandidatePool relabel(const CandidatePool& pool, const Teacher& t) {
  if (pool.target.task == Task::regression) throw ConfigError("gkd: undefined for regression targets");
  if (pool.features.cols() != t.model.dim()) throw DimensionError("gkd: feature width != teacher width");
  CandidatePool out = pool;
  out.target.soft = Matrix(pool.size(), t.n_classes);
  parallel_for(pool.size(), [&](std::size_t i) { t.model.proba(pool.features.row(i), out.target.soft.row(i)); });
  out.distilled = true;
  return out;
}

}  // namespace bcr
