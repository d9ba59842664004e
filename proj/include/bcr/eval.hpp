#pragma once

#include <variant>

#include "bcr/chamfer.hpp"
#include "bcr/linear_models.hpp"
#include "bcr/samplers.hpp"

namespace bcr {

// ---------------------------------------------------------------------------
// Metrics

// Rank-statistic AUROC with midranks for tied scores.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) throw Error("auroc: empty or misaligned inputs");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1) pos += 1.0, sum += rank[i];
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error("auroc: both classes must be present");
  return (sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// Support-weighted one-vs-rest AUROC; classes absent from `labels` are
// skipped.
inline double weighted_auroc(const Matrix& proba, std::span<const int> labels) {
  if (proba.rows() != labels.size()) throw Error("weighted auroc: misaligned inputs");
  double total = 0.0, weight = 0.0;
  std::vector<double> s(labels.size());
  std::vector<int> y(labels.size());
  for (std::size_t c = 0; c < proba.cols(); ++c) {
    std::size_t support = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = proba(i, c);
      y[i] = labels[i] == static_cast<int>(c);
      support += static_cast<std::size_t>(y[i]);
    }
    if (support == 0 || support == labels.size()) continue;
    total += static_cast<double>(support) * auroc(s, y);
    weight += static_cast<double>(support);
  }
  if (weight == 0.0) throw Error("weighted auroc: need at least two classes present");
  return total / weight;
}

inline double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw Error("rmse: empty or misaligned inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double f1_for(std::span<const int> pred, std::span<const int> labels, int positive) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == positive && labels[i] == positive) ++tp;
    else if (pred[i] == positive) ++fp;
    else if (labels[i] == positive) ++fn;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

inline double f1(std::span<const int> pred, std::span<const int> labels) {
  if (pred.size() != labels.size() || pred.empty()) throw Error("f1: empty or misaligned inputs");
  return f1_for(pred, labels, 1);
}

inline double macro_f1(std::span<const int> pred, std::span<const int> labels, std::size_t n_classes) {
  if (pred.size() != labels.size() || pred.empty()) throw Error("macro f1: empty or misaligned inputs");
  double s = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) s += f1_for(pred, labels, static_cast<int>(c));
  return s / static_cast<double>(n_classes);
}

// Signed relative change against a baseline, positive meaning better.
inline double delta_percent(double m, double r, Task task) {
  if (r == 0.0) throw Error("delta percent: baseline is zero");
  return task == Task::regression ? 100.0 * (r - m) / r : 100.0 * (m - r) / r;
}

// ---------------------------------------------------------------------------
// Downstream learner

struct LearnerOptions {
  SoftmaxOptions softmax{};
  double ridge_lambda = 1e-3;
};

struct DownstreamLearner {
  Task task = Task::binary;
  std::variant<SoftmaxModel, RidgeModel> model;

  Matrix predict_proba(const Matrix& x) const { return std::get<SoftmaxModel>(model).predict_proba(x); }
  std::vector<double> predict(const Matrix& x) const { return std::get<RidgeModel>(model).predict(x); }
};

inline DownstreamLearner train_downstream(const EncodedMatrix& train, const EncodedMatrix& val,
                                          const LearnerOptions& opt = {}) {
  if (train.size() == 0 || val.size() == 0) throw Error("downstream: empty training or validation set");
  if (train.target.task != val.target.task) throw Error("downstream: task mismatch between train and validation");
  if (train.values.cols() != val.values.cols()) throw DimensionError("downstream: feature width mismatch");
  DownstreamLearner l;
  l.task = train.target.task;
  if (l.task == Task::regression) {
    if (train.target.values.size() != train.size()) throw Error("downstream: regression targets missing");
    RidgeModel m;
    m.fit(train.values, train.target.values, opt.ridge_lambda);
    l.model = std::move(m);
    return l;
  }
  SoftmaxModel m(train.target.n_classes, train.values.cols());
  const Matrix val_y = target_distribution(val.target);
  m.fit(train.values, target_distribution(train.target), opt.softmax, &val.values, &val_y);
  l.model = std::move(m);
  return l;
}

struct Score {
  double psi = 0.0;                  // AUROC, weighted AUROC or RMSE
  std::optional<double> f1;          // F1 or macro-F1
};

// Task metric of a trained learner on labelled rows.
inline Score score_learner(const DownstreamLearner& l, const EncodedMatrix& data) {
  Score s;
  if (l.task == Task::regression) {
    s.psi = rmse(l.predict(data.values), data.target.values);
    return s;
  }
  const Matrix p = l.predict_proba(data.values);
  std::vector<int> labels(data.size()), pred(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels[i] = data.target.hard_label(i);
    auto r = p.row(i);
    pred[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  if (l.task == Task::binary) {
    std::vector<double> s1(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) s1[i] = p(i, 1);
    s.psi = auroc(s1, labels);
    s.f1 = f1(pred, labels);
  } else {
    s.psi = weighted_auroc(p, labels);
    s.f1 = macro_f1(pred, labels, p.cols());
  }
  return s;
}

// Maximised objective: psi for AUROC-type metrics, -RMSE for regression.
inline double utility(double psi, Task task) { return task == Task::regression ? -psi : psi; }

// Train on synthetic rows, early-stop on real validation rows, score on
// real test rows.
inline Score tstr(const EncodedMatrix& syn, const EncodedMatrix& val, const EncodedMatrix& test,
                  const LearnerOptions& opt = {}) {
  if (syn.size() == 0) throw Error("tstr: empty synthetic set");
  return score_learner(train_downstream(syn, val, opt), test);
}

// ---------------------------------------------------------------------------
// Fidelity and privacy proxies, computed on encoded features

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

inline PrecisionRecall manifold_precision_recall(const Matrix& syn, const Matrix& real, std::size_t k = 10) {
  if (syn.rows() <= k || real.rows() <= k) throw ConfigError("precision/recall: k must be below both set sizes");
  const auto rho_real = compute_hyperspheres(real, k);
  const auto rho_syn = compute_hyperspheres(syn, k);
  const auto d_syn = manifold_distances(syn, real, rho_real);
  const auto d_real = manifold_distances(real, syn, rho_syn);
  PrecisionRecall pr;
  for (double d : d_syn) pr.precision += d == 0.0;
  for (double d : d_real) pr.recall += d == 0.0;
  pr.precision /= static_cast<double>(syn.rows());
  pr.recall /= static_cast<double>(real.rows());
  return pr;
}

// Share of synthetic rows whose nearest record lies in `train` rather than in
// an equal-size `holdout`; ties count as holdout. The larger of the two sets
// is subsampled (seeded) to match.
inline double dcr1_share(const Matrix& syn, const Matrix& train, const Matrix& holdout, std::uint64_t seed = 0) {
  if (syn.rows() == 0 || train.rows() == 0 || holdout.rows() == 0) throw Error("dcr1: empty input");
  const std::size_t m = std::min(train.rows(), holdout.rows());
  Rng rng(derive_seed(seed, 0xdc41));
  auto shrink = [&](const Matrix& x) {
    if (x.rows() == m) return x;
    auto idx = sample_without_replacement(x.rows(), m, rng);
    std::sort(idx.begin(), idx.end());
    return x.select_rows(idx);
  };
  const PointSet tr(shrink(train)), ho(shrink(holdout));
  std::vector<char> hit(syn.rows());
  parallel_for(syn.rows(), [&](std::size_t i) {
    hit[i] = tr.nearest(syn.row(i)).distance < ho.nearest(syn.row(i)).distance;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(syn.rows());
}

// Mean ratio of first to second nearest real distance; a row at zero
// distance from a real record contributes 0.
inline double nndr(const Matrix& syn, const Matrix& real) {
  if (syn.rows() == 0) throw Error("nndr: empty synthetic set");
  if (real.rows() < 2) throw Error("nndr: need at least two real rows");
  const PointSet ps(real);
  std::vector<double> r(syn.rows());
  parallel_for(syn.rows(), [&](std::size_t i) {
    const auto nn = ps.knn(syn.row(i), 2);
    r[i] = nn[1].distance > 0.0 ? nn[0].distance / nn[1].distance : 0.0;
  });
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

struct MetricReport {
  std::string task;
  double psi = 0.0;
  std::optional<double> f1;
  double precision = 0.0;
  double recall = 0.0;
  double dcr1_share = 0.0;
  double nndr = 0.0;
  std::size_t n_syn = 0;
};

// ---------------------------------------------------------------------------
// Aggregation across datasets or seeds

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw Error("mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stdev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct Wilcoxon {
  double w_plus = 0.0;
  double p_greater = 1.0;    // one-sided: deltas tend to be positive
  double p_two_sided = 1.0;
  std::size_t n = 0;         // non-zero differences
  bool exact = false;
};

// Signed-rank test with midranks; zero differences are dropped. Exact
// null distribution by counting subsets of doubled ranks for n <= 25,
// normal approximation with tie correction above.
inline Wilcoxon wilcoxon_signed_rank(std::span<const double> d) {
  std::vector<double> nz;
  for (double x : d)
    if (x != 0.0) nz.push_back(x);
  Wilcoxon w;
  w.n = nz.size();
  if (nz.empty()) return w;
  const std::size_t n = nz.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  std::vector<long> rank2(n);  // twice the midrank, always an integer
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(nz[idx[j + 1]]) == std::abs(nz[idx[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = static_cast<long>(i + j + 2);
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (nz[i] > 0) w2 += rank2[i];
  w.w_plus = static_cast<double>(w2) / 2.0;

  if (n <= 25) {
    w.exact = true;
    const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (long r : rank2)
      for (long s = total; s >= r; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double ge = 0.0, le = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s >= w2) ge += count[static_cast<std::size_t>(s)];
      if (s <= w2) le += count[static_cast<std::size_t>(s)];
    }
    w.p_greater = ge / all;
    w.p_two_sided = std::min(1.0, 2.0 * std::min(ge, le) / all);
    return w;
  }
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return w;
  const double z = (w.w_plus - mu) / std::sqrt(var);
  w.p_greater = 0.5 * std::erfc(z / std::sqrt(2.0));
  w.p_two_sided = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return w;
}

struct DeltaReport {
  std::vector<double> deltas;
  double median = 0.0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Wilcoxon wilcoxon;
  std::size_t wins = 0;

  std::string wins_label() const { return std::to_string(wins) + "/" + std::to_string(deltas.size()); }
};

// Median, mean, percentile-bootstrap 95% CI of the median, signed-rank test
// and win count.
inline DeltaReport aggregate(std::span<const double> deltas, std::size_t n_boot = 10000, std::uint64_t seed = 0) {
  if (deltas.empty()) throw Error("aggregate: no deltas");
  DeltaReport r;
  r.deltas.assign(deltas.begin(), deltas.end());
  r.median = median(r.deltas);
  r.mean = mean(deltas);
  for (double d : deltas) r.wins += d > 0.0;
  r.wilcoxon = wilcoxon_signed_rank(deltas);
  Rng rng(derive_seed(seed, 0xb007));
  std::vector<double> meds(n_boot), sample(deltas.size());
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (auto& s : sample) s = deltas[uniform_index(rng, deltas.size())];
    meds[b] = median(sample);
  }
  if (n_boot == 0) {
    r.ci_low = r.ci_high = r.median;
    return r;
  }
  std::sort(meds.begin(), meds.end());
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(n_boot - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n_boot - 1);
    return meds[lo] + (pos - static_cast<double>(lo)) * (meds[hi] - meds[lo]);
  };
  r.ci_low = std::min(pct(0.025), r.median);
  r.ci_high = std::max(pct(0.975), r.median);
  return r;
}

}  // namespace bcr
