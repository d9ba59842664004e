#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bcr;

TEST(Auroc, HandExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{0, 1, 1}), 1.0);
  // a tied positive/negative pair counts one half
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.5, 0.5, 0.9}, std::vector<int>{0, 1, 1}), 0.75);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  Rng rng(1);
  std::vector<double> s(200), t(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = static_cast<int>(i % 2);
    s[i] = standard_normal(rng) + 0.7 * y[i];
    t[i] = std::exp(3.0 * s[i]) - 4.0;
  }
  EXPECT_DOUBLE_EQ(auroc(s, y), auroc(t, y));
  std::vector<int> thresh(200);
  for (std::size_t i = 0; i < 200; ++i) thresh[i] = s[i] > 0.2;
  EXPECT_DOUBLE_EQ(auroc(s, thresh), 1.0);
}

TEST(Auroc, WeightedEqualSupportIsPlainMean) {
  Rng rng(2);
  Matrix p(90, 3);
  std::vector<int> y(90);
  for (std::size_t i = 0; i < 90; ++i) {
    y[i] = static_cast<int>(i % 3);
    for (std::size_t c = 0; c < 3; ++c) p(i, c) = uniform01(rng) + (static_cast<int>(c) == y[i] ? 0.3 : 0.0);
  }
  double plain = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> s(90);
    std::vector<int> b(90);
    for (std::size_t i = 0; i < 90; ++i) s[i] = p(i, c), b[i] = y[i] == static_cast<int>(c);
    plain += auroc(s, b) / 3.0;
  }
  EXPECT_NEAR(weighted_auroc(p, y), plain, 1e-12);
}

TEST(Metrics, RmseAndF1) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(a, std::vector<double>{1.0, 2.0, 5.0}), std::sqrt(4.0 / 3.0));
  EXPECT_THROW(rmse(a, std::vector<double>{1.0}), Error);
  const std::vector<int> pred{1, 1, 0, 0}, lab{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(f1(pred, lab), 0.5);
  EXPECT_DOUBLE_EQ(macro_f1(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 2}, 3), 1.0);
}

TEST(DeltaPercent, TableValues) {
  EXPECT_NEAR(delta_percent(0.0620, 0.1025, Task::regression), 39.5, 0.05);
  EXPECT_NEAR(delta_percent(0.074, 0.079, Task::regression), 6.3, 0.05);
  EXPECT_EQ(delta_percent(0.8, 0.8, Task::binary), 0.0);
  EXPECT_DOUBLE_EQ(delta_percent(0.9, 0.8, Task::binary), 12.5);
  EXPECT_THROW(delta_percent(0.5, 0.0, Task::binary), Error);
}

TEST(Downstream, SeparableFixture) {
  const auto tr = oracle::blobs(300, {{-2, -2}, {2, 2}}, 0.6, 3);
  const auto va = oracle::blobs(100, {{-2, -2}, {2, 2}}, 0.6, 4);
  const auto l = train_downstream(tr, va);
  EXPECT_GT(score_learner(l, va).psi, 0.95);
  const auto l2 = train_downstream(tr, va);
  EXPECT_EQ(std::get<SoftmaxModel>(l.model).weights().data(), std::get<SoftmaxModel>(l2.model).weights().data());
}

TEST(Downstream, OneHotSoftLabelsMatchHardLabels) {
  const auto tr = oracle::blobs(200, {{0, 0}, {1, 1}, {2, 0}}, 0.8, 5);
  const auto va = oracle::blobs(60, {{0, 0}, {1, 1}, {2, 0}}, 0.8, 6);
  auto soft = tr;
  soft.target.soft = target_distribution(tr.target);
  const auto a = train_downstream(tr, va), b = train_downstream(soft, va);
  const auto& ma = std::get<SoftmaxModel>(a.model);
  const auto& mb = std::get<SoftmaxModel>(b.model);
  const Matrix y = target_distribution(va.target);
  EXPECT_NEAR(ma.loss(va.values, y), mb.loss(va.values, y), 1e-6);
}

TEST(Downstream, Errors) {
  const auto tr = oracle::blobs(20, {{0, 0}, {1, 1}}, 0.5, 7);
  EXPECT_THROW(train_downstream(EncodedMatrix{}, tr), Error);
  EncodedMatrix reg;
  reg.values = Matrix(3, 2);
  reg.target.task = Task::regression;
  reg.target.values.assign(3, 0.0);
  EXPECT_THROW(train_downstream(tr, reg), Error);
  EXPECT_THROW(tstr(EncodedMatrix{}, tr, tr), Error);
}

TEST(Tstr, IdenticalCopyAndLabelDestruction) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 1500, .seed = 8});
  const double real = tstr(p.train, p.validation, p.test).psi;
  const EncodedMatrix copy = p.train;
  EXPECT_LE(std::abs(tstr(copy, p.validation, p.test).psi - real), 0.02);
  // without early stopping: selecting epochs on real validation rows leaks label signal
  LearnerOptions opt;
  opt.softmax.patience = 0;
  double sum = 0.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    auto perm = p.train;
    Rng rng(r);
    shuffle(perm.target.labels, rng);
    sum += tstr(perm, p.validation, p.test, opt).psi;
  }
  EXPECT_NEAR(sum / 10.0, 0.5, 0.1);
}

TEST(Tstr, RegressionRidge) {
  const auto p = oracle::fixture_problem({.task = Task::regression, .rows = 800, .seed = 10});
  const auto s = tstr(p.train, p.validation, p.test);
  EXPECT_GT(s.psi, 0.0);
  EXPECT_FALSE(s.f1.has_value());
  auto noise = p.train;
  Rng rng(11);
  shuffle(noise.target.values, rng);
  EXPECT_GT(tstr(noise, p.validation, p.test).psi, s.psi);
}

TEST(PrecisionRecall, Controls) {
  const std::vector<std::vector<double>> c{{0, 0}, {4, 1}, {1, 4}};
  const auto real = oracle::blobs(1000, c, 1.0, 12);
  const auto syn = oracle::blobs(1000, c, 1.0, 13);
  const auto same = manifold_precision_recall(syn.values, real.values);
  EXPECT_GE(same.precision, 0.9);
  EXPECT_GE(same.recall, 0.9);
  const auto exact = manifold_precision_recall(real.values, real.values);
  EXPECT_EQ(exact.precision, 1.0);
  EXPECT_EQ(exact.recall, 1.0);
  Matrix far = syn.values;
  for (auto& v : far.data()) v += 100.0;
  const auto shifted = manifold_precision_recall(far, real.values);
  EXPECT_EQ(shifted.precision, 0.0);
  EXPECT_EQ(shifted.recall, 0.0);
  EXPECT_THROW(manifold_precision_recall(syn.values.select_rows(std::vector<std::size_t>{0, 1}), real.values), ConfigError);
}

TEST(Dcr, SymmetryAndTieRules) {
  Rng rng(14);
  const std::size_t n = 2000;
  const Matrix train = oracle::random_matrix(n, 3, rng), hold = oracle::random_matrix(n, 3, rng);
  const Matrix syn = oracle::random_matrix(n, 3, rng);
  EXPECT_NEAR(dcr1_share(syn, train, hold), 0.5, 3.0 / std::sqrt(static_cast<double>(n)));

  const Matrix dup = train.select_rows(std::vector<std::size_t>{5});
  EXPECT_EQ(dcr1_share(dup, train, hold), 1.0);
  EXPECT_EQ(nndr(dup, train), 0.0);

  const Matrix a(1, 1, {-1.0}), b(1, 1, {1.0}), zero(3, 1);
  EXPECT_EQ(dcr1_share(zero, a, b), 0.0);
  EXPECT_THROW(dcr1_share(Matrix(0, 1), a, b), Error);
}

TEST(Dcr, UnequalSetsSubsampled) {
  Rng rng(15);
  const Matrix train = oracle::random_matrix(600, 2, rng), hold = oracle::random_matrix(300, 2, rng);
  const Matrix syn = oracle::random_matrix(500, 2, rng);
  const double s = dcr1_share(syn, train, hold, 3);
  EXPECT_EQ(s, dcr1_share(syn, train, hold, 3));
  EXPECT_NEAR(s, 0.5, 3.0 / std::sqrt(500.0));
}

TEST(Nndr, RangeAndHandValue) {
  const Matrix real(2, 1, {0.0, 4.0});
  EXPECT_DOUBLE_EQ(nndr(Matrix(1, 1, {1.0}), real), 1.0 / 3.0);
  Rng rng(16);
  const double v = nndr(oracle::random_matrix(100, 2, rng), oracle::random_matrix(100, 2, rng));
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, 1.0);
  EXPECT_THROW(nndr(Matrix(1, 1), Matrix(1, 1)), Error);
}

TEST(Wilcoxon, AllPositiveFive) {
  const std::vector<double> d{1, 2, 3, 4, 5};
  const auto w = wilcoxon_signed_rank(d);
  EXPECT_TRUE(w.exact);
  EXPECT_DOUBLE_EQ(w.p_greater, 1.0 / 32.0);
  EXPECT_DOUBLE_EQ(w.w_plus, 15.0);
  EXPECT_DOUBLE_EQ(w.p_two_sided, 2.0 / 32.0);
}

TEST(Wilcoxon, ExactMatchesSignEnumeration) {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 10);
    std::vector<double> d(n);
    // coarse grid forces ties and zeros
    for (auto& v : d) v = static_cast<double>(static_cast<int>(uniform_index(rng, 9)) - 3);
    bool any = false;
    for (double v : d) any = any || v != 0.0;
    if (!any) continue;
    EXPECT_NEAR(wilcoxon_signed_rank(d).p_greater, oracle::wilcoxon_enumerate(d), 1e-12);
  }
}

TEST(Wilcoxon, AllZeroAndLargeSample) {
  const auto z = wilcoxon_signed_rank(std::vector<double>(6, 0.0));
  EXPECT_EQ(z.p_greater, 1.0);
  EXPECT_EQ(z.n, 0u);
  std::vector<double> d(40);
  for (std::size_t i = 0; i < 40; ++i) d[i] = static_cast<double>(i) - 5.0;
  const auto w = wilcoxon_signed_rank(d);
  EXPECT_FALSE(w.exact);
  EXPECT_LT(w.p_greater, 1e-4);
}

TEST(Aggregate, ConstantDeltas) {
  const auto r = aggregate(std::vector<double>(7, 2.5), 500, 1);
  EXPECT_EQ(r.median, 2.5);
  EXPECT_EQ(r.mean, 2.5);
  EXPECT_EQ(r.ci_low, 2.5);
  EXPECT_EQ(r.ci_high, 2.5);
  EXPECT_EQ(r.wins_label(), "7/7");
}

TEST(Aggregate, CiContainsMedianAndWinsLabel) {
  Rng rng(18);
  std::vector<double> d(15);
  for (std::size_t i = 0; i < 15; ++i) d[i] = i < 11 ? 1.0 + uniform01(rng) * 10 : -uniform01(rng) * 5 - 0.1;
  const auto r = aggregate(d, 2000, 2);
  EXPECT_EQ(r.wins_label(), "11/15");
  EXPECT_LE(r.ci_low, r.median);
  EXPECT_GE(r.ci_high, r.median);
  const auto again = aggregate(d, 2000, 2);
  EXPECT_EQ(again.ci_low, r.ci_low);
  EXPECT_EQ(again.ci_high, r.ci_high);
  EXPECT_THROW(aggregate(std::vector<double>{}), Error);
}
