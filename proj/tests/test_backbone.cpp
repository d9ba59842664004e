#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bcr;

namespace {

Mixture random_mixture(std::size_t K, std::size_t D, Rng& rng) {
  Mixture m;
  m.means = oracle::random_matrix(K, D, rng, 2.0);
  m.variances = Matrix(K, D);
  for (auto& v : m.variances.data()) v = 0.2 + uniform01(rng);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += m.weights.emplace_back(0.1 + uniform01(rng));
  for (auto& w : m.weights) w /= s;
  return m;
}

GmmBackbone single_gaussian(std::vector<double> mu, std::vector<double> var, int steps = 200) {
  Mixture m;
  m.weights = {1.0};
  m.means = Matrix(1, mu.size(), mu);
  m.variances = Matrix(1, var.size(), var);
  return GmmBackbone({m}, NoiseSchedule(steps), false, mu.size());
}

EncodedMatrix unlabeled(Matrix x) {
  EncodedMatrix e;
  e.values = std::move(x);
  e.target.task = Task::regression;
  e.target.values.assign(e.values.rows(), 0.0);
  return e;
}

}  // namespace

TEST(NoiseSchedule, VariancePreservingAndEndpoints) {
  const NoiseSchedule s(200);
  EXPECT_EQ(s.alpha(0), 1.0);
  EXPECT_EQ(s.sigma(0), 0.0);
  EXPECT_LT(s.alpha(200), 1e-3);
  EXPECT_NEAR(s.sigma(200), 1.0, 1e-6);
  for (int t = 0; t <= 200; ++t) {
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-12);
    if (t > 0) {
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
  }
  EXPECT_THROW(NoiseSchedule(0), ConfigError);
}

TEST(GmmEm, SingleComponentIsSampleMoments) {
  Rng rng(1);
  const Matrix x = oracle::random_matrix(300, 3, rng, 1.7);
  const Mixture m = fit_gmm_em(x, {1, 4, 50, 1e-12, 1e-6});
  for (std::size_t j = 0; j < 3; ++j) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 300; ++i) mu += x(i, j) / 300.0;
    for (std::size_t i = 0; i < 300; ++i) var += (x(i, j) - mu) * (x(i, j) - mu) / 300.0;
    EXPECT_NEAR(m.means(0, j), mu, 1e-12);
    EXPECT_NEAR(m.variances(0, j), var, 1e-12);
  }
  EXPECT_EQ(m.weights[0], 1.0);
}

TEST(GmmEm, RecoversTwoClusters) {
  const auto e = oracle::blobs(400, {{5.0, 5.0}, {-5.0, -5.0}}, 0.5, 2);
  EmReport rep;
  const Mixture m = fit_gmm_em(e.values, {2, 3, 200, 1e-10, 1e-4}, &rep);
  const std::size_t hi = m.means(0, 0) > 0 ? 0 : 1;
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(m.means(hi, j), 5.0, 0.2);
    EXPECT_NEAR(m.means(1 - hi, j), -5.0, 0.2);
  }
  EXPECT_NEAR(m.weights[0], 0.5, 0.01);
}

TEST(GmmEm, LogLikelihoodNonDecreasing) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = oracle::blobs(300, {{0, 0, 0}, {2, 0, 1}, {0, 3, -1}}, 1.0, seed);
    EmReport rep;
    fit_gmm_em(e.values, {4, seed, 100, 0.0, 1e-4}, &rep);
    ASSERT_GE(rep.log_likelihood.size(), 2u);
    for (std::size_t i = 1; i < rep.log_likelihood.size(); ++i)
      EXPECT_GE(rep.log_likelihood[i], rep.log_likelihood[i - 1] - 1e-10 * std::abs(rep.log_likelihood[i - 1]));
  }
}

TEST(GmmEm, DeterministicAndValidated) {
  Rng rng(3);
  const Matrix x = oracle::random_matrix(100, 2, rng);
  const Mixture a = fit_gmm_em(x, {3, 9}), b = fit_gmm_em(x, {3, 9});
  EXPECT_EQ(a.means.data(), b.means.data());
  EXPECT_EQ(a.variances.data(), b.variances.data());
  EXPECT_THROW(fit_gmm_em(x.select_rows(std::vector<std::size_t>{0, 1}), {3, 0}), Error);
  EXPECT_THROW(fit_gmm_em(x, {0, 0}), ConfigError);
}

TEST(GmmBackbone, RejectsInvalidMixtures) {
  Mixture m;
  m.weights = {0.5, 0.4};
  m.means = Matrix(2, 1);
  m.variances = Matrix(2, 1, {1.0, 1.0});
  EXPECT_THROW(GmmBackbone({m}, NoiseSchedule(10), false, 1), Error);
  m.weights = {0.5, 0.5};
  m.variances(1, 0) = 0.0;
  EXPECT_THROW(GmmBackbone({m}, NoiseSchedule(10), false, 1), Error);
}

TEST(GmmScore, StandardNormalClosedForm) {
  const GmmBackbone b = single_gaussian({0, 0, 0}, {1, 1, 1});
  Rng rng(4);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  for (int t : {1, 50, 120, 200}) {
    const Matrix e = gmm_score(b, x, {}, t);
    const double a = b.schedule().alpha(t), s = b.schedule().sigma(t);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(e(i, j), s * x(i, j) / (a * a + s * s), 1e-12);
  }
}

TEST(GmmScore, SymmetricMixtureAtOriginIsZero) {
  Mixture m;
  m.weights = {0.5, 0.5};
  m.means = Matrix(2, 2, {1.5, -0.5, -1.5, 0.5});
  m.variances = Matrix(2, 2, {0.3, 0.3, 0.3, 0.3});
  const GmmBackbone b({m}, NoiseSchedule(200), false, 2);
  for (int t : {1, 100, 200}) {
    const Matrix e = gmm_score(b, Matrix(1, 2), {}, t);
    EXPECT_NEAR(e(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(e(0, 1), 0.0, 1e-15);
  }
}

TEST(GmmScore, MatchesFiniteDifferencesOfLogMarginal) {
  Rng rng(5);
  const NoiseSchedule sched(200);
  for (int t = 1; t <= 200; t += 22) {
    const Mixture m = random_mixture(3, 4, rng);
    const GmmBackbone b({m}, sched, false, 4);
    const Matrix x = oracle::random_matrix(3, 4, rng, 1.5);
    const Matrix e = gmm_score(b, x, {}, t);
    const double a = sched.alpha(t), s = sched.sigma(t);
    for (std::size_t i = 0; i < 3; ++i) {
      auto f = [&](const std::vector<double>& xx) { return mixture_log_density(m, xx, a, s); };
      const auto num = oracle::numeric_gradient(f, {x.row(i).begin(), x.row(i).end()}, 1e-6);
      std::vector<double> score(4);
      for (std::size_t j = 0; j < 4; ++j) score[j] = -e(i, j) / s;
      EXPECT_LT(oracle::relative_error(score, num), 1e-5) << "t=" << t;
    }
  }
}

TEST(GmmScore, Errors) {
  const GmmBackbone b = single_gaussian({0}, {1});
  EXPECT_THROW(gmm_score(b, Matrix(1, 1), {}, 201), Error);
  EXPECT_THROW(gmm_score(b, Matrix(1, 2), {}, 5), DimensionError);
  EXPECT_THROW(gmm_score(b, Matrix(1, 1, {NAN}), {}, 5), NumericError);
}

TEST(FitBackbone, ClassConditionalAndJointRegression) {
  const auto cls = oracle::fixture_problem({.task = Task::multiclass, .rows = 600, .numeric = 3, .classes = 3, .seed = 11});
  const GmmBackbone b = fit_backbone(cls.train, {2, 50});
  EXPECT_TRUE(b.conditional());
  EXPECT_EQ(b.mixtures().size(), 3u);
  EXPECT_EQ(b.dim(), cls.dim());
  EXPECT_THROW(b.predict_noise(Matrix(2, b.dim()), {}, 5), Error);

  const auto reg = oracle::fixture_problem({.task = Task::regression, .rows = 400, .numeric = 3, .seed = 12});
  const GmmBackbone r = fit_backbone(reg.train, {2, 50});
  EXPECT_FALSE(r.conditional());
  EXPECT_EQ(r.dim(), reg.dim() + 1);
  EXPECT_EQ(r.feature_dim(), reg.dim());
}

TEST(GammaSchedule, PaperBoundaries) {
  const double lo = 0.1, hi = 2.0, T = 200;
  for (double t : {0.0, 77.0, 200.0}) EXPECT_EQ(gamma_schedule(GammaFamily::constant, t, T, lo, hi), hi);
  EXPECT_DOUBLE_EQ(gamma_schedule(GammaFamily::cosine, 0, T, lo, hi), hi);
  EXPECT_DOUBLE_EQ(gamma_schedule(GammaFamily::cosine, T, T, lo, hi), lo);
  EXPECT_DOUBLE_EQ(gamma_schedule(GammaFamily::linear, T, T, lo, hi), hi);
  EXPECT_DOUBLE_EQ(gamma_schedule(GammaFamily::linear, 0, T, lo, hi), lo);
  EXPECT_NEAR(gamma_schedule(GammaFamily::sine, 0, T, lo, hi), lo, 1e-15);
  EXPECT_DOUBLE_EQ(gamma_schedule(GammaFamily::sine, T, T, lo, hi), hi);
}

TEST(GammaSchedule, BoundedAndMonotone) {
  const double lo = 0.05, hi = 3.0, T = 100;
  for (GammaFamily f : {GammaFamily::constant, GammaFamily::linear, GammaFamily::cosine, GammaFamily::sine}) {
    double prev = gamma_schedule(f, 0, T, lo, hi);
    for (int t = 0; t <= 100; ++t) {
      const double g = gamma_schedule(f, t, T, lo, hi);
      EXPECT_GE(g, lo - 1e-15);
      EXPECT_LE(g, hi + 1e-15);
      if (f == GammaFamily::cosine) {
        EXPECT_LE(g, prev + 1e-15);
      } else {
        EXPECT_GE(g, prev - 1e-15);
      }
      prev = g;
    }
  }
  EXPECT_THROW(gamma_schedule(GammaFamily::linear, 1, T, 2.0, 1.0), ConfigError);
  EXPECT_THROW(gamma_schedule(GammaFamily::linear, 101, T, lo, hi), Error);
}

TEST(GuidanceSteps, EvenSpacingIncludesFinalStep) {
  EXPECT_EQ(select_guidance_steps(100, 5), (std::vector<int>{0, 25, 50, 75, 99}));
  const auto all = select_guidance_steps(12, 12);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
  for (int tg = 3; tg <= 20; ++tg) {
    const auto s = select_guidance_steps(200, tg);
    EXPECT_EQ(s.size(), static_cast<std::size_t>(tg));
    EXPECT_EQ(s.back(), 199);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  }
  EXPECT_THROW(select_guidance_steps(100, 2), ConfigError);
  EXPECT_THROW(select_guidance_steps(100, 21), ConfigError);
  EXPECT_THROW(select_guidance_steps(5, 6), ConfigError);
}

TEST(Oversample, CountsAndDeterminism) {
  const NoisePool a = oversample_noise(50, 100, 3, 7);
  EXPECT_EQ(a.size(), 5000u);
  EXPECT_TRUE(a.classes.empty());
  EXPECT_EQ(oversample_noise(50, 100, 3, 7).state.data(), a.state.data());
  EXPECT_NE(oversample_noise(50, 100, 3, 8).state.data(), a.state.data());
  double mean = 0.0, sq = 0.0;
  for (double v : a.state.data()) mean += v, sq += v * v;
  mean /= 15000.0;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sq / 15000.0, 1.0, 0.05);
  EXPECT_THROW(oversample_noise(0, 100, 3, 7), ConfigError);
}

TEST(Oversample, ClassCountsFollowFrequencies) {
  const std::vector<double> freq{0.5, 0.3, 0.2};
  const NoisePool p = oversample_noise(7, 13, 2, 1, freq);
  std::vector<std::size_t> counts(3, 0);
  for (int c : p.classes) ++counts[static_cast<std::size_t>(c)];
  EXPECT_EQ(counts[0] + counts[1] + counts[2], 91u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_LE(std::abs(static_cast<double>(counts[c]) - 91 * freq[c]), 1.0);
}

TEST(ReferenceBatch, SizesAndClassMembership) {
  auto real = oracle::blobs(300, {{0, 0}, {3, 3}, {6, 0}}, 0.5, 3);
  GuidanceConfig cfg;
  cfg.ref_ratio = 1.0;
  EXPECT_EQ(sample_reference_batch(real, cfg).data(), real.values.data());
  cfg.ref_ratio = 0.25;
  cfg.seed = 4;
  const Matrix r = sample_reference_batch(real, cfg, 1);
  EXPECT_EQ(r.rows(), 25u);
  for (std::size_t i = 0; i < r.rows(); ++i) {
    bool found = false;
    for (std::size_t j = 1; j < 300; j += 3) found = found || std::equal(r.row(i).begin(), r.row(i).end(), real.values.row(j).begin());
    EXPECT_TRUE(found);
  }
  EXPECT_EQ(sample_reference_batch(real, cfg, 1).data(), r.data());
  cfg.ref_ratio = 0.1;
  EXPECT_EQ(sample_reference_batch(real, cfg).rows(), 30u);
  EXPECT_THROW(sample_reference_batch(real, cfg, 5), Error);
  cfg.ref_ratio.reset();
  EXPECT_THROW(sample_reference_batch(real, cfg), ConfigError);
}

TEST(GuidanceConfig, Validation) {
  GuidanceConfig cfg;
  cfg.enabled = true;
  cfg.ref_ratio = 0.5;
  EXPECT_NO_THROW(cfg.validate(200));
  cfg.guidance_steps = 2;
  EXPECT_THROW(cfg.validate(200), ConfigError);
  cfg.guidance_steps = 10;
  cfg.ref_ratio.reset();
  EXPECT_THROW(cfg.validate(200), ConfigError);
  cfg.ref_ratio = 0.5;
  cfg.gamma_min = 2.0;
  EXPECT_THROW(cfg.validate(200), ConfigError);
}

TEST(ReverseDiffuse, UnguidedEqualsZeroGamma) {
  const auto real = unlabeled(Matrix(20, 2, std::vector<double>(40, 0.3)));
  const GmmBackbone b = single_gaussian({1, -1}, {0.5, 2.0}, 50);
  const NoisePool noise = oversample_noise(10, 20, 2, 1);
  GuidanceConfig off;
  off.rep = RepMap::identity(2);
  GuidanceConfig zero = off;
  zero.enabled = true;
  zero.family = GammaFamily::constant;
  zero.gamma_min = 0.0;
  zero.gamma_max = 0.0;
  zero.ref_ratio = 1.0;
  const auto a = reverse_diffuse(noise, b, off, real, {64, 3}, 2);
  const auto z = reverse_diffuse(noise, b, zero, real, {64, 3}, 2);
  EXPECT_EQ(a.features.data(), z.features.data());
}

TEST(ReverseDiffuse, UnguidedMatchesBackboneMoments) {
  const std::vector<double> mu{2.0, -1.0, 0.5}, var{0.5, 2.0, 1.0};
  const GmmBackbone b = single_gaussian(mu, var);
  const auto real = unlabeled(Matrix(100, 3));
  GuidanceConfig off;
  off.rep = RepMap::identity(3);
  const auto pool = reverse_diffuse(oversample_noise(50, 100, 3, 2), b, off, real, {256, 5}, 3);
  ASSERT_EQ(pool.size(), 5000u);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 5000; ++i) m += pool.features(i, j) / 5000.0;
    for (std::size_t i = 0; i < 5000; ++i) v += (pool.features(i, j) - m) * (pool.features(i, j) - m) / 4999.0;
    EXPECT_LT(std::abs(m - mu[j]), 0.05 * std::abs(mu[j])) << j;
    EXPECT_LT(std::abs(v - var[j]), 0.05 * var[j]) << j;
  }
}

TEST(ReverseDiffuse, ThreadCountInvariant) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 300, .numeric = 3, .seed = 5});
  const GmmBackbone b = fit_backbone(p.train, {2, 60});
  GuidanceConfig cfg;
  cfg.enabled = true;
  cfg.rep = RepMap::identity(p.dim());
  cfg.ref_ratio = 0.5;
  cfg.ref_type = RefType::class_conditional;
  const NoisePool noise = oversample_noise(3, p.n_real(), b.dim(), 1, class_frequencies(p.train.target));
  set_num_threads(1);
  const auto one = reverse_diffuse(noise, b, cfg, p.train, {64, 9}, p.dim());
  set_num_threads(4);
  const auto four = reverse_diffuse(noise, b, cfg, p.train, {64, 9}, p.dim());
  set_num_threads(1);
  EXPECT_EQ(one.features.data(), four.features.data());
  EXPECT_EQ(one.target.labels, noise.classes);
}

TEST(ReverseDiffuse, GuidanceLowersChamferToReference) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 400, .numeric = 3, .seed = 21});
  const GmmBackbone b = fit_backbone(p.train, {1, 100});
  int wins = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    GuidanceConfig cfg;
    cfg.rep = RepMap::identity(p.dim());
    cfg.ref_ratio = 1.0;
    cfg.ref_type = RefType::global;
    cfg.family = GammaFamily::constant;
    cfg.gamma_max = 1.0;
    cfg.guidance_steps = 10;
    const NoisePool noise = oversample_noise(2, p.n_real(), b.dim(), rep, class_frequencies(p.train.target));
    const auto plain = reverse_diffuse(noise, b, cfg, p.train, {256, rep}, p.dim());
    cfg.enabled = true;
    const auto guided = reverse_diffuse(noise, b, cfg, p.train, {256, rep}, p.dim());
    const PointSet ref(p.train.values);
    wins += chamfer(PointSet(guided.features), ref).total < chamfer(PointSet(plain.features), ref).total;
  }
  EXPECT_GE(wins, 8);
}

TEST(ReverseDiffuse, Errors) {
  const GmmBackbone b = single_gaussian({0, 0}, {1, 1}, 20);
  const auto real = unlabeled(Matrix(5, 2));
  GuidanceConfig off;
  off.rep = RepMap::identity(2);
  EXPECT_THROW(reverse_diffuse(oversample_noise(1, 5, 3, 0), b, off, real, {}, 2), DimensionError);
  GuidanceConfig on = off;
  on.enabled = true;
  on.ref_ratio = 1.0;
  on.rep = RepMap::identity(3);
  EXPECT_THROW(reverse_diffuse(oversample_noise(1, 5, 2, 0), b, on, real, {}, 2), DimensionError);
  on.rep = RepMap::identity(2);
  on.family = GammaFamily::constant;
  on.gamma_max = 1e300;
  EXPECT_THROW(reverse_diffuse(oversample_noise(1, 5, 2, 0), b, on, real, {}, 2), NumericError);
}
