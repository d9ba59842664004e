#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"

using namespace bcr;

namespace {

std::vector<TpeObservation> random_history(const TpeSampler& tpe, std::size_t n, std::uint64_t seed) {
  std::vector<TpeObservation> h;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = tpe.suggest({}, rng);
    h.push_back({s, uniform01(rng)});
  }
  return h;
}

bool on_grid(double K) {
  const double steps = (K - 0.1) / 0.1;
  return std::abs(steps - std::round(steps)) < 1e-6;
}

}  // namespace

TEST(SearchSpace, SuggestionsStayInDomain) {
  const SearchSpace space;
  const TpeSampler tpe(space);
  const auto history = random_history(tpe, 40, 1);
  Rng rng(2);
  std::map<GuidanceMode, int> modes;
  for (int i = 0; i < 10000; ++i) {
    const auto& h = i % 2 ? history : std::vector<TpeObservation>{};
    const Stage2Params s = tpe.suggest(h, rng);
    ASSERT_TRUE(space.contains(s)) << "draw " << i;
    ASSERT_GE(s.K, 0.1);
    ASSERT_LE(s.K, 25.0);
    ASSERT_TRUE(on_grid(s.K)) << s.K;
    ++modes[s.guidance];
    if (!s.guided()) {
      ASSERT_FALSE(s.ref_ratio.has_value());
      continue;
    }
    ASSERT_GE(s.gamma_max, 0.1 - 1e-12);
    ASSERT_LE(s.gamma_max, 5.0 + 1e-12);
    ASSERT_GE(s.gamma_min, 1e-8 - 1e-20);
    ASSERT_LE(s.gamma_min, s.gamma_max - 0.1 + 1e-12);
    ASSERT_GE(s.t_g, 3);
    ASSERT_LE(s.t_g, 20);
    if (s.guidance == GuidanceMode::vae) {
      ASSERT_NE(std::find(space.latents.begin(), space.latents.end(), s.latent), space.latents.end());
    }
  }
  EXPECT_EQ(modes.size(), 3u);
}

TEST(SearchSpace, StartupDrawsCoverRange) {
  const TpeSampler tpe(SearchSpace{});
  Rng rng(3);
  double lo = INFINITY, hi = -INFINITY;
  for (int i = 0; i < 2000; ++i) {
    const double K = tpe.suggest({}, rng).K;
    lo = std::min(lo, K), hi = std::max(hi, K);
  }
  EXPECT_LT(lo, 1.0);
  EXPECT_GT(hi, 24.0);
}

TEST(SearchSpace, ValidateRejectsBadDomains) {
  SearchSpace s;
  s.t_g_lo = 2;
  EXPECT_THROW(TpeSampler{s}, ConfigError);
  s = {};
  s.guidance.clear();
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.ratios = {1.5};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Tpe, DominantKAttractsSuggestions) {
  SearchSpace space;
  space.guidance = {GuidanceMode::none};
  const TpeSampler tpe(space);
  Rng rng(4);
  std::vector<TpeObservation> h;
  for (int i = 0; i < 30; ++i) {
    Stage2Params s;
    s.K = i < 8 ? 20.0 : std::round((0.1 + uniform01(rng) * 24.9) * 10.0) / 10.0;
    h.push_back({s, i < 8 ? 1.0 : 0.1 * uniform01(rng)});
  }
  std::map<long, int> hist;
  for (int i = 0; i < 100; ++i) ++hist[std::lround(tpe.suggest(h, rng).K)];
  const auto mode = std::max_element(hist.begin(), hist.end(), [](auto& a, auto& b) { return a.second < b.second; });
  EXPECT_GE(mode->first, 15);
  EXPECT_LE(mode->first, 25);
}

TEST(Tpe, DeterministicPerSeed) {
  const TpeSampler tpe(SearchSpace{});
  const auto h = random_history(tpe, 20, 5);
  Rng a(6), b(6);
  for (int i = 0; i < 50; ++i) {
    const auto x = tpe.suggest(h, a), y = tpe.suggest(h, b);
    EXPECT_EQ(x.K, y.K);
    EXPECT_EQ(x.guidance, y.guidance);
    EXPECT_EQ(x.gamma_max, y.gamma_max);
  }
}

TEST(InnerGrid, RegressionEvaluatesFiveCombos) {
  const auto p = oracle::fixture_problem({.task = Task::regression, .rows = 500, .numeric = 3, .seed = 7});
  const GmmBackbone b = fit_backbone(p.train, {2, 50});
  GenerationSettings g;
  g.M = 3;
  const auto gen = generate(p, b, Stage2Params{}, g, 1);
  const auto r = inner_grid(gen.pool, p, 1.0, gen.rep, {.seed = 2});
  ASSERT_EQ(r.table.size(), 5u);
  for (const auto& e : r.table) EXPECT_FALSE(e.gkd);
  double best = -INFINITY;
  for (const auto& e : r.table) best = std::max(best, e.utility);
  EXPECT_EQ(r.utility, best);
}

TEST(InnerGrid, MatchesExhaustiveReevaluation) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 400, .numeric = 3, .seed = 8});
  const GmmBackbone b = fit_backbone(p.train, {2, 50});
  GenerationSettings g;
  g.M = 3;
  const auto gen = generate(p, b, Stage2Params{}, g, 1);
  const GridOptions opt{.batch_size = 20, .seed = 3};
  const auto r = inner_grid(gen.pool, p, 1.5, gen.rep, opt);
  ASSERT_EQ(r.table.size(), 10u);
  const CandidatePool distilled = relabel(gen.pool, train_teacher(p.train, {.seed = derive_seed(3, 0x6cd)}));
  std::size_t k = 0;
  double best = -INFINITY;
  SamplerKind best_kind = SamplerKind::chamfer;
  bool best_gkd = false;
  for (auto kind : kAllSamplers) {
    for (bool gkd : {false, true}) {
      const CandidatePool& src = gkd ? distilled : gen.pool;
      const SelectionSpec spec{kind, target_count(1.5, p.n_real()), 20, 10, derive_seed(3, 0x5e1)};
      const auto sel = select(src, p.train, spec, gen.rep);
      const double u = score_learner(train_downstream(src.subset(sel).encoded(), p.validation), p.validation).psi;
      EXPECT_EQ(r.table[k].sampler, kind);
      EXPECT_EQ(r.table[k].gkd, gkd);
      EXPECT_DOUBLE_EQ(r.table[k].utility, u) << sampler_name(kind) << gkd;
      if (u > best) best = u, best_kind = kind, best_gkd = gkd;
      ++k;
    }
  }
  EXPECT_EQ(r.utility, best);
  EXPECT_EQ(r.sampler, best_kind);
  EXPECT_EQ(r.gkd, best_gkd);
}

TEST(InnerGrid, ChamferWinsDominanceFixture) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 600, .numeric = 3, .seed = 9});
  CandidatePool pool;
  pool.features = p.train.values;
  pool.target = p.train.target;
  Rng rng(10);
  for (std::size_t i = 0; i < p.n_real(); ++i) {
    std::vector<double> junk(p.dim());
    for (auto& v : junk) v = 40.0 + 10.0 * standard_normal(rng);
    pool.features.append_row(junk);
    pool.target.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
  }
  const auto r = inner_grid(pool, p, 1.0, RepMap::identity(p.dim()), {.batch_size = 1, .seed = 4});
  EXPECT_EQ(r.sampler, SamplerKind::chamfer);
}

TEST(Optimize, SmokeAndDeterminism) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 400, .numeric = 3, .seed = 11});
  const GmmBackbone b = fit_backbone(p.train, {2, 50});
  SearchSpace space;
  space.K_max = 2.0;
  SearchOptions opt;
  opt.n_trials = 1;
  opt.tpe.n_start = 1;
  opt.generation.M = 3;
  opt.generation.vae_epochs = 20;
  opt.seed = 5;
  const auto one = optimize(p, b, space, opt);
  ASSERT_EQ(one.trials.size(), 1u);

  opt.n_trials = 4;
  opt.tpe.n_start = 2;
  std::vector<std::size_t> streamed;
  const auto a = optimize(p, b, space, opt, [&](const TrialRecord& t) { streamed.push_back(t.trial); });
  const auto c = optimize(p, b, space, opt);
  EXPECT_EQ(streamed, (std::vector<std::size_t>{0, 1, 2, 3}));
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(a.trials[t].objective, c.trials[t].objective);
    EXPECT_EQ(a.trials[t].params.K, c.trials[t].params.K);
    EXPECT_EQ(a.trials[t].sampler, c.trials[t].sampler);
    EXPECT_LE(a.trials[t].objective, a.best_trial().objective);
  }
}

TEST(Optimize, UnguidedSearchNeverTrainsRepresentation) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 300, .numeric = 3, .seed = 12});
  const GmmBackbone b = fit_backbone(p.train, {2, 50});
  SearchSpace space;
  space.K_max = 2.0;
  space.guidance = {GuidanceMode::none};
  SearchOptions opt;
  opt.n_trials = 3;
  opt.tpe.n_start = 3;
  opt.generation.M = 3;
  const auto r = optimize(p, b, space, opt);
  EXPECT_EQ(r.reps_trained, 0u);
  for (const auto& t : r.trials) EXPECT_TRUE(t.error.empty());
}

TEST(Optimize, RejectsBadOptions) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 300, .numeric = 3, .seed = 12});
  const GmmBackbone b = fit_backbone(p.train, {1, 20});
  SearchSpace space;
  SearchOptions opt;
  opt.generation.M = 20;  // K_max = 25 >= M
  EXPECT_THROW(optimize(p, b, space, opt), ConfigError);
  space.K_max = 5.0;
  opt.n_trials = 5;
  opt.tpe.n_start = 10;
  EXPECT_THROW(optimize(p, b, space, opt), ConfigError);
}

TEST(KSweep, TrendAndAblationRow) {
  const auto p = oracle::fixture_problem({.task = Task::binary, .rows = 600, .numeric = 3, .seed = 13});
  const GmmBackbone b = fit_backbone(p.train, {3, 50});
  SweepOptions opt;
  opt.seeds = {0, 1, 2};
  const auto rows = k_sweep(p, b, Stage2Params{}, opt);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_TRUE(rows.back().ablation);
  EXPECT_EQ(rows.back().K, 1.0);
  std::vector<double> K, psi;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_EQ(rows[i].psi.size(), 3u);
    K.push_back(rows[i].K);
    psi.push_back(rows[i].mean);
  }
  EXPECT_GE(spearman(K, psi), 0.0);
  opt.K = {50.0};
  EXPECT_THROW(k_sweep(p, b, Stage2Params{}, opt), ConfigError);
}

TEST(Spearman, HandValues) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 40}, z{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(x, y), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, z), -1.0);
  EXPECT_EQ(spearman(x, std::vector<double>{1, 1, 1, 1}), 0.0);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
}
