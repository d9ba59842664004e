#pragma once

#include <functional>

#include "bcr/pipeline.hpp"

namespace bcr {

// ---------------------------------------------------------------------------
// Stage III inner grid

struct GridEntry {
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  double utility = -INFINITY;
  std::string error;  // set when the combination failed
};

struct GridResult {
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  double utility = -INFINITY;
  std::vector<GridEntry> table;
  double seconds_select = 0.0;
  double seconds_gkd = 0.0;
};

struct GridOptions {
  std::vector<SamplerKind> samplers{kAllSamplers.begin(), kAllSamplers.end()};
  std::vector<bool> gkd{false, true};  // on is skipped for regression
  std::size_t batch_size = 0;
  std::size_t md_k = 10;
  std::uint64_t seed = 0;
  LearnerOptions learner{};
  TeacherOptions teacher{};
};

// Every (sampler, GKD) combination is scored by validation utility; the
// maximum wins, earlier combinations winning ties. Test rows are never used.
inline GridResult inner_grid(const CandidatePool& pool, const Problem& p, double K, const RepMap& rep,
                             const GridOptions& opt = {}) {
  const std::size_t count = target_count(K, p.n_real());
  const bool classification = is_classification(p.task());
  GridResult res;

  std::optional<CandidatePool> distilled;
  auto distilled_pool = [&]() -> const CandidatePool& {
    if (!distilled) {
      const auto t0 = std::chrono::steady_clock::now();
      TeacherOptions to = opt.teacher;
      to.seed = derive_seed(opt.seed, 0x6cd);
      distilled = relabel(pool, train_teacher(p.train, to));
      res.seconds_gkd += seconds_since(t0);
    }
    return *distilled;
  };

  for (SamplerKind kind : opt.samplers) {
    SelectionSpec spec{kind, count, opt.batch_size, opt.md_k, derive_seed(opt.seed, 0x5e1)};
    std::optional<std::vector<std::size_t>> plain_sel;
    for (bool gkd : opt.gkd) {
      if (gkd && !classification) continue;
      GridEntry e{kind, gkd, -INFINITY, {}};
      try {
        const CandidatePool& src = gkd ? distilled_pool() : pool;
        const auto t0 = std::chrono::steady_clock::now();
        // target-agnostic samplers pick the same rows with or without GKD
        std::vector<std::size_t> sel;
        if (plain_sel && kind != SamplerKind::stratified) sel = *plain_sel;
        else sel = select(src, p.train, spec, rep);
        if (!gkd) plain_sel = sel;
        res.seconds_select += seconds_since(t0);
        const CandidatePool syn = src.subset(sel);
        const Score s = score_learner(train_downstream(syn.encoded(), p.validation, opt.learner), p.validation);
        e.utility = utility(s.psi, p.task());
      } catch (const std::exception& ex) {
        e.error = ex.what();
        warn(std::string("inner grid: ") + sampler_name(kind) + (gkd ? "+gkd" : "") + " failed: " + ex.what());
      }
      if (e.utility > res.utility) {
        res.utility = e.utility;
        res.sampler = kind;
        res.gkd = gkd;
      }
      res.table.push_back(std::move(e));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Search space and TPE-lite

struct SearchSpace {
  double K_min = 0.1, K_max = 25.0, K_step = 0.1;
  std::vector<GuidanceMode> guidance{GuidanceMode::none, GuidanceMode::identity, GuidanceMode::vae};
  std::vector<GammaFamily> families{GammaFamily::constant, GammaFamily::linear, GammaFamily::cosine,
                                    GammaFamily::sine};
  double gamma_max_lo = 0.1, gamma_max_hi = 5.0;
  double gamma_min_lo = 1e-8, gamma_gap = 0.1;
  int t_g_lo = 3, t_g_hi = 20;
  std::vector<double> ratios{1.0, 0.5, 0.25, 0.125, 0.1};
  std::vector<std::size_t> latents{4, 8, 16, 32};
  std::vector<AnnealFamily> beta_families{AnnealFamily::constant, AnnealFamily::linear, AnnealFamily::cosine,
                                          AnnealFamily::sine, AnnealFamily::cyclical};
  std::optional<RefType> ref_type;  // fixed override; unset means by task

  void validate() const {
    if (!(K_min > 0.0 && K_min <= K_max)) throw ConfigError("search space: need 0 < K_min <= K_max");
    if (guidance.empty()) throw ConfigError("search space: no guidance modes");
    if (families.empty() || ratios.empty() || latents.empty() || beta_families.empty())
      throw ConfigError("search space: empty categorical domain");
    if (!(gamma_max_lo > 0.0 && gamma_max_lo <= gamma_max_hi)) throw ConfigError("search space: bad gamma_max range");
    if (t_g_lo < 3 || t_g_hi > 20 || t_g_lo > t_g_hi) throw ConfigError("search space: t_g must lie in [3, 20]");
    for (double r : ratios)
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("search space: reference ratio outside (0, 1]");
  }

  bool contains(const Stage2Params& s) const {
    const double steps = std::round((s.K - K_min) / K_step);
    const bool k_ok = s.K >= K_min - 1e-9 && s.K <= K_max + 1e-9 && std::abs(K_min + steps * K_step - s.K) < 1e-9;
    if (!k_ok || std::find(guidance.begin(), guidance.end(), s.guidance) == guidance.end()) return false;
    if (!s.guided()) return !s.ref_ratio;
    if (!s.ref_ratio || std::find(ratios.begin(), ratios.end(), *s.ref_ratio) == ratios.end()) return false;
    if (s.gamma_max < gamma_max_lo - 1e-12 || s.gamma_max > gamma_max_hi + 1e-12) return false;
    if (s.gamma_min < gamma_min_lo - 1e-20 || s.gamma_min > s.gamma_max - gamma_gap + 1e-12) return false;
    return s.t_g >= t_g_lo && s.t_g <= t_g_hi;
  }
};

struct TpeOptions {
  double gamma_q = 0.25;
  std::size_t n_start = 10;
  std::size_t n_candidates = 24;
};

struct TpeObservation {
  Stage2Params params;
  double objective = -INFINITY;
};

namespace detail {

template <typename T>
std::optional<std::size_t> index_of(const std::vector<T>& v, const T& x) {
  auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

class Parzen {
 public:
  Parzen(std::vector<double> pts, double lo, double hi) : pts_(std::move(pts)), lo_(lo), hi_(hi) {
    const double range = hi - lo;
    double sd = range;
    if (pts_.size() >= 2) {
      const double m = std::accumulate(pts_.begin(), pts_.end(), 0.0) / static_cast<double>(pts_.size());
      double s = 0.0;
      for (double x : pts_) s += (x - m) * (x - m);
      sd = std::sqrt(s / static_cast<double>(pts_.size() - 1));
    }
    h_ = 1.06 * sd * std::pow(static_cast<double>(std::max<std::size_t>(pts_.size(), 1)), -0.2);
    h_ = std::clamp(h_, range / 100.0, range);
  }

  // kernels plus one uniform prior component
  double density(double x) const {
    double s = 1.0 / (hi_ - lo_);
    for (double p : pts_) {
      const double z = (x - p) / h_;
      s += std::exp(-0.5 * z * z) / (h_ * 2.5066282746310002);
    }
    return s / static_cast<double>(pts_.size() + 1);
  }

  double sample(Rng& rng) const {
    const std::size_t k = uniform_index(rng, pts_.size() + 1);
    if (k == pts_.size()) return lo_ + uniform01(rng) * (hi_ - lo_);
    return std::clamp(pts_[k] + h_ * standard_normal(rng), lo_, hi_);
  }

 private:
  std::vector<double> pts_;
  double lo_, hi_, h_;
};

}  // namespace detail

// Univariate TPE: each dimension independently maximises the good/bad
// density ratio over candidates drawn from the good density. Conditional
// dimensions only see trials where they were active.
class TpeSampler {
 public:
  explicit TpeSampler(SearchSpace space, TpeOptions opt = {}) : space_(std::move(space)), opt_(opt) {
    space_.validate();
  }

  const SearchSpace& space() const { return space_; }
  const TpeOptions& options() const { return opt_; }

  Stage2Params suggest(const std::vector<TpeObservation>& history, Rng& rng) const {
    const bool startup = history.size() < opt_.n_start;
    std::vector<const Stage2Params*> good, bad;
    if (!startup) split(history, good, bad);
    const SearchSpace& sp = space_;
    Stage2Params s;

    auto num = [&](double lo, double hi, bool log, auto getter) {
      const double a = log ? std::log(lo) : lo, b = log ? std::log(hi) : hi;
      double v;
      if (startup || a == b) {
        v = a + uniform01(rng) * (b - a);
      } else {
        std::vector<double> g, w;
        for (auto* p : good)
          if (auto x = getter(*p)) g.push_back(log ? std::log(*x) : *x);
        for (auto* p : bad)
          if (auto x = getter(*p)) w.push_back(log ? std::log(*x) : *x);
        if (g.empty()) {
          v = a + uniform01(rng) * (b - a);
        } else {
          const detail::Parzen lg(g, a, b), lb(w, a, b);
          v = best_of([&] { return lg.sample(rng); }, [&](double x) { return lg.density(x) / lb.density(x); });
        }
      }
      return std::clamp(log ? std::exp(v) : v, lo, hi);
    };
    auto cat = [&](std::size_t size, auto getter) -> std::size_t {
      if (startup) return uniform_index(rng, size);
      std::vector<double> pg(size, 1.0), pb(size, 1.0);
      std::size_t ng = 0;
      for (auto* p : good)
        if (auto x = getter(*p)) pg[*x] += 1.0, ++ng;
      for (auto* p : bad)
        if (auto x = getter(*p)) pb[*x] += 1.0;
      if (ng == 0) return uniform_index(rng, size);
      const double sg = std::accumulate(pg.begin(), pg.end(), 0.0), sb = std::accumulate(pb.begin(), pb.end(), 0.0);
      std::discrete_distribution<std::size_t> dist(pg.begin(), pg.end());
      return static_cast<std::size_t>(best_of(
          [&] { return static_cast<double>(dist(rng)); },
          [&](double c) {
            const auto k = static_cast<std::size_t>(c);
            return (pg[k] / sg) / (pb[k] / sb);
          }));
    };

    const double k_raw = num(sp.K_min, sp.K_max, false, [](const Stage2Params& p) { return std::optional(p.K); });
    s.K = std::clamp(sp.K_min + std::round((k_raw - sp.K_min) / sp.K_step) * sp.K_step, sp.K_min, sp.K_max);
    s.K = std::round(s.K * 1e9) / 1e9;
    s.guidance = sp.guidance[cat(sp.guidance.size(), [&](const Stage2Params& p) { return detail::index_of(sp.guidance, p.guidance); })];
    s.ref_type = sp.ref_type;
    if (!s.guided()) return s;

    auto when_guided = [](auto f) {
      return [f](const Stage2Params& p) -> decltype(f(p)) {
        if (!p.guided()) return std::nullopt;
        return f(p);
      };
    };
    s.family = sp.families[cat(sp.families.size(), when_guided([&](const Stage2Params& p) { return detail::index_of(sp.families, p.family); }))];
    s.gamma_max = num(sp.gamma_max_lo, sp.gamma_max_hi, true, when_guided([](const Stage2Params& p) { return std::optional(p.gamma_max); }));
    const double gmin_hi = std::max(sp.gamma_max_hi - sp.gamma_gap, sp.gamma_min_lo);
    s.gamma_min = num(sp.gamma_min_lo, gmin_hi, true, when_guided([](const Stage2Params& p) { return std::optional(p.gamma_min); }));
    if (s.gamma_max - sp.gamma_gap < sp.gamma_min_lo) s.gamma_max = sp.gamma_min_lo + sp.gamma_gap;
    s.gamma_min = std::max(std::min(s.gamma_min, s.gamma_max - sp.gamma_gap), sp.gamma_min_lo);
    s.t_g = static_cast<int>(std::lround(num(sp.t_g_lo - 0.4999, sp.t_g_hi + 0.4999, false,
                                             when_guided([](const Stage2Params& p) { return std::optional<double>(p.t_g); }))));
    s.t_g = std::clamp(s.t_g, sp.t_g_lo, sp.t_g_hi);
    s.ref_ratio = sp.ratios[cat(sp.ratios.size(), when_guided([&](const Stage2Params& p) {
      return p.ref_ratio ? detail::index_of(sp.ratios, *p.ref_ratio) : std::nullopt;
    }))];
    if (s.guidance != GuidanceMode::vae) return s;
    auto when_vae = [](auto f) {
      return [f](const Stage2Params& p) -> decltype(f(p)) {
        if (p.guidance != GuidanceMode::vae) return std::nullopt;
        return f(p);
      };
    };
    s.latent = sp.latents[cat(sp.latents.size(), when_vae([&](const Stage2Params& p) { return detail::index_of(sp.latents, p.latent); }))];
    s.beta_family = sp.beta_families[cat(sp.beta_families.size(), when_vae([&](const Stage2Params& p) {
      return detail::index_of(sp.beta_families, p.beta_family);
    }))];
    return s;
  }

 private:
  // best-scoring of n_candidates draws; the first draw wins ties
  template <typename Draw, typename ScoreFn>
  double best_of(Draw draw, ScoreFn score) const {
    double best = 0.0, best_score = -INFINITY;
    for (std::size_t c = 0; c < opt_.n_candidates; ++c) {
      const double x = draw();
      const double sc = score(x);
      if (sc > best_score) best = x, best_score = sc;
    }
    return best;
  }

  void split(const std::vector<TpeObservation>& h, std::vector<const Stage2Params*>& good,
             std::vector<const Stage2Params*>& bad) const {
    std::vector<std::size_t> order(h.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double oa = std::isnan(h[a].objective) ? -INFINITY : h[a].objective;
      const double ob = std::isnan(h[b].objective) ? -INFINITY : h[b].objective;
      return oa > ob;
    });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(opt_.gamma_q * static_cast<double>(h.size()))));
    for (std::size_t k = 0; k < order.size(); ++k) (k < n_good ? good : bad).push_back(&h[order[k]].params);
  }

  SearchSpace space_;
  TpeOptions opt_;
};

// ---------------------------------------------------------------------------
// Outer search

struct StageTimes {
  double stage2 = 0.0;
  double stage3 = 0.0;
  double gkd = 0.0;
  double total() const { return stage2 + stage3 + gkd; }
};

struct TrialRecord {
  std::size_t trial = 0;
  Stage2Params params;
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  double objective = -INFINITY;
  std::uint64_t seed = 0;
  std::vector<GridEntry> grid;
  std::string error;
  StageTimes times;  // wall clock; kept out of the trial log
};

struct SearchOptions {
  std::size_t n_trials = 30;
  TpeOptions tpe{};
  std::uint64_t seed = 0;
  GenerationSettings generation{};
  GridOptions grid{};
};

struct SearchResult {
  std::vector<TrialRecord> trials;
  std::size_t best = 0;
  std::size_t reps_trained = 0;

  const TrialRecord& best_trial() const { return trials.at(best); }
};

// Sequential TPE over Stage II with the inner grid as objective. All trials
// share one noise pool seed so configurations are compared on the same
// noise; the unguided pool is generated once and reused.
inline SearchResult optimize(const Problem& p, const GmmBackbone& backbone, const SearchSpace& space,
                             const SearchOptions& opt,
                             const std::function<void(const TrialRecord&)>& on_trial = {}) {
  if (opt.n_trials == 0) throw ConfigError("search: need at least one trial");
  if (opt.n_trials < opt.tpe.n_start) throw ConfigError("search: trials must be >= startup trials");
  if (space.K_max >= static_cast<double>(opt.generation.M)) throw ConfigError("search: K must stay below M");
  const TpeSampler tpe(space, opt.tpe);
  const std::uint64_t pool_seed = derive_seed(opt.seed, 0x9001);
  RepCache reps;
  std::optional<Generation> unguided;
  std::vector<TpeObservation> history;
  SearchResult res;

  for (std::size_t t = 0; t < opt.n_trials; ++t) {
    Rng rng(derive_seed(opt.seed, 0x79e, t));
    TrialRecord rec;
    rec.trial = t;
    rec.seed = pool_seed;
    rec.params = tpe.suggest(history, rng);
    try {
      const Generation* gen;
      std::optional<Generation> guided;
      if (!rec.params.guided()) {
        if (!unguided) {
          unguided = generate(p, backbone, rec.params, opt.generation, pool_seed, &reps);
          rec.times.stage2 = unguided->seconds;
        }
        gen = &*unguided;
      } else {
        guided = generate(p, backbone, rec.params, opt.generation, pool_seed, &reps);
        rec.times.stage2 = guided->seconds;
        gen = &*guided;
      }
      GridOptions go = opt.grid;
      go.seed = derive_seed(opt.seed, 0x9e1d);
      const auto t0 = std::chrono::steady_clock::now();
      const GridResult g = inner_grid(gen->pool, p, rec.params.K, gen->rep, go);
      rec.times.gkd = g.seconds_gkd;
      rec.times.stage3 = seconds_since(t0) - g.seconds_gkd;
      rec.sampler = g.sampler;
      rec.gkd = g.gkd;
      rec.objective = g.utility;
      rec.grid = g.table;
    } catch (const NumericError& e) {
      rec.error = e.what();
      warn("search: trial " + std::to_string(t) + " failed: " + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      rec.error = e.what();
      warn("search: trial " + std::to_string(t) + " failed: " + e.what());
    }
    history.push_back({rec.params, rec.objective});
    if (on_trial) on_trial(rec);
    res.trials.push_back(std::move(rec));
  }
  for (std::size_t t = 1; t < res.trials.size(); ++t)
    if (res.trials[t].objective > res.trials[res.best].objective) res.best = t;
  res.reps_trained = reps.trained();
  return res;
}

// ---------------------------------------------------------------------------
// K sweep

struct SweepRow {
  double K = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> psi;  // one per seed
  bool ablation = false;
};

struct SweepOptions {
  std::vector<double> K{0.1, 0.5, 1, 3, 5, 10, 20};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  GenerationSettings generation{};
  SamplerKind sampler = SamplerKind::chamfer;
  bool gkd = false;
  std::size_t batch_size = 0;
  LearnerOptions learner{};
};

// TSTR test metric across K with one pool per seed reused for every K, plus
// the K = 1 row with selection disabled (M = 1, guidance as configured).
inline std::vector<SweepRow> k_sweep(const Problem& p, const GmmBackbone& backbone, const Stage2Params& base,
                                     const SweepOptions& opt) {
  for (double K : opt.K)
    if (!(K > 0.0) || K >= static_cast<double>(opt.generation.M))
      throw ConfigError("sweep: every K must satisfy 0 < K < M");
  if (opt.seeds.empty()) throw ConfigError("sweep: need at least one seed");
  if (opt.gkd && !is_classification(p.task())) throw ConfigError("sweep: GKD needs a classification task");
  std::vector<SweepRow> rows(opt.K.size() + 1);
  for (std::size_t k = 0; k < opt.K.size(); ++k) rows[k].K = opt.K[k];
  rows.back().K = 1.0;
  rows.back().ablation = true;

  RepCache reps;
  for (std::uint64_t seed : opt.seeds) {
    const Generation gen = generate(p, backbone, base, opt.generation, seed, &reps);
    CandidatePool pool = gen.pool;
    if (opt.gkd) pool = relabel(pool, train_teacher(p.train, {.seed = derive_seed(seed, 0x6cd)}));
    for (std::size_t k = 0; k < opt.K.size(); ++k) {
      SelectionSpec spec{opt.sampler, target_count(opt.K[k], p.n_real()), opt.batch_size, 10, derive_seed(seed, 0x5e1)};
      const auto sel = select(pool, p.train, spec, gen.rep);
      rows[k].psi.push_back(tstr(pool.subset(sel).encoded(), p.validation, p.test, opt.learner).psi);
    }
    const Generation one = generate(p, backbone, base, opt.generation, seed, &reps, 1);
    rows.back().psi.push_back(tstr(one.pool.encoded(), p.validation, p.test, opt.learner).psi);
  }
  for (auto& r : rows) {
    r.mean = mean(r.psi);
    r.sd = stdev(r.psi);
  }
  return rows;
}

// Spearman rank correlation with midranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two aligned series of length >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j + 1 < v.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace bcr
