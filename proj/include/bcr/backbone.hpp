#pragma once

#include <map>
#include <numbers>
#include <optional>
#include <set>

#include "bcr/chamfer.hpp"
#include "bcr/pool.hpp"
#include "bcr/representation.hpp"

namespace bcr {

// ---------------------------------------------------------------------------
// Variance-preserving noise schedule on integer steps t = 0..T, built from
// the cosine alpha-bar curve with per-step betas clipped at 0.999.

class NoiseSchedule {
 public:
  NoiseSchedule() : NoiseSchedule(200) {}
  explicit NoiseSchedule(int steps) : steps_(steps), alpha_bar_(static_cast<std::size_t>(steps) + 1, 1.0) {
    if (steps < 1) throw ConfigError("noise schedule: need at least one step");
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 1; t <= steps; ++t) {
      const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
      alpha_bar_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
    }
  }

  int steps() const { return steps_; }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return std::sqrt(alpha_bar(t)); }
  double sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
  double beta(int t) const { return 1.0 - alpha_bar(t) / alpha_bar(t - 1); }

 private:
  int steps_;
  std::vector<double> alpha_bar_;
};

// Frozen generative backbone as seen by the sampler: a schedule and a noise
// predictor. `classes` carries one label per row for class-conditional
// models and is empty otherwise.
class DiffusionBackbone {
 public:
  virtual ~DiffusionBackbone() = default;
  virtual std::size_t dim() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
  virtual Matrix predict_noise(const Matrix& x_t, std::span<const int> classes, int t) const = 0;
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian mixtures

struct Mixture {
  std::vector<double> weights;
  Matrix means;      // K x D
  Matrix variances;  // K x D

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double mx = -INFINITY;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

constexpr double kLog2Pi = 1.8378770664093454836;

// log pi_k + log N(x; a mu_k, a^2 v_k + s^2) for every component.
inline void component_log_densities(const Mixture& m, std::span<const double> x, double a, double s,
                                    std::span<double> out) {
  for (std::size_t k = 0; k < m.components(); ++k) {
    double acc = std::log(m.weights[k]);
    auto mu = m.means.row(k);
    auto v = m.variances.row(k);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double var = a * a * v[j] + s * s;
      const double r = x[j] - a * mu[j];
      acc -= 0.5 * (kLog2Pi + std::log(var) + r * r / var);
    }
    out[k] = acc;
  }
}

}  // namespace detail

// Log-density of the mixture pushed through x_t = a x_0 + s eps.
inline double mixture_log_density(const Mixture& m, std::span<const double> x, double a = 1.0, double s = 0.0) {
  std::vector<double> lp(m.components());
  detail::component_log_densities(m, x, a, s, lp);
  return detail::log_sum_exp(lp);
}

// Gradient of that log-density with respect to x.
inline std::vector<double> mixture_score(const Mixture& m, std::span<const double> x, double a, double s) {
  std::vector<double> lp(m.components());
  detail::component_log_densities(m, x, a, s, lp);
  const double lse = detail::log_sum_exp(lp);
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t k = 0; k < m.components(); ++k) {
    const double r = std::exp(lp[k] - lse);
    if (r == 0.0) continue;
    auto mu = m.means.row(k);
    auto v = m.variances.row(k);
    for (std::size_t j = 0; j < x.size(); ++j) g[j] -= r * (x[j] - a * mu[j]) / (a * a * v[j] + s * s);
  }
  return g;
}

struct EmOptions {
  std::size_t components = 3;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double tol = 1e-8;
  double var_floor = 1e-4;
};

struct EmReport {
  std::vector<double> log_likelihood;  // total log-likelihood before each M-step
  int reseeded = 0;
};

// EM for a diagonal-covariance mixture with k-means++ seeding.
inline Mixture fit_gmm_em(const Matrix& x, const EmOptions& opt, EmReport* report = nullptr) {
  const std::size_t n = x.rows(), d = x.cols();
  if (opt.components == 0) throw ConfigError("gmm: need at least one component");
  if (n < opt.components) throw Error("gmm: fewer rows than mixture components");
  const std::size_t K = opt.components;
  Rng rng(derive_seed(opt.seed, 0x3e3));

  std::vector<double> gmean(d, 0.0), gvar(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) gmean[j] += x(i, j);
  for (auto& v : gmean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) gvar[j] += (x(i, j) - gmean[j]) * (x(i, j) - gmean[j]);
  for (auto& v : gvar) v = std::max(v / static_cast<double>(n), opt.var_floor);

  Mixture m;
  m.weights.assign(K, 1.0 / static_cast<double>(K));
  m.means = Matrix(K, d);
  m.variances = Matrix(K, d);
  std::vector<double> d2(n, INFINITY);
  std::size_t pick = uniform_index(rng, n);
  for (std::size_t k = 0; k < K; ++k) {
    std::copy_n(x.row(pick).begin(), d, m.means.row(k).begin());
    std::copy(gvar.begin(), gvar.end(), m.variances.row(k).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (d2[i] = std::min(d2[i], squared_distance(x.row(i), x.row(pick))));
    if (k + 1 == K) break;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);
      continue;
    }
    double u = uniform01(rng) * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  Matrix resp(n, K);
  std::vector<double> lp(K);
  double prev = -INFINITY;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      detail::component_log_densities(m, x.row(i), 1.0, 0.0, lp);
      const double lse = detail::log_sum_exp(lp);
      ll += lse;
      for (std::size_t k = 0; k < K; ++k) resp(i, k) = std::exp(lp[k] - lse);
    }
    if (!std::isfinite(ll)) throw NumericError("gmm: non-finite log-likelihood");
    if (report) report->log_likelihood.push_back(ll);
    if (iter > 0 && ll - prev <= opt.tol * std::abs(ll)) break;
    prev = ll;

    for (std::size_t k = 0; k < K; ++k) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, k);
      auto mu = m.means.row(k);
      auto var = m.variances.row(k);
      if (nk < 1e-10) {
        // empty component: restart it on the row farthest from all means
        std::size_t far = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          double dmin = INFINITY;
          for (std::size_t c = 0; c < K; ++c) dmin = std::min(dmin, squared_distance(x.row(i), m.means.row(c)));
          if (dmin > best) best = dmin, far = i;
        }
        warn("gmm: component " + std::to_string(k) + " emptied; reseeded from the farthest row");
        std::copy_n(x.row(far).begin(), d, mu.begin());
        std::copy(gvar.begin(), gvar.end(), var.begin());
        m.weights[k] = 1.0 / static_cast<double>(n);
        if (report) ++report->reseeded;
        continue;
      }
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += resp(i, k) * x(i, j);
      for (auto& v : mu) v /= nk;
      std::fill(var.begin(), var.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) var[j] += resp(i, k) * (x(i, j) - mu[j]) * (x(i, j) - mu[j]);
      for (auto& v : var) v = std::max(v / nk, opt.var_floor);
      m.weights[k] = nk / static_cast<double>(n);
    }
    const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    for (auto& w : m.weights) w /= wsum;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Closed-form GMM diffusion backbone. Classification fits one mixture per
// class over the encoded features; regression fits a single mixture over
// [features, scaled target] so the target is generated jointly.

class GmmBackbone : public DiffusionBackbone {
 public:
  GmmBackbone() = default;
  GmmBackbone(std::vector<Mixture> mixtures, NoiseSchedule schedule, bool conditional, std::size_t feature_dim)
      : mixtures_(std::move(mixtures)), schedule_(std::move(schedule)), conditional_(conditional),
        feature_dim_(feature_dim) {
    if (mixtures_.empty()) throw Error("gmm backbone: no mixtures");
    for (const auto& m : mixtures_) {
      double s = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
      if (std::abs(s - 1.0) > 1e-9) throw Error("gmm backbone: weights do not sum to 1");
      for (double v : m.variances.data())
        if (!(v > 0.0)) throw Error("gmm backbone: non-positive variance");
      if (m.dim() != mixtures_[0].dim()) throw DimensionError("gmm backbone: mixture dimensions differ");
    }
  }

  std::size_t dim() const override { return mixtures_[0].dim(); }
  std::size_t feature_dim() const { return feature_dim_; }
  bool conditional() const { return conditional_; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  const std::vector<Mixture>& mixtures() const { return mixtures_; }

  const Mixture& mixture_for(int cls) const {
    if (!conditional_) return mixtures_[0];
    if (cls < 0 || static_cast<std::size_t>(cls) >= mixtures_.size()) throw Error("gmm backbone: class out of range");
    return mixtures_[static_cast<std::size_t>(cls)];
  }

  // eps_hat = -sigma(t) * grad log p_t(x_t)
  Matrix predict_noise(const Matrix& x_t, std::span<const int> classes, int t) const override {
    if (t < 0 || t > schedule_.steps()) throw Error("gmm backbone: t outside [0, T]");
    if (x_t.cols() != dim()) throw DimensionError("gmm backbone: state width mismatch");
    if (conditional_ && classes.size() != x_t.rows()) throw Error("gmm backbone: class labels required");
    const double a = schedule_.alpha(t), s = schedule_.sigma(t);
    Matrix out(x_t.rows(), x_t.cols());
    for (std::size_t i = 0; i < x_t.rows(); ++i) {
      auto xi = x_t.row(i);
      if (!all_finite(xi)) throw NumericError("gmm backbone: non-finite input");
      const auto g = mixture_score(mixture_for(conditional_ ? classes[i] : 0), xi, a, s);
      auto oi = out.row(i);
      for (std::size_t j = 0; j < g.size(); ++j) oi[j] = -s * g[j];
    }
    return out;
  }

 private:
  std::vector<Mixture> mixtures_;
  NoiseSchedule schedule_;
  bool conditional_ = false;
  std::size_t feature_dim_ = 0;
};

inline Matrix gmm_score(const GmmBackbone& b, const Matrix& x_t, std::span<const int> classes, int t) {
  return b.predict_noise(x_t, classes, t);
}

struct BackboneOptions {
  std::size_t components = 3;
  int steps = 200;
  int max_iter = 200;
  double tol = 1e-8;
  double var_floor = 1e-4;
  std::uint64_t seed = 0;
};

inline GmmBackbone fit_backbone(const EncodedMatrix& train, const BackboneOptions& opt) {
  const NoiseSchedule schedule(opt.steps);
  const std::size_t D = train.values.cols();
  EmOptions em{opt.components, opt.seed, opt.max_iter, opt.tol, opt.var_floor};
  std::vector<Mixture> mixtures;
  if (train.target.task == Task::regression) {
    Matrix joint(train.size(), D + 1);
    for (std::size_t i = 0; i < train.size(); ++i) {
      std::copy_n(train.values.row(i).begin(), D, joint.row(i).begin());
      joint(i, D) = train.target.values[i];
    }
    em.components = std::min(opt.components, joint.rows());
    mixtures.push_back(fit_gmm_em(joint, em));
    return GmmBackbone(std::move(mixtures), schedule, false, D);
  }
  for (std::size_t c = 0; c < train.target.n_classes; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.target.hard_label(i) == static_cast<int>(c)) rows.push_back(i);
    if (rows.empty()) throw Error("gmm backbone: class " + std::to_string(c) + " has no training rows");
    em.components = std::min(opt.components, rows.size());
    em.seed = derive_seed(opt.seed, c);
    mixtures.push_back(fit_gmm_em(train.values.select_rows(rows), em));
  }
  return GmmBackbone(std::move(mixtures), schedule, true, D);
}

// ---------------------------------------------------------------------------
// Guidance

enum class GammaFamily { constant, linear, cosine, sine };
enum class RefType { class_conditional, global };

inline const char* gamma_name(GammaFamily f) {
  switch (f) {
    case GammaFamily::constant: return "constant";
    case GammaFamily::linear: return "linear";
    case GammaFamily::cosine: return "cosine";
    case GammaFamily::sine: return "sine";
  }
  return "?";
}

// Guidance scale at time t, where t = T is pure noise and t = 0 the final
// sample.
inline double gamma_schedule(GammaFamily family, double t, double T, double gamma_min, double gamma_max) {
  if (gamma_min > gamma_max) throw ConfigError("gamma schedule: gamma_min > gamma_max");
  if (t < 0.0 || t > T) throw Error("gamma schedule: t outside [0, T]");
  const double span = gamma_max - gamma_min;
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * t / T));
  switch (family) {
    case GammaFamily::constant: return gamma_max;
    case GammaFamily::linear: return gamma_min + span * t / T;
    case GammaFamily::cosine: return gamma_min + span * c;
    case GammaFamily::sine: return gamma_max - span * c;
  }
  return gamma_max;
}

struct GuidanceConfig {
  bool enabled = false;
  RepMap rep;
  GammaFamily family = GammaFamily::cosine;
  double gamma_min = 1e-8;
  double gamma_max = 1.0;
  int guidance_steps = 10;           // t_g
  std::optional<double> ref_ratio;  // nullopt: no reference batching
  RefType ref_type = RefType::global;
  std::uint64_t seed = 0;

  void validate(int T) const {
    if (gamma_min < 0.0 || gamma_min > gamma_max) throw ConfigError("guidance: need 0 <= gamma_min <= gamma_max");
    if (!enabled) return;
    if (guidance_steps < 3 || guidance_steps > std::min(20, T))
      throw ConfigError("guidance: t_g must lie in [3, min(20, T)]");
    if (!ref_ratio) throw ConfigError("guidance: reference batching ratio 'none' is invalid with guidance enabled");
    if (!(*ref_ratio > 0.0 && *ref_ratio <= 1.0)) throw ConfigError("guidance: reference ratio must lie in (0, 1]");
  }
};

// t_g evenly spaced step indices over [0, T-1]; index s is the reverse step
// from t = T - s, so T-1 is the final, cleanest step. Positions are rounded
// up, which keeps both ends and yields every step when t_g = T.
inline std::vector<int> select_guidance_steps(int T, int t_g) {
  if (t_g < 3 || t_g > 20) throw ConfigError("guidance steps: t_g must lie in [3, 20]");
  if (t_g > T) throw ConfigError("guidance steps: t_g exceeds the step count");
  std::vector<int> out;
  const long span = T - 1, parts = t_g - 1;
  for (long i = 0; i < t_g; ++i) out.push_back(static_cast<int>((i * span + parts - 1) / parts));
  return out;
}

// Stage I: M * N_r standard-normal states. Class labels follow the real
// class frequencies (largest remainder), laid out in class blocks.
inline NoisePool oversample_noise(std::size_t M, std::size_t n_real, std::size_t dim, std::uint64_t seed,
                                  std::span<const double> class_freq = {}) {
  const std::size_t n = M * n_real;
  if (n == 0) throw ConfigError("oversample: M * N_r must be at least 1");
  NoisePool pool;
  pool.seed = seed;
  pool.state = Matrix(n, dim);
  Rng rng(derive_seed(seed, 0x57a6e1));
  for (auto& v : pool.state.data()) v = standard_normal(rng);
  if (!class_freq.empty()) {
    const auto counts = detail::largest_remainder(class_freq, n);
    for (std::size_t c = 0; c < counts.size(); ++c) pool.classes.insert(pool.classes.end(), counts[c], static_cast<int>(c));
  }
  return pool;
}

// Rows of the real set drawn for the guidance reference x_r: ceil(ratio *
// |source|) without replacement from the class pool or the whole set.
inline Matrix sample_reference_batch(const EncodedMatrix& real, const GuidanceConfig& cfg,
                                     std::optional<int> cls = std::nullopt) {
  if (!cfg.ref_ratio) throw ConfigError("reference batch: ratio 'none' is invalid with guidance enabled");
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < real.size(); ++i)
    if (!cls || real.target.hard_label(i) == *cls) source.push_back(i);
  if (source.empty()) throw Error("reference batch: empty class pool");
  const auto k = static_cast<std::size_t>(std::ceil(*cfg.ref_ratio * static_cast<double>(source.size()) - 1e-9));
  Rng rng(derive_seed(cfg.seed, 0x4ef, cls ? static_cast<std::uint64_t>(*cls) + 1 : 0));
  auto pick = sample_without_replacement(source.size(), std::max<std::size_t>(1, k), rng);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> rows;
  for (auto p : pick) rows.push_back(source[p]);
  return real.values.select_rows(rows);
}

struct DiffusionOptions {
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;  // trajectory noise
};

// Stage II: ancestral reverse diffusion. At the guidance steps the backbone's
// noise prediction is shifted along the Chamfer gradient against a fixed
// reference batch, taken in representation space and pulled back through the
// map's Jacobian; other steps use the plain prediction.
inline CandidatePool reverse_diffuse(const NoisePool& noise, const DiffusionBackbone& backbone,
                                     const GuidanceConfig& cfg, const EncodedMatrix& real,
                                     const DiffusionOptions& opt, std::size_t feature_dim) {
  const NoiseSchedule& sched = backbone.schedule();
  const int T = sched.steps();
  cfg.validate(T);
  if (noise.state.cols() != backbone.dim()) throw DimensionError("reverse diffusion: noise width != backbone width");
  if (feature_dim > backbone.dim()) throw DimensionError("reverse diffusion: feature width exceeds state width");
  const bool classification = !noise.classes.empty();
  const bool guided = cfg.enabled;

  std::vector<bool> guide_at(static_cast<std::size_t>(T), false);
  if (guided) {
    if (cfg.rep.input_dim() != feature_dim) throw DimensionError("reverse diffusion: rep map width mismatch");
    for (int s : select_guidance_steps(T, cfg.guidance_steps)) guide_at[static_cast<std::size_t>(s)] = true;
  }

  // batches: class-homogeneous when the reference is class-conditional
  const bool per_class = guided && classification && cfg.ref_type == RefType::class_conditional;
  std::vector<std::vector<std::size_t>> batches;
  std::vector<int> batch_class;
  {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<int> group_class;
    if (per_class) {
      const int nc = *std::max_element(noise.classes.begin(), noise.classes.end()) + 1;
      groups.resize(static_cast<std::size_t>(nc));
      for (std::size_t i = 0; i < noise.size(); ++i) groups[static_cast<std::size_t>(noise.classes[i])].push_back(i);
      for (int c = 0; c < nc; ++c) group_class.push_back(c);
    } else {
      groups.emplace_back(noise.size());
      std::iota(groups[0].begin(), groups[0].end(), 0);
      group_class.push_back(-1);
    }
    const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (std::size_t s = 0; s < groups[g].size(); s += bs) {
        batches.emplace_back(groups[g].begin() + static_cast<std::ptrdiff_t>(s),
                             groups[g].begin() + static_cast<std::ptrdiff_t>(std::min(groups[g].size(), s + bs)));
        batch_class.push_back(group_class[g]);
      }
  }

  // reference embeddings, computed once per generation
  std::map<int, PointSet> reference;
  if (guided) {
    for (int c : std::set<int>(batch_class.begin(), batch_class.end())) {
      const Matrix xr = sample_reference_batch(real, cfg, c < 0 ? std::nullopt : std::optional<int>(c));
      reference.emplace(c, PointSet(cfg.rep.map_batch(xr)));
    }
  }

  Matrix out(noise.size(), backbone.dim());
  parallel_for(batches.size(), [&](std::size_t b) {
    const auto& rows = batches[b];
    Matrix x = noise.state.select_rows(rows);
    std::vector<int> cls;
    if (classification)
      for (auto i : rows) cls.push_back(noise.classes[i]);
    Rng rng(derive_seed(opt.seed, 0xd1ff, b));

    for (int step = 0; step < T; ++step) {
      const int t = T - step;
      Matrix eps = backbone.predict_noise(x, cls, t);
      if (guide_at[static_cast<std::size_t>(step)]) {
        const double gamma = gamma_schedule(cfg.family, t, T, cfg.gamma_min, cfg.gamma_max);
        if (gamma != 0.0) {
          const Matrix feats = x.left_cols(feature_dim);
          const PointSet current(cfg.rep.map_batch(feats));
          JacobianSupplier jac;
          if (!cfg.rep.is_identity()) jac = [&](std::size_t i) { return cfg.rep.jacobian(feats.row(i)); };
          const Matrix grad = chamfer_grad(current, reference.at(batch_class[b]), jac, feature_dim);
          // shift the noise estimate so the update descends the Chamfer functional
          for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < feature_dim; ++j) eps(i, j) += gamma * grad(i, j);
        }
      }
      const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1);
      const double beta = 1.0 - ab / ab_prev;
      const double coef = beta / std::sqrt(1.0 - ab);
      const double scale = 1.0 / std::sqrt(1.0 - beta);
      const double post_sd = t > 1 ? std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta) : 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        auto ei = eps.row(i);
        for (std::size_t j = 0; j < xi.size(); ++j) {
          xi[j] = scale * (xi[j] - coef * ei[j]);
          if (post_sd > 0.0) xi[j] += post_sd * standard_normal(rng);
        }
      }
      if (!all_finite(x.data()))
        throw NumericError("reverse diffusion: non-finite state at step " + std::to_string(step) + " (t = " +
                           std::to_string(t) + ")");
    }
    for (std::size_t k = 0; k < rows.size(); ++k) std::copy(x.row(k).begin(), x.row(k).end(), out.row(rows[k]).begin());
  });

  CandidatePool pool;
  pool.seed = noise.seed;
  pool.guided = guided;
  pool.features = out.left_cols(feature_dim);
  pool.target.task = real.target.task;
  pool.target.n_classes = real.target.n_classes;
  if (classification) {
    pool.target.labels = noise.classes;
  } else {
    for (std::size_t i = 0; i < out.rows(); ++i) pool.target.values.push_back(out(i, feature_dim));
  }
  return pool;
}

}  // namespace bcr
