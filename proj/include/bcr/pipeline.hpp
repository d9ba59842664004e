#pragma once

#include <chrono>

#include "bcr/backbone.hpp"
#include "bcr/eval.hpp"
#include "bcr/gkd.hpp"
#include "bcr/samplers.hpp"

namespace bcr {

// Encoded splits of one dataset. `train` doubles as the real reference set.
struct Problem {
  Encoder encoder;
  EncodedMatrix train, validation, test;

  Task task() const { return train.target.task; }
  std::size_t n_real() const { return train.size(); }
  std::size_t dim() const { return train.values.cols(); }
};

inline Problem make_problem(const SplitSet& s) {
  Problem p;
  p.encoder = Encoder::fit(s.train);
  p.train = p.encoder.encode(s.train);
  p.validation = p.encoder.encode(s.validation);
  p.test = p.encoder.encode(s.test);
  return p;
}

enum class GuidanceMode { none, identity, vae };

inline const char* guidance_name(GuidanceMode g) {
  switch (g) {
    case GuidanceMode::none: return "none";
    case GuidanceMode::identity: return "identity";
    case GuidanceMode::vae: return "vae";
  }
  return "?";
}

inline std::string ratio_name(std::optional<double> r) {
  if (!r) return "none";
  if (*r == 1.0) return "1";
  return "1/" + std::to_string(static_cast<int>(std::lround(1.0 / *r)));
}

// Stage II knobs plus the final cardinality multiplier.
struct Stage2Params {
  double K = 1.0;
  GuidanceMode guidance = GuidanceMode::none;
  GammaFamily family = GammaFamily::cosine;
  double gamma_min = 1e-8;
  double gamma_max = 1.0;
  int t_g = 10;
  std::optional<double> ref_ratio;  // present iff guidance is enabled
  std::optional<RefType> ref_type;  // unset: class-conditional for classification, global for regression
  std::size_t latent = 8;           // vae only
  AnnealFamily beta_family = AnnealFamily::linear;

  bool guided() const { return guidance != GuidanceMode::none; }
};

inline RefType effective_ref_type(const Stage2Params& p, Task task) {
  if (p.ref_type) {
    if (*p.ref_type == RefType::class_conditional && task == Task::regression)
      throw ConfigError("guidance: class-conditional reference needs a classification task");
    return *p.ref_type;
  }
  return task == Task::regression ? RefType::global : RefType::class_conditional;
}

struct GenerationSettings {
  std::size_t M = 50;
  std::size_t batch_size = 256;
  int vae_epochs = 500;
  double vae_lr = 1e-3;
  double beta_min = 0.0;
  double beta_max = 1.0;
  int beta_cycle = 50;
};

// Trained representation maps keyed by (latent, schedule family); shared
// across trials of one search.
class RepCache {
 public:
  RepMap get(const Problem& p, const Stage2Params& s, const GenerationSettings& g, std::uint64_t seed) {
    if (s.guidance != GuidanceMode::vae) return RepMap::identity(p.dim());
    const auto key = std::make_pair(s.latent, static_cast<int>(s.beta_family));
    auto it = maps_.find(key);
    if (it != maps_.end()) return it->second;
    VaeTrainOptions opt;
    opt.latent = s.latent;
    opt.schedule = {s.beta_family, g.beta_min, g.beta_max, g.vae_epochs, g.beta_cycle};
    opt.lr = g.vae_lr;
    opt.seed = derive_seed(seed, 0x7ae, s.latent);
    ++trained_;
    return maps_.emplace(key, RepMap::vae(vae_train(p.train, p.encoder.layout(), opt))).first->second;
  }
  std::size_t trained() const { return trained_; }

 private:
  std::map<std::pair<std::size_t, int>, RepMap> maps_;
  std::size_t trained_ = 0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Generation {
  CandidatePool pool;
  RepMap rep;  // representation used by guidance and by the samplers
  double seconds = 0.0;
};

// Stages I and II: M * N_r noise rows, denoised with or without Chamfer
// guidance. `seed` fixes both the noise pool and the trajectories.
inline Generation generate(const Problem& p, const GmmBackbone& backbone, const Stage2Params& s,
                           const GenerationSettings& g, std::uint64_t seed, RepCache* cache = nullptr,
                           std::optional<std::size_t> M_override = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t M = M_override.value_or(g.M);
  Generation out;
  RepCache local;
  out.rep = (cache ? cache : &local)->get(p, s, g, seed);

  GuidanceConfig cfg;
  cfg.enabled = s.guided();
  cfg.rep = out.rep;
  cfg.family = s.family;
  cfg.gamma_min = s.gamma_min;
  cfg.gamma_max = s.gamma_max;
  cfg.guidance_steps = s.t_g;
  cfg.ref_ratio = s.ref_ratio;
  cfg.ref_type = effective_ref_type(s, p.task());
  cfg.seed = derive_seed(seed, 0x4ef);

  std::vector<double> freq;
  if (is_classification(p.task())) freq = class_frequencies(p.train.target);
  const NoisePool noise = oversample_noise(M, p.n_real(), backbone.dim(), derive_seed(seed, 0x1), freq);
  out.pool = reverse_diffuse(noise, backbone, cfg, p.train, {g.batch_size, derive_seed(seed, 0x2)}, p.dim());
  out.pool.embeddings = out.rep.map_batch(out.pool.features);
  out.seconds = seconds_since(t0);
  return out;
}

inline std::size_t target_count(double K, std::size_t n_real) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(K * static_cast<double>(n_real))));
}

}  // namespace bcr
