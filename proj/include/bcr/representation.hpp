#pragma once

#include <numbers>
#include <variant>

#include "bcr/data.hpp"
#include "bcr/io.hpp"

namespace bcr {

// ---------------------------------------------------------------------------
// KL annealing

enum class AnnealFamily { constant, linear, cosine, sine, cyclical };

inline const char* anneal_name(AnnealFamily f) {
  switch (f) {
    case AnnealFamily::constant: return "constant";
    case AnnealFamily::linear: return "linear";
    case AnnealFamily::cosine: return "cosine";
    case AnnealFamily::sine: return "sine";
    case AnnealFamily::cyclical: return "cyclical";
  }
  return "?";
}

struct AnnealSchedule {
  AnnealFamily family = AnnealFamily::linear;
  double beta_min = 0.0;
  double beta_max = 1.0;
  int epochs = 500;  // T_VAE
  int cycle = 50;    // T_cyc, cyclical only
};

inline double beta_schedule(const AnnealSchedule& s, double t) {
  if (s.beta_min < 0.0 || s.beta_min > s.beta_max) throw ConfigError("beta schedule: need 0 <= beta_min <= beta_max");
  if (s.epochs < 1 || s.cycle < 1) throw ConfigError("beta schedule: epochs and cycle must be >= 1");
  if (t < 0.0 || t > s.epochs) throw Error("beta schedule: t outside [0, T_VAE]");
  const double T = s.epochs;
  const double span = s.beta_max - s.beta_min;
  switch (s.family) {
    case AnnealFamily::constant: return s.beta_max;
    case AnnealFamily::linear: return s.beta_max * std::min(1.0, t / T);
    case AnnealFamily::cosine: return s.beta_min + 0.5 * span * (1.0 + std::cos(std::numbers::pi * t / T));
    case AnnealFamily::sine: return s.beta_max - 0.5 * span * (1.0 + std::cos(std::numbers::pi * t / T));
    case AnnealFamily::cyclical: return s.beta_max * std::fmod(t, s.cycle) / s.cycle;
  }
  return s.beta_max;
}

// ---------------------------------------------------------------------------
// beta-VAE with a single tanh hidden layer on each side. Parameters live in
// one flat vector; the accessors below carve it into named blocks.

struct VaeParams {
  Layout layout;
  std::size_t hidden = 0;
  std::size_t latent = 0;
  std::vector<double> theta;

  std::size_t input() const { return layout.width; }

  // block offsets
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return w1() + hidden * input(); }
  std::size_t wmu() const { return b1() + hidden; }
  std::size_t bmu() const { return wmu() + latent * hidden; }
  std::size_t wlv() const { return bmu() + latent; }
  std::size_t blv() const { return wlv() + latent * hidden; }
  std::size_t v1() const { return blv() + latent; }
  std::size_t c1() const { return v1() + hidden * latent; }
  std::size_t vo() const { return c1() + hidden; }
  std::size_t co() const { return vo() + input() * hidden; }
  std::size_t count() const { return co() + input(); }

  static VaeParams init(const Layout& layout, std::size_t latent, std::uint64_t seed, std::size_t hidden = 0) {
    VaeParams p;
    p.layout = layout;
    p.latent = latent;
    p.hidden = hidden ? hidden : std::max<std::size_t>(32, 2 * layout.width);
    p.theta.assign(p.count(), 0.0);
    Rng rng(derive_seed(seed, 0x7a3e));
    auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t k = 0; k < n; ++k) p.theta[off + k] = sd * standard_normal(rng);
    };
    fill(p.w1(), p.hidden * p.input(), p.input());
    fill(p.wmu(), p.latent * p.hidden, p.hidden);
    fill(p.wlv(), p.latent * p.hidden, p.hidden);
    for (std::size_t k = 0; k < p.latent * p.hidden; ++k) p.theta[p.wlv() + k] *= 0.1;
    fill(p.v1(), p.hidden * p.latent, p.latent);
    fill(p.vo(), p.input() * p.hidden, p.hidden);
    return p;
  }
};

struct VaeLoss {
  double rec = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

namespace detail {

// y = W x + b with W stored row-major (out x in) at theta[w].
inline void affine(const std::vector<double>& theta, std::size_t w, std::size_t b, std::span<const double> x,
                   std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    double s = theta[b + o];
    const double* row = theta.data() + w + o * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// dx += W^T dy ; dW += dy x^T ; db += dy
inline void affine_back(const std::vector<double>& theta, std::size_t w, std::size_t b, std::span<const double> x,
                        std::span<const double> dy, std::span<double> dx, std::vector<double>* grad) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const double* row = theta.data() + w + o * in;
    if (!dx.empty())
      for (std::size_t i = 0; i < in; ++i) dx[i] += row[i] * g;
    if (grad) {
      double* grow = grad->data() + w + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += g * x[i];
      (*grad)[b + o] += g;
    }
  }
}

}  // namespace detail

// Loss of one encoded row. `noise` is the reparameterisation draw (empty
// means z = mu). When `grad` is non-null the parameter gradient is added to it.
inline VaeLoss vae_loss(std::span<const double> x, const VaeParams& p, double beta,
                        std::span<const double> noise = {}, std::vector<double>* grad = nullptr) {
  if (x.size() != p.input()) throw DimensionError("vae: input width mismatch");
  const auto& th = p.theta;
  const std::size_t H = p.hidden, L = p.latent, D = p.input();

  std::vector<double> a1(H), e(H), mu(L), lv(L), z(L), a2(H), u(H), o(D);
  detail::affine(th, p.w1(), p.b1(), x, a1);
  for (std::size_t k = 0; k < H; ++k) e[k] = std::tanh(a1[k]);
  detail::affine(th, p.wmu(), p.bmu(), e, mu);
  detail::affine(th, p.wlv(), p.blv(), e, lv);
  for (std::size_t k = 0; k < L; ++k) z[k] = mu[k] + (noise.empty() ? 0.0 : std::exp(0.5 * lv[k]) * noise[k]);
  detail::affine(th, p.v1(), p.c1(), z, a2);
  for (std::size_t k = 0; k < H; ++k) u[k] = std::tanh(a2[k]);
  detail::affine(th, p.vo(), p.co(), u, o);

  VaeLoss loss;
  std::vector<double> dout(D, 0.0);
  const auto& num = p.layout.numeric;
  if (!num.empty()) {
    const double w = 1.0 / static_cast<double>(num.size());
    for (auto j : num) {
      const double r = o[j] - x[j];
      loss.rec += w * r * r;
      dout[j] = 2.0 * w * r;
    }
  }
  const auto& groups = p.layout.groups;
  if (!groups.empty()) {
    const double w = 1.0 / static_cast<double>(groups.size());
    for (auto [off, width] : groups) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < width; ++k) mx = std::max(mx, o[off + k]);
      double z_sum = 0.0;
      for (std::size_t k = 0; k < width; ++k) z_sum += std::exp(o[off + k] - mx);
      const double lse = mx + std::log(z_sum);
      double mass = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        loss.rec -= w * x[off + k] * (o[off + k] - lse);
        mass += x[off + k];
      }
      for (std::size_t k = 0; k < width; ++k) dout[off + k] = w * (mass * std::exp(o[off + k] - lse) - x[off + k]);
    }
  }
  for (std::size_t k = 0; k < L; ++k) loss.kl += 0.5 * (std::exp(lv[k]) + mu[k] * mu[k] - 1.0 - lv[k]);
  loss.total = loss.rec + beta * loss.kl;
  if (!std::isfinite(loss.total)) throw NumericError("vae: non-finite loss in forward pass");
  if (!grad) return loss;

  std::vector<double> du(H, 0.0), dz(L, 0.0), de(H, 0.0), dmu(L), dlv(L), dx;
  detail::affine_back(th, p.vo(), p.co(), u, dout, du, grad);
  for (std::size_t k = 0; k < H; ++k) du[k] *= 1.0 - u[k] * u[k];
  detail::affine_back(th, p.v1(), p.c1(), z, du, dz, grad);
  for (std::size_t k = 0; k < L; ++k) {
    const double sd = std::exp(0.5 * lv[k]);
    dmu[k] = dz[k] + beta * mu[k];
    dlv[k] = (noise.empty() ? 0.0 : dz[k] * noise[k] * 0.5 * sd) + beta * 0.5 * (std::exp(lv[k]) - 1.0);
  }
  detail::affine_back(th, p.wmu(), p.bmu(), e, dmu, de, grad);
  detail::affine_back(th, p.wlv(), p.blv(), e, dlv, de, grad);
  for (std::size_t k = 0; k < H; ++k) de[k] *= 1.0 - e[k] * e[k];
  detail::affine_back(th, p.w1(), p.b1(), x, de, dx, grad);
  return loss;
}

// Posterior mean mu(x).
inline std::vector<double> vae_encode(const VaeParams& p, std::span<const double> x) {
  if (x.size() != p.input()) throw DimensionError("vae: input width mismatch");
  std::vector<double> a1(p.hidden), mu(p.latent);
  detail::affine(p.theta, p.w1(), p.b1(), x, a1);
  for (auto& v : a1) v = std::tanh(v);
  detail::affine(p.theta, p.wmu(), p.bmu(), a1, mu);
  return mu;
}

// d mu / d x  =  Wmu diag(1 - tanh^2) W1   (latent x input)
inline Matrix vae_encoder_jacobian(const VaeParams& p, std::span<const double> x) {
  if (x.size() != p.input()) throw DimensionError("vae: input width mismatch");
  const std::size_t H = p.hidden, L = p.latent, D = p.input();
  std::vector<double> a1(H);
  detail::affine(p.theta, p.w1(), p.b1(), x, a1);
  std::vector<double> gate(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double t = std::tanh(a1[k]);
    gate[k] = 1.0 - t * t;
  }
  Matrix jac(L, D);
  for (std::size_t l = 0; l < L; ++l) {
    auto out = jac.row(l);
    for (std::size_t k = 0; k < H; ++k) {
      const double c = p.theta[p.wmu() + l * H + k] * gate[k];
      if (c == 0.0) continue;
      const double* w1row = p.theta.data() + p.w1() + k * D;
      for (std::size_t j = 0; j < D; ++j) out[j] += c * w1row[j];
    }
  }
  return jac;
}

struct VaeTrainOptions {
  std::size_t latent = 8;
  AnnealSchedule schedule{};
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t hidden = 0;  // 0: max(32, 2 * input width)
  std::uint64_t seed = 0;
};

struct VaeTrainReport {
  std::vector<double> total;  // mean loss per epoch
  std::vector<double> rec;
};

// Mini-batch gradient descent with momentum on the annealed ELBO. The
// reparameterised noise is drawn here only; inference uses mu(x).
inline VaeParams vae_train(const EncodedMatrix& train, const Layout& layout, const VaeTrainOptions& opt,
                           VaeTrainReport* report = nullptr) {
  if (train.size() == 0) throw Error("vae_train: empty training set");
  if (train.values.cols() != layout.width) throw DimensionError("vae_train: layout width mismatch");
  if (opt.latent == 0) throw ConfigError("vae_train: latent dimension must be positive");
  VaeParams p = VaeParams::init(layout, opt.latent, opt.seed, opt.hidden);
  std::vector<double> velocity(p.count(), 0.0), grad(p.count());
  Rng rng(derive_seed(opt.seed, 0x7a3f));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> eps(opt.latent);
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);

  for (int epoch = 0; epoch < opt.schedule.epochs; ++epoch) {
    const double beta = beta_schedule(opt.schedule, epoch);
    shuffle(order, rng);
    double sum_total = 0.0, sum_rec = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        for (auto& v : eps) v = standard_normal(rng);
        const auto l = vae_loss(train.values.row(order[k]), p, beta, eps, &grad);
        sum_total += l.total;
        sum_rec += l.rec;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = 0; k < p.count(); ++k) {
        velocity[k] = opt.momentum * velocity[k] - opt.lr * grad[k] * scale;
        p.theta[k] += velocity[k];
      }
    }
    const double n = static_cast<double>(order.size());
    if (!std::isfinite(sum_total) || !all_finite(p.theta))
      throw NumericError("vae_train: diverged at epoch " + std::to_string(epoch));
    if (report) {
      report->total.push_back(sum_total / n);
      report->rec.push_back(sum_rec / n);
    }
  }
  return p;
}

// BCRV file: one row holding [D, hidden, latent, n_numeric, n_groups,
// numeric slots..., (offset, width) pairs..., theta...].
inline void save_vae(const std::string& path, const VaeParams& p) {
  std::vector<double> row{static_cast<double>(p.input()), static_cast<double>(p.hidden),
                          static_cast<double>(p.latent), static_cast<double>(p.layout.numeric.size()),
                          static_cast<double>(p.layout.groups.size())};
  for (auto j : p.layout.numeric) row.push_back(static_cast<double>(j));
  for (auto [o, w] : p.layout.groups) row.push_back(static_cast<double>(o)), row.push_back(static_cast<double>(w));
  row.insert(row.end(), p.theta.begin(), p.theta.end());
  const std::size_t n = row.size();
  binfmt::save(path, Matrix(1, n, std::move(row)), binfmt::kVaeMagic);
}

inline VaeParams load_vae(const std::string& path) {
  const Matrix m = binfmt::load(path, binfmt::kVaeMagic);
  const auto& v = m.data();
  if (v.size() < 5) throw IoError("vae: truncated parameter file");
  VaeParams p;
  std::size_t k = 0;
  auto next = [&] {
    if (k >= v.size()) throw IoError("vae: truncated parameter file");
    return static_cast<std::size_t>(v[k++]);
  };
  p.layout.width = next();
  p.hidden = next();
  p.latent = next();
  const std::size_t nn = next(), ng = next();
  for (std::size_t i = 0; i < nn; ++i) p.layout.numeric.push_back(next());
  for (std::size_t i = 0; i < ng; ++i) {
    const std::size_t o = next();
    p.layout.groups.emplace_back(o, next());
  }
  if (v.size() - k != p.count()) throw IoError("vae: parameter count mismatch");
  p.theta.assign(v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return p;
}

// ---------------------------------------------------------------------------
// Representation map: identity on encoded rows, or a VAE posterior mean.

struct IdentityMap {
  std::size_t dim = 0;
};

class RepMap {
 public:
  RepMap() = default;
  static RepMap identity(std::size_t dim) { return RepMap(IdentityMap{dim}); }
  static RepMap vae(VaeParams p) {
    return RepMap(std::make_shared<const VaeParams>(std::move(p)));
  }

  bool is_identity() const { return std::holds_alternative<IdentityMap>(v_); }
  const VaeParams& vae_params() const { return *std::get<std::shared_ptr<const VaeParams>>(v_); }

  std::size_t input_dim() const {
    return is_identity() ? std::get<IdentityMap>(v_).dim : vae_params().input();
  }
  std::size_t output_dim() const {
    return is_identity() ? std::get<IdentityMap>(v_).dim : vae_params().latent;
  }

  std::vector<double> map(std::span<const double> x) const {
    if (x.size() != input_dim()) throw DimensionError("rep map: input width mismatch");
    if (is_identity()) return {x.begin(), x.end()};
    return vae_encode(vae_params(), x);
  }

  Matrix map_batch(const Matrix& x) const {
    if (x.cols() != input_dim()) throw DimensionError("rep map: input width mismatch");
    if (is_identity()) return x;
    Matrix out(x.rows(), output_dim());
    parallel_for(x.rows(), [&](std::size_t i) {
      const auto z = vae_encode(vae_params(), x.row(i));
      std::copy(z.begin(), z.end(), out.row(i).begin());
    });
    return out;
  }

  Matrix jacobian(std::span<const double> x) const {
    if (x.size() != input_dim()) throw DimensionError("rep map: input width mismatch");
    if (!is_identity()) return vae_encoder_jacobian(vae_params(), x);
    Matrix eye(x.size(), x.size());
    for (std::size_t k = 0; k < x.size(); ++k) eye(k, k) = 1.0;
    return eye;
  }

 private:
  using Variant = std::variant<IdentityMap, std::shared_ptr<const VaeParams>>;
  explicit RepMap(Variant v) : v_(std::move(v)) {}
  Variant v_{IdentityMap{}};
};

}  // namespace bcr
