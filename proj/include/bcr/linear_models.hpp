#pragma once

#include <Eigen/Dense>

#include "bcr/data.hpp"

namespace bcr {

struct SoftmaxOptions {
  double lr = 0.05;
  double l2 = 1e-4;
  int max_epochs = 500;
  int patience = 20;  // 0 disables early stopping
  std::uint64_t seed = 0;
};

// Multinomial logistic regression on encoded rows. Weights are C x (D+1),
// the last column holding the bias.
class SoftmaxModel {
 public:
  SoftmaxModel() = default;
  SoftmaxModel(std::size_t classes, std::size_t dim) : weights_(classes, dim + 1) {}

  std::size_t classes() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols() - 1; }
  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }
  int epochs_run() const { return epochs_; }

  void proba(std::span<const double> x, std::span<double> out) const {
    if (x.size() != dim()) throw DimensionError("softmax: input width mismatch");
    const std::size_t C = classes(), D = dim();
    double mx = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) {
      auto w = weights_.row(c);
      double z = w[D];
      for (std::size_t j = 0; j < D; ++j) z += w[j] * x[j];
      out[c] = z;
      mx = std::max(mx, z);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += (out[c] = std::exp(out[c] - mx));
    for (std::size_t c = 0; c < C; ++c) out[c] /= s;
  }

  Matrix predict_proba(const Matrix& x) const {
    Matrix p(x.rows(), classes());
    for (std::size_t i = 0; i < x.rows(); ++i) proba(x.row(i), p.row(i));
    return p;
  }

  // Mean cross-entropy against target distributions.
  double loss(const Matrix& x, const Matrix& y) const {
    std::vector<double> p(classes());
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      proba(x.row(i), p);
      for (std::size_t c = 0; c < classes(); ++c)
        if (y(i, c) > 0.0) s -= y(i, c) * std::log(std::max(p[c], 1e-300));
    }
    return s / static_cast<double>(x.rows());
  }

  // Full-batch Adam on cross-entropy plus an L2 penalty on the weights. With
  // a validation set, the weights with the lowest validation loss are kept.
  void fit(const Matrix& x, const Matrix& y, const SoftmaxOptions& opt, const Matrix* val_x = nullptr,
           const Matrix* val_y = nullptr) {
    const std::size_t n = x.rows(), C = classes(), D = dim();
    if (n == 0) throw Error("softmax: empty training set");
    if (x.cols() != D || y.cols() != C || y.rows() != n) throw DimensionError("softmax: training shape mismatch");
    Rng rng(derive_seed(opt.seed, 0x50f7));
    for (auto& w : weights_.data()) w = 0.01 * standard_normal(rng);

    std::vector<double> m(weights_.data().size(), 0.0), v(m.size(), 0.0), g(m.size());
    std::vector<double> p(C);
    const double b1 = 0.9, b2 = 0.999;
    double best = INFINITY;
    Matrix best_w = weights_;
    int since = 0;
    epochs_ = 0;
    for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        proba(xi, p);
        for (std::size_t c = 0; c < C; ++c) {
          const double r = p[c] - y(i, c);
          double* gc = g.data() + c * (D + 1);
          for (std::size_t j = 0; j < D; ++j) gc[j] += r * xi[j];
          gc[D] += r;
        }
      }
      auto& w = weights_.data();
      const double c1 = 1.0 - std::pow(b1, epoch), c2 = 1.0 - std::pow(b2, epoch);
      for (std::size_t k = 0; k < w.size(); ++k) {
        double gk = g[k] / static_cast<double>(n);
        if ((k + 1) % (D + 1) != 0) gk += opt.l2 * w[k];
        m[k] = b1 * m[k] + (1 - b1) * gk;
        v[k] = b2 * v[k] + (1 - b2) * gk * gk;
        w[k] -= opt.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + 1e-8);
      }
      epochs_ = epoch;
      if (!all_finite(w)) throw NumericError("softmax: weights diverged");
      if (val_x && opt.patience > 0) {
        const double vl = loss(*val_x, *val_y);
        if (vl < best - 1e-12) {
          best = vl, best_w = weights_, since = 0;
        } else if (++since >= opt.patience) {
          break;
        }
      }
    }
    if (val_x && opt.patience > 0) weights_ = best_w;
  }

 private:
  Matrix weights_;
  int epochs_ = 0;
};

// One-hot or soft target distributions as an n x C matrix.
inline Matrix target_distribution(const Targets& t) {
  if (t.task == Task::regression) throw Error("target distribution: regression targets");
  if (t.has_soft()) return t.soft;
  Matrix y(t.labels.size(), t.n_classes);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(t.labels[i]);
    if (c >= t.n_classes) throw Error("target distribution: label out of range");
    y(i, c) = 1.0;
  }
  return y;
}

// Ridge regression with an unpenalised intercept, solved in closed form.
class RidgeModel {
 public:
  void fit(const Matrix& x, std::span<const double> y, double lambda = 1e-3) {
    const std::size_t n = x.rows(), D = x.cols();
    if (n == 0) throw Error("ridge: empty training set");
    if (y.size() != n) throw DimensionError("ridge: target length mismatch");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        x.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
    Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n));
    const Eigen::RowVectorXd mx = X.colwise().mean();
    const double my = Y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mx;
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += lambda * static_cast<double>(n);
    const Eigen::VectorXd w = A.ldlt().solve(Xc.transpose() * (Y.array() - my).matrix());
    weights_.assign(w.data(), w.data() + w.size());
    bias_ = my - mx.dot(w);
    if (!all_finite(weights_) || !std::isfinite(bias_)) throw NumericError("ridge: non-finite solution");
  }

  double predict(std::span<const double> x) const {
    if (x.size() != weights_.size()) throw DimensionError("ridge: input width mismatch");
    double s = bias_;
    for (std::size_t j = 0; j < x.size(); ++j) s += weights_[j] * x[j];
    return s;
  }

  std::vector<double> predict(const Matrix& x) const {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
    return out;
  }

  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

}  // namespace bcr
