#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>

#include "bcr/core.hpp"

namespace bcr {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

namespace detail {

// (squared distance, index) ordering shared by brute force and the tree so
// both return identical answers, ties going to the lowest index.
struct Candidate {
  double d2 = INFINITY;
  std::size_t index = SIZE_MAX;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

}  // namespace detail

// Exact k-d tree over the rows of a matrix. Leaves hold up to 16 points;
// internal nodes split the widest dimension at the median.
class KdTree {
 public:
  explicit KdTree(const Matrix& points) : points_(&points), order_(points.rows()) {
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, order_.size());
  }

  Neighbor nearest(std::span<const double> q, std::size_t exclude = SIZE_MAX) const {
    detail::Candidate best;
    search1(0, q, exclude, best);
    return {best.index, std::sqrt(best.d2)};
  }

  // k nearest, sorted ascending by (distance, index).
  std::vector<Neighbor> knn(std::span<const double> q, std::size_t k, std::size_t exclude = SIZE_MAX) const {
    std::priority_queue<detail::Candidate> heap;
    searchk(0, q, k, exclude, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0; heap.pop()) out[i] = {heap.top().index, std::sqrt(heap.top().d2)};
    return out;
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;
    std::size_t dim = 0;
    double split = 0.0;
    std::size_t left = 0, right = 0;  // 0 means leaf
    std::vector<double> lo, hi;       // bounding box
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t d = points_->cols();
    const std::size_t id = nodes_.size();
    nodes_.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.assign(d, INFINITY);
    node.hi.assign(d, -INFINITY);
    for (std::size_t k = begin; k < end; ++k) {
      auto p = points_->row(order_[k]);
      for (std::size_t j = 0; j < d; ++j) node.lo[j] = std::min(node.lo[j], p[j]), node.hi[j] = std::max(node.hi[j], p[j]);
    }
    if (end - begin > kLeafSize) {
      std::size_t dim = 0;
      for (std::size_t j = 1; j < d; ++j)
        if (node.hi[j] - node.lo[j] > node.hi[dim] - node.lo[dim]) dim = j;
      if (node.hi[dim] > node.lo[dim]) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                           const double va = (*points_)(a, dim), vb = (*points_)(b, dim);
                           return va < vb || (va == vb && a < b);
                         });
        node.dim = dim;
        node.split = (*points_)(order_[mid], dim);
        node.left = build(begin, mid);
        node.right = build(mid, end);
      }
    }
    nodes_[id] = std::move(node);
    return id;
  }

  double box_d2(const Node& n, std::span<const double> q) const {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      double e = 0.0;
      if (q[j] < n.lo[j]) e = n.lo[j] - q[j];
      else if (q[j] > n.hi[j]) e = q[j] - n.hi[j];
      s += e * e;
    }
    return s;
  }

  void search1(std::size_t id, std::span<const double> q, std::size_t exclude, detail::Candidate& best) const {
    const Node& n = nodes_[id];
    // `>` rather than `>=`: an equal-distance box may still hold a lower index
    if (box_d2(n, q) > best.d2) return;
    if (n.left == 0) {
      for (std::size_t k = n.begin; k < n.end; ++k) {
        const std::size_t i = order_[k];
        if (i == exclude) continue;
        detail::Candidate c{squared_distance(q, points_->row(i)), i};
        if (c < best) best = c;
      }
      return;
    }
    const bool go_left = q[n.dim] < n.split;
    search1(go_left ? n.left : n.right, q, exclude, best);
    search1(go_left ? n.right : n.left, q, exclude, best);
  }

  void searchk(std::size_t id, std::span<const double> q, std::size_t k, std::size_t exclude,
               std::priority_queue<detail::Candidate>& heap) const {
    const Node& n = nodes_[id];
    if (heap.size() == k && box_d2(n, q) > heap.top().d2) return;
    if (n.left == 0) {
      for (std::size_t m = n.begin; m < n.end; ++m) {
        const std::size_t i = order_[m];
        if (i == exclude) continue;
        detail::Candidate c{squared_distance(q, points_->row(i)), i};
        if (heap.size() < k) heap.push(c);
        else if (c < heap.top()) heap.pop(), heap.push(c);
      }
      return;
    }
    const bool go_left = q[n.dim] < n.split;
    searchk(go_left ? n.left : n.right, q, k, exclude, heap);
    searchk(go_left ? n.right : n.left, q, k, exclude, heap);
  }

  static constexpr std::size_t kLeafSize = 16;
  const Matrix* points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

enum class IndexPolicy { automatic, brute_force, kd_tree };

// A finite point set in representation space with an optional exact index.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(Matrix points, IndexPolicy policy = IndexPolicy::automatic)
      : points_(std::make_shared<const Matrix>(std::move(points))) {
    if (points_->rows() == 0) throw Error("point set: must be non-empty");
    if (!all_finite(points_->data())) throw NumericError("point set: non-finite coordinate");
    const bool use_tree = policy == IndexPolicy::kd_tree ||
                          (policy == IndexPolicy::automatic && points_->cols() <= 16 && points_->rows() >= 256);
    if (use_tree) tree_ = std::make_shared<const KdTree>(*points_);
  }

  std::size_t size() const { return points_ ? points_->rows() : 0; }
  std::size_t dim() const { return points_ ? points_->cols() : 0; }
  const Matrix& points() const { return *points_; }
  bool indexed() const { return tree_ != nullptr; }

  Neighbor nearest(std::span<const double> q, std::size_t exclude = SIZE_MAX) const {
    check(q);
    if (tree_) return tree_->nearest(q, exclude);
    detail::Candidate best;
    for (std::size_t i = 0; i < points_->rows(); ++i) {
      if (i == exclude) continue;
      detail::Candidate c{squared_distance(q, points_->row(i)), i};
      if (c < best) best = c;
    }
    return {best.index, std::sqrt(best.d2)};
  }

  std::vector<Neighbor> knn(std::span<const double> q, std::size_t k, std::size_t exclude = SIZE_MAX) const {
    check(q);
    if (tree_) return tree_->knn(q, k, exclude);
    std::vector<detail::Candidate> all;
    all.reserve(points_->rows());
    for (std::size_t i = 0; i < points_->rows(); ++i)
      if (i != exclude) all.push_back({squared_distance(q, points_->row(i)), i});
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    std::vector<Neighbor> out;
    for (std::size_t m = 0; m < k; ++m) out.push_back({all[m].index, std::sqrt(all[m].d2)});
    return out;
  }

 private:
  void check(std::span<const double> q) const {
    if (!points_) throw Error("point set: empty");
    if (q.size() != points_->cols())
      throw DimensionError("point set: query dimension " + std::to_string(q.size()) + " != " +
                           std::to_string(points_->cols()));
  }

  std::shared_ptr<const Matrix> points_;
  std::shared_ptr<const KdTree> tree_;
};

inline Neighbor nearest(std::span<const double> query, const PointSet& target) { return target.nearest(query); }

struct ChamferBreakdown {
  double fidelity = 0.0;  // mean over A of the distance to the nearest B
  double coverage = 0.0;  // mean over B of the distance to the nearest A
  double total = 0.0;
};

namespace detail {

inline std::vector<Neighbor> nearest_all(const Matrix& queries, const PointSet& target) {
  std::vector<Neighbor> out(queries.rows());
  parallel_for(queries.rows(), [&](std::size_t i) { out[i] = target.nearest(queries.row(i)); });
  return out;
}

inline double mean_distance(const std::vector<Neighbor>& nn) {
  double s = 0.0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size());
}

}  // namespace detail

// Symmetric Chamfer functional between two point sets.
inline ChamferBreakdown chamfer(const PointSet& a, const PointSet& b) {
  if (a.size() == 0 || b.size() == 0) throw Error("chamfer: empty point set");
  if (a.dim() != b.dim()) throw DimensionError("chamfer: dimension mismatch");
  ChamferBreakdown out;
  out.fidelity = detail::mean_distance(detail::nearest_all(a.points(), b));
  out.coverage = detail::mean_distance(detail::nearest_all(b.points(), a));
  out.total = out.fidelity + out.coverage;
  return out;
}

// Supplies the d x D Jacobian of the representation map at point i of A.
using JacobianSupplier = std::function<Matrix(std::size_t)>;

// Subgradient of chamfer(A, B).total with respect to the pre-representation
// coordinates of A, with nearest-neighbour matches held fixed. Pairs at zero
// distance contribute nothing. Without a Jacobian supplier the map is the
// identity and the result has A's dimension.
inline Matrix chamfer_grad(const PointSet& a, const PointSet& b, const JacobianSupplier& jacobian = {},
                           std::size_t input_dim = 0) {
  if (a.size() == 0 || b.size() == 0) throw Error("chamfer_grad: empty point set");
  if (a.dim() != b.dim()) throw DimensionError("chamfer_grad: dimension mismatch");
  const std::size_t n = a.size();
  const std::size_t d = a.dim();
  const Matrix& pa = a.points();
  const Matrix& pb = b.points();

  Matrix g(n, d);  // gradient in representation space
  const double wa = 1.0 / static_cast<double>(n);
  const double wb = 1.0 / static_cast<double>(b.size());

  const auto fwd = detail::nearest_all(pa, b);
  for (std::size_t i = 0; i < n; ++i) {
    if (fwd[i].distance == 0.0) continue;
    auto gi = g.row(i);
    auto ai = pa.row(i);
    auto bj = pb.row(fwd[i].index);
    for (std::size_t k = 0; k < d; ++k) gi[k] += wa * (ai[k] - bj[k]) / fwd[i].distance;
  }
  const auto back = detail::nearest_all(pb, a);
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (back[j].distance == 0.0) continue;
    const std::size_t i = back[j].index;
    auto gi = g.row(i);
    auto ai = pa.row(i);
    auto bj = pb.row(j);
    for (std::size_t k = 0; k < d; ++k) gi[k] += wb * (ai[k] - bj[k]) / back[j].distance;
  }
  if (!jacobian) return g;

  if (input_dim == 0) throw DimensionError("chamfer_grad: input dimension required with a Jacobian");
  Matrix out(n, input_dim);
  parallel_for(n, [&](std::size_t i) {
    const Matrix jac = jacobian(i);
    if (jac.rows() != d || jac.cols() != input_dim) throw DimensionError("chamfer_grad: Jacobian shape mismatch");
    auto gi = g.row(i);
    auto oi = out.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      if (gi[k] == 0.0) continue;
      auto jr = jac.row(k);
      for (std::size_t c = 0; c < input_dim; ++c) oi[c] += gi[k] * jr[c];
    }
  });
  return out;
}

}  // namespace bcr
