#pragma once

#include "bcr/chamfer.hpp"

namespace bcr {

struct HdbscanResult {
  std::vector<int> labels;        // -1 for noise
  std::vector<double> core;       // core distance per point
  std::size_t clusters = 0;
};

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent, size;
  explicit UnionFind(std::size_t n) : parent(n), size(n, 1) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
};

struct Merge {
  std::size_t left, right;
  double dist;
  std::size_t size;
};

struct CondensedEdge {
  std::size_t parent;
  std::size_t child;  // point id (< n) or cluster id (>= n)
  double lambda;
  std::size_t size;
};

}  // namespace detail

// Density-based clustering over the rows of `x`: core distances from the
// `min_samples`-th neighbour (counting the point itself), minimum spanning
// tree of mutual-reachability distances by Prim's algorithm, condensed tree
// with `min_cluster_size`, flat clusters by excess of mass. The root is never
// returned as a cluster.
inline HdbscanResult hdbscan(const Matrix& x, std::size_t min_cluster_size, std::size_t min_samples) {
  const std::size_t n = x.rows();
  if (min_cluster_size < 2) min_cluster_size = 2;
  if (n < min_cluster_size) throw Error("hdbscan: fewer points than min_cluster_size");
  min_samples = std::clamp<std::size_t>(min_samples, 1, n);
  HdbscanResult res;
  res.labels.assign(n, -1);
  res.core.assign(n, 0.0);

  const PointSet ps(x);
  if (min_samples > 1)
    parallel_for(n, [&](std::size_t i) { res.core[i] = ps.knn(x.row(i), min_samples - 1, i).back().distance; });

  // Prim over the dense mutual-reachability graph
  std::vector<double> best(n, INFINITY);
  std::vector<std::size_t> from(n, 0);
  std::vector<bool> in_tree(n, false);
  std::vector<detail::Merge> edges;
  edges.reserve(n - 1);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    auto pc = x.row(cur);
    std::size_t next = SIZE_MAX;
    double next_d = INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = std::max({distance(pc, x.row(j)), res.core[cur], res.core[j]});
      if (d < best[j]) best[j] = d, from[j] = cur;
      if (best[j] < next_d) next_d = best[j], next = j;
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, next_d, 0});
    cur = next;
  }
  std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) { return a.dist < b.dist; });

  // single-linkage dendrogram; internal node n + k is the k-th merge
  std::vector<detail::Merge> tree;
  tree.reserve(n - 1);
  detail::UnionFind uf(2 * n - 1);
  std::vector<std::size_t> node_of(2 * n - 1);
  std::iota(node_of.begin(), node_of.end(), 0);
  for (const auto& e : edges) {
    const std::size_t a = uf.find(e.left), b = uf.find(e.right);
    const std::size_t id = n + tree.size();
    tree.push_back({node_of[a], node_of[b], e.dist, uf.size[a] + uf.size[b]});
    uf.parent[a] = uf.parent[b] = id;
    uf.size[id] = uf.size[a] + uf.size[b];
  }
  auto node_size = [&](std::size_t v) { return v < n ? std::size_t{1} : tree[v - n].size; };
  auto lambda_of = [](double d) { return 1.0 / std::max(d, 1e-12); };

  // condense: clusters are numbered n, n+1, ... with n the root
  std::vector<detail::CondensedEdge> condensed;
  std::vector<double> birth{0.0};
  std::vector<std::size_t> parent_cluster{n};
  auto new_cluster = [&](std::size_t parent, double lambda) {
    birth.push_back(lambda);
    parent_cluster.push_back(parent);
    return n + birth.size() - 1;
  };
  auto drop_points = [&](std::size_t v, std::size_t cluster, double lambda) {
    std::vector<std::size_t> stack{v};
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      if (u < n) condensed.push_back({cluster, u, lambda, 1});
      else stack.push_back(tree[u - n].left), stack.push_back(tree[u - n].right);
    }
  };
  std::vector<std::pair<std::size_t, std::size_t>> work{{2 * n - 2, n}};  // (dendrogram node, cluster)
  while (!work.empty()) {
    const auto [v, cluster] = work.back();
    work.pop_back();
    const auto& m = tree[v - n];
    const double lambda = lambda_of(m.dist);
    const bool big_l = node_size(m.left) >= min_cluster_size;
    const bool big_r = node_size(m.right) >= min_cluster_size;
    if (big_l && big_r) {
      for (std::size_t child : {m.left, m.right}) {
        const std::size_t c = new_cluster(cluster, lambda);
        condensed.push_back({cluster, c, lambda, node_size(child)});
        work.emplace_back(child, c);
      }
    } else {
      for (std::size_t child : {m.left, m.right}) {
        const bool big = child == m.left ? big_l : big_r;
        if (big) work.emplace_back(child, cluster);
        else drop_points(child, cluster, lambda);
      }
    }
  }
  const std::size_t n_clusters = birth.size();
  std::vector<double> point_lambda(n, 0.0);
  std::vector<std::size_t> point_cluster(n, 0);
  for (const auto& e : condensed)
    if (e.child < n) point_lambda[e.child] = e.lambda, point_cluster[e.child] = e.parent - n;

  std::vector<double> stability(n_clusters, 0.0);
  std::vector<std::vector<std::size_t>> children(n_clusters);
  for (const auto& e : condensed) {
    const std::size_t p = e.parent - n;
    if (e.child < n) {
      stability[p] += point_lambda[e.child] - birth[p];
    } else {
      stability[p] += (e.lambda - birth[p]) * static_cast<double>(e.size);
      children[p].push_back(e.child - n);
    }
  }

  // excess of mass, leaves first (children always carry larger ids)
  std::vector<bool> selected(n_clusters, false);
  std::vector<double> subtree(n_clusters, 0.0);
  for (std::size_t c = n_clusters; c-- > 1;) {
    double sum = 0.0;
    for (auto ch : children[c]) sum += subtree[ch];
    if (children[c].empty() || stability[c] >= sum) {
      selected[c] = true;
      subtree[c] = stability[c];
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        selected[u] = false;
        stack.insert(stack.end(), children[u].begin(), children[u].end());
      }
    } else {
      subtree[c] = sum;
    }
  }

  std::vector<int> label_of(n_clusters, -1);
  int next_label = 0;
  for (std::size_t c = 1; c < n_clusters; ++c)
    if (selected[c]) label_of[c] = next_label++;
  res.clusters = static_cast<std::size_t>(next_label);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = point_cluster[i]; c != 0; c = parent_cluster[c] - n) {
      if (selected[c]) {
        res.labels[i] = label_of[c];
        break;
      }
    }
  }
  return res;
}

}  // namespace bcr
