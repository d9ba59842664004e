#pragma once

#include "bcr/hdbscan.hpp"
#include "bcr/pool.hpp"
#include "bcr/representation.hpp"

namespace bcr {

// Listed in grid order; ties in the inner grid resolve to the earlier kind.
enum class SamplerKind { chamfer, stratified, iboss, hdbscan, md };

inline constexpr std::array<SamplerKind, 5> kAllSamplers{SamplerKind::chamfer, SamplerKind::stratified,
                                                         SamplerKind::iboss, SamplerKind::hdbscan, SamplerKind::md};

inline const char* sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::chamfer: return "chamfer";
    case SamplerKind::stratified: return "stratified";
    case SamplerKind::iboss: return "iboss";
    case SamplerKind::hdbscan: return "hdbscan";
    case SamplerKind::md: return "md";
  }
  return "?";
}

inline SamplerKind parse_sampler(const std::string& s) {
  for (auto k : kAllSamplers)
    if (s == sampler_name(k)) return k;
  throw ConfigError("unknown sampler '" + s + "'");
}

struct SelectionSpec {
  SamplerKind kind = SamplerKind::chamfer;
  std::size_t target_count = 0;
  std::size_t batch_size = 0;  // chamfer and hdbscan; 0 means min(N_r, 512)
  std::size_t k = 10;          // md neighbours
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_target(const CandidatePool& pool, const SelectionSpec& spec) {
  if (spec.target_count == 0) throw ConfigError("sampler: target count must be positive");
  if (spec.target_count > pool.size())
    throw ConfigError("sampler: target count " + std::to_string(spec.target_count) + " exceeds pool size " +
                      std::to_string(pool.size()));
}

inline std::size_t batch_size_for(const SelectionSpec& spec, std::size_t n_real) {
  return spec.batch_size > 0 ? spec.batch_size : std::max<std::size_t>(1, std::min<std::size_t>(n_real, 512));
}

}  // namespace detail

inline Matrix pool_embeddings(const CandidatePool& pool, const RepMap& rep) {
  if (pool.embeddings.rows() == pool.size() && pool.embeddings.cols() == rep.output_dim()) return pool.embeddings;
  return rep.map_batch(pool.features);
}

// Consecutive batches of a seeded permutation of the pool; the last may be
// short.
inline std::vector<std::vector<std::size_t>> chamfer_batches(std::size_t n, std::size_t b, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xba7c));
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += b)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + b)));
  return out;
}

// Batches ranked ascending by their Chamfer value against the real set,
// accumulated until the budget is met. The last batch taken keeps its rows
// closest to the real set.
inline std::vector<std::size_t> chamfer_sampler(const CandidatePool& pool, const EncodedMatrix& real,
                                                const SelectionSpec& spec, const RepMap& rep) {
  detail::check_target(pool, spec);
  const Matrix emb = pool_embeddings(pool, rep);
  const PointSet ref(rep.map_batch(real.values));
  const auto batches = chamfer_batches(pool.size(), detail::batch_size_for(spec, real.size()), spec.seed);
  std::vector<double> score(batches.size());
  parallel_for(batches.size(), [&](std::size_t k) {
    score[k] = chamfer(PointSet(emb.select_rows(batches[k])), ref).total;
  });
  std::vector<std::size_t> rank(batches.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });

  std::vector<std::size_t> out;
  for (std::size_t k : rank) {
    const std::size_t need = spec.target_count - out.size();
    if (need == 0) break;
    const auto& rows = batches[k];
    if (rows.size() <= need) {
      out.insert(out.end(), rows.begin(), rows.end());
      continue;
    }
    std::vector<std::pair<double, std::size_t>> fid;
    for (auto i : rows) fid.emplace_back(ref.nearest(emb.row(i)).distance, i);
    std::sort(fid.begin(), fid.end());
    for (std::size_t m = 0; m < need; ++m) out.push_back(fid[m].second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Strata are classes, or ten equal-frequency bins of the real target for
// regression. Counts follow real stratum frequencies.
inline std::vector<std::size_t> stratified_sampler(const CandidatePool& pool, const EncodedMatrix& real,
                                                   const SelectionSpec& spec) {
  detail::check_target(pool, spec);
  if (real.size() == 0) throw Error("stratified: empty real set");
  std::vector<std::size_t> pool_stratum(pool.size()), real_stratum(real.size());
  std::size_t n_strata;
  if (pool.target.task == Task::regression) {
    std::vector<double> sorted = real.target.values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int q = 1; q < 10; ++q) edges.push_back(sorted[sorted.size() * static_cast<std::size_t>(q) / 10]);
    n_strata = 10;
    auto bin = [&](double y) {
      return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), y) - edges.begin());
    };
    for (std::size_t i = 0; i < real.size(); ++i) real_stratum[i] = bin(real.target.values[i]);
    for (std::size_t i = 0; i < pool.size(); ++i) pool_stratum[i] = bin(pool.target.values[i]);
  } else {
    n_strata = real.target.n_classes;
    for (std::size_t i = 0; i < real.size(); ++i) real_stratum[i] = static_cast<std::size_t>(real.target.hard_label(i));
    for (std::size_t i = 0; i < pool.size(); ++i) pool_stratum[i] = static_cast<std::size_t>(pool.target.hard_label(i));
  }
  std::vector<double> freq(n_strata, 0.0);
  for (auto s : real_stratum) freq[s] += 1.0;
  auto quota = detail::largest_remainder(freq, spec.target_count);

  std::vector<std::vector<std::size_t>> members(n_strata);
  for (std::size_t i = 0; i < pool.size(); ++i) members[pool_stratum[i]].push_back(i);
  // shortfall moves to the nearest stratum with spare rows
  for (std::size_t s = 0; s < n_strata; ++s) {
    if (quota[s] <= members[s].size()) continue;
    std::size_t excess = quota[s] - members[s].size();
    quota[s] = members[s].size();
    warn("stratified: stratum " + std::to_string(s) + " short by " + std::to_string(excess) +
         " rows; reassigned to neighbouring strata");
    for (std::size_t dist = 1; excess > 0 && dist < n_strata; ++dist) {
      for (std::size_t t : {s >= dist ? s - dist : SIZE_MAX, s + dist}) {
        if (t >= n_strata || excess == 0) continue;
        const std::size_t spare = members[t].size() - std::min(members[t].size(), quota[t]);
        const std::size_t take = std::min(spare, excess);
        quota[t] += take;
        excess -= take;
      }
    }
  }

  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < n_strata; ++s) {
    Rng rng(derive_seed(spec.seed, 0x57a7, s));
    for (auto p : sample_without_replacement(members[s].size(), quota[s], rng)) out.push_back(members[s][p]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Extreme-value selection over encoded feature dimensions: r smallest and r
// largest unselected rows per dimension, cycling, r = ceil(target / 2d).
inline std::vector<std::size_t> iboss_sampler(const CandidatePool& pool, const SelectionSpec& spec) {
  detail::check_target(pool, spec);
  const std::size_t n = pool.size(), d = pool.features.cols();
  if (d == 0) throw DimensionError("iboss: pool has no feature columns");
  const std::size_t r = (spec.target_count + 2 * d - 1) / (2 * d);
  std::vector<std::vector<std::size_t>> order(d, std::vector<std::size_t>(n));
  parallel_for(d, [&](std::size_t j) {
    std::iota(order[j].begin(), order[j].end(), 0);
    std::stable_sort(order[j].begin(), order[j].end(),
                     [&](std::size_t a, std::size_t b) { return pool.features(a, j) < pool.features(b, j); });
  });
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> lo(d, 0), out;
  std::vector<std::ptrdiff_t> hi(d, static_cast<std::ptrdiff_t>(n) - 1);
  auto take = [&](std::size_t i) {
    taken[i] = true;
    out.push_back(i);
  };
  while (out.size() < spec.target_count) {
    for (std::size_t j = 0; j < d && out.size() < spec.target_count; ++j) {
      for (std::size_t c = 0; c < r && out.size() < spec.target_count; ++c) {
        while (taken[order[j][lo[j]]]) ++lo[j];
        take(order[j][lo[j]]);
      }
      // largest: descending value, ties to the lower index
      for (std::size_t c = 0; c < r && out.size() < spec.target_count; ++c) {
        std::ptrdiff_t best = -1;
        for (std::ptrdiff_t q = hi[j]; q >= 0; --q) {
          const std::size_t i = order[j][static_cast<std::size_t>(q)];
          if (taken[i]) continue;
          if (best >= 0 && pool.features(i, j) != pool.features(order[j][static_cast<std::size_t>(best)], j)) break;
          best = q;
        }
        take(order[j][static_cast<std::size_t>(best)]);
        while (hi[j] >= 0 && taken[order[j][static_cast<std::size_t>(hi[j])]]) --hi[j];
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// rho_k(r): distance from each real point to its k-th nearest other real
// point.
inline std::vector<double> compute_hyperspheres(const Matrix& real_emb, std::size_t k) {
  if (k == 0) throw ConfigError("hyperspheres: k must be positive");
  if (k >= real_emb.rows()) throw ConfigError("hyperspheres: k must be smaller than the real set");
  const PointSet ps(real_emb);
  std::vector<double> rho(real_emb.rows());
  parallel_for(real_emb.rows(), [&](std::size_t i) { rho[i] = ps.knn(real_emb.row(i), k, i).back().distance; });
  return rho;
}

// Distance from x to the union of hyperspheres.
inline double manifold_distance(std::span<const double> x, const Matrix& centers, std::span<const double> rho) {
  double best = INFINITY;
  for (std::size_t r = 0; r < centers.rows() && best > 0.0; ++r)
    best = std::min(best, std::max(0.0, distance(x, centers.row(r)) - rho[r]));
  return best;
}

inline std::vector<double> manifold_distances(const Matrix& points, const Matrix& centers, std::span<const double> rho) {
  std::vector<double> out(points.rows());
  parallel_for(points.rows(), [&](std::size_t i) { out[i] = manifold_distance(points.row(i), centers, rho); });
  return out;
}

inline std::vector<std::size_t> md_sampler(const CandidatePool& pool, const EncodedMatrix& real,
                                           const SelectionSpec& spec, const RepMap& rep) {
  detail::check_target(pool, spec);
  const Matrix real_emb = rep.map_batch(real.values);
  const auto rho = compute_hyperspheres(real_emb, spec.k);
  const auto dmd = manifold_distances(pool_embeddings(pool, rep), real_emb, rho);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dmd[a] < dmd[b]; });
  order.resize(spec.target_count);
  std::sort(order.begin(), order.end());
  return order;
}

// Clusters of the pool in representation space with min_cluster_size = b,
// taken whole in descending density (mean inverse core distance) until the
// budget is met. The last cluster and, if clusters run out, the noise points
// contribute their densest members first.
inline std::vector<std::size_t> hdbscan_sampler(const CandidatePool& pool, const EncodedMatrix& real,
                                                const SelectionSpec& spec, const RepMap& rep) {
  detail::check_target(pool, spec);
  const std::size_t b = detail::batch_size_for(spec, real.size());
  if (b > pool.size()) throw ConfigError("hdbscan: min cluster size exceeds the pool");
  const HdbscanResult hc = hdbscan(pool_embeddings(pool, rep), b, b);
  if (hc.clusters == 0) {
    warn("hdbscan: no cluster of size >= " + std::to_string(b) + "; falling back to manifold-distance selection");
    return md_sampler(pool, real, spec, rep);
  }
  auto density = [&](std::size_t i) { return 1.0 / std::max(hc.core[i], 1e-12); };
  std::vector<std::vector<std::size_t>> members(hc.clusters + 1);  // last slot holds noise
  for (std::size_t i = 0; i < pool.size(); ++i)
    members[hc.labels[i] < 0 ? hc.clusters : static_cast<std::size_t>(hc.labels[i])].push_back(i);
  std::vector<double> mean_density(hc.clusters, 0.0);
  for (std::size_t c = 0; c < hc.clusters; ++c) {
    for (auto i : members[c]) mean_density[c] += density(i);
    mean_density[c] /= static_cast<double>(members[c].size());
  }
  std::vector<std::size_t> rank(hc.clusters);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t c) { return mean_density[a] > mean_density[c]; });
  rank.push_back(hc.clusters);

  std::vector<std::size_t> out;
  for (std::size_t c : rank) {
    const std::size_t need = spec.target_count - out.size();
    if (need == 0) break;
    auto rows = members[c];
    if (rows.size() > need) {
      std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t e) { return hc.core[a] < hc.core[e]; });
      rows.resize(need);
    }
    out.insert(out.end(), rows.begin(), rows.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> select(const CandidatePool& pool, const EncodedMatrix& real, const SelectionSpec& spec,
                                       const RepMap& rep) {
  switch (spec.kind) {
    case SamplerKind::chamfer: return chamfer_sampler(pool, real, spec, rep);
    case SamplerKind::stratified: return stratified_sampler(pool, real, spec);
    case SamplerKind::iboss: return iboss_sampler(pool, spec);
    case SamplerKind::hdbscan: return hdbscan_sampler(pool, real, spec, rep);
    case SamplerKind::md: return md_sampler(pool, real, spec, rep);
  }
  throw ConfigError("sampler: unknown kind");
}

}  // namespace bcr
