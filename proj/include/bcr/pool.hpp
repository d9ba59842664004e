#pragma once

#include "bcr/data.hpp"

namespace bcr {

// Stage I output: standard-normal states in the backbone's space, with class
// labels pre-assigned for class-conditional generation.
struct NoisePool {
  Matrix state;
  std::vector<int> classes;  // empty for regression
  std::uint64_t seed = 0;

  std::size_t size() const { return state.rows(); }
};

// Encoded candidates with their targets and cached representation-space
// embeddings. Samplers select rows; they never modify a pool.
struct CandidatePool {
  Matrix features;
  Targets target;
  Matrix embeddings;
  std::uint64_t seed = 0;
  bool guided = false;
  bool distilled = false;

  std::size_t size() const { return features.rows(); }

  EncodedMatrix encoded() const { return {features, target}; }

  CandidatePool subset(std::span<const std::size_t> idx) const {
    CandidatePool p;
    p.features = features.select_rows(idx);
    p.target = target.select(idx);
    if (embeddings.rows() == features.rows()) p.embeddings = embeddings.select_rows(idx);
    p.seed = seed;
    p.guided = guided;
    p.distilled = distilled;
    return p;
  }
};

}  // namespace bcr
