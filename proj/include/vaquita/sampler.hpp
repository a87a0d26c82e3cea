#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vaquita/errors.hpp"

namespace vaquita::sampler {

/// Per-frame embeddings used for question-conditioned frame ranking.
/// All rows must be finite; ranking additionally requires nonzero norms.
struct FrameEmbeddingSet {
  std::size_t count = 0;  // L
  std::size_t dim = 0;    // d_s
  std::vector<double> vectors;  // row-major, count x dim

  std::span<const double> row(std::size_t i) const {
    return {vectors.data() + i * dim, dim};
  }
};

struct QueryEmbedding {
  std::size_t dim = 0;
  std::vector<double> vector;
};

/// Frame indices chosen for one (video, question) pair. `all` is the sorted
/// union of the disjoint uniform and similarity parts.
struct SamplingPlan {
  std::vector<std::size_t> uniform;
  std::vector<std::size_t> similarity;
  std::vector<std::size_t> all;
};

/// a.b / (|a| |b|). Zero-norm inputs are rejected, never coerced to 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// k indices floor(i*L/k), i = 0..k-1; strictly increasing. Requires k <= L.
std::vector<std::size_t> uniform_indices(std::size_t L, std::size_t k);

/// Training-time selection: ceil(T/2) uniform indices, then the remaining
/// frames ranked by cosine similarity to the query, top T - ceil(T/2) taken
/// with ties broken toward the lower index. Returns all frames when L <= T.
SamplingPlan select_frames_train(const QueryEmbedding& query,
                                 const FrameEmbeddingSet& frames,
                                 std::size_t T);

/// Test-time selection: plain uniform sampling of min(T, L) indices.
SamplingPlan select_frames_test(std::size_t L, std::size_t T);

}  // namespace vaquita::sampler
