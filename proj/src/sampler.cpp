#include "vaquita/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vaquita::sampler {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double cosine_similarity(std::span<const double> a,
                         std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_similarity: dimensions disagree");
  if (a.empty()) throw ShapeError("cosine_similarity: empty vectors");
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0)
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

std::vector<std::size_t> uniform_indices(std::size_t L, std::size_t k) {
  if (k < 1 || k > L)
    throw ContractError("uniform_indices: need 1 <= k <= L, got k=" +
                        std::to_string(k) + ", L=" + std::to_string(L));
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i * L / k;
  return idx;
}

SamplingPlan select_frames_train(const QueryEmbedding& query,
                                 const FrameEmbeddingSet& frames,
                                 std::size_t T) {
  if (T < 2) throw ContractError("select_frames_train: T must be >= 2");
  if (frames.count < 1)
    throw ContractError("select_frames_train: no frames");
  const std::size_t L = frames.count;

  SamplingPlan plan;
  if (L <= T) {
    plan.uniform.resize(L);
    for (std::size_t i = 0; i < L; ++i) plan.uniform[i] = i;
    plan.all = plan.uniform;
    return plan;
  }

  const std::size_t k_uniform = (T + 1) / 2;
  plan.uniform = uniform_indices(L, k_uniform);

  std::vector<bool> taken(L, false);
  for (std::size_t i : plan.uniform) taken[i] = true;

  // Rank the remaining frames by similarity to the query, ties toward the
  // lower index.
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(L - k_uniform);
  for (std::size_t i = 0; i < L; ++i) {
    if (taken[i]) continue;
    ranked.emplace_back(
        cosine_similarity({query.vector.data(), query.dim}, frames.row(i)), i);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  const std::size_t k_sim = T - k_uniform;
  plan.similarity.resize(k_sim);
  for (std::size_t i = 0; i < k_sim; ++i) plan.similarity[i] = ranked[i].second;
  std::sort(plan.similarity.begin(), plan.similarity.end());

  plan.all.reserve(T);
  std::merge(plan.uniform.begin(), plan.uniform.end(), plan.similarity.begin(),
             plan.similarity.end(), std::back_inserter(plan.all));
  return plan;
}

SamplingPlan select_frames_test(std::size_t L, std::size_t T) {
  if (T < 1) throw ContractError("select_frames_test: T must be >= 1");
  if (L < 1) throw ContractError("select_frames_test: L must be >= 1");
  SamplingPlan plan;
  plan.uniform = uniform_indices(L, std::min(T, L));
  plan.all = plan.uniform;
  return plan;
}

}  // namespace vaquita::sampler
