#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vaquita/tensor.hpp"

namespace vaquita::perceiver {

struct PerceiverConfig {
  std::size_t T = 100;   // sampled frame count
  std::size_t n = 256;   // patches per frame
  std::size_t d = 1024;  // feature width
  std::size_t m = 356;   // learned token count
  std::size_t p = 1;     // layer count
  std::size_t H = 8;     // attention heads
  std::size_t d_h = 64;  // per-head width

  void validate() const;
};

struct PerceiverLayer {
  std::vector<Tensor> w_q;  // per head, d x d_h
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor w_merge;           // (H*d_h) x d
  Tensor ln_gamma, ln_beta;  // FFN entry norm over d
  Tensor w1, b1;             // d -> 4d
  Tensor w2, b2;             // 4d -> d
};

/// Learned latents, additive time encodings and per-layer attention/FFN
/// weights. Layers do not share weights.
struct PerceiverState {
  PerceiverConfig cfg;
  Tensor latents;   // m x d
  Tensor time_enc;  // T x 1 x d
  std::vector<PerceiverLayer> layers;

  static PerceiverState init(const PerceiverConfig& cfg, std::uint64_t seed,
                             bool trainable = true);

  /// Stable (name, slot) listing of every parameter, declaration order.
  std::vector<std::pair<std::string, Tensor*>> parameters();
};

/// out[t, i, :] = F[t, i, :] + E[t, 0, :]. F is T x n x d, E is T x 1 x d.
Tensor add_time_encodings(const Tensor& F, const Tensor& E);

/// T x n x d -> (T*n) x d; row t*n + i holds F[t, i, :].
Tensor flatten_frames(const Tensor& F);

/// One cross-attention + FFN block: queries from the latents, keys and
/// values from the flattened features with the latents appended. Logits are
/// scaled by 1/sqrt(d_h).
Tensor perceiver_layer(const Tensor& latents, const Tensor& feats,
                       const PerceiverLayer& w, std::size_t H,
                       std::size_t d_h);

/// Adds time encodings, flattens and applies the p layers starting from the
/// learned latents. Output is m x d regardless of T and n. Accepts inputs
/// with fewer than cfg.T frames (leading time encodings are used).
Tensor video_perceiver_forward(const Tensor& F, const PerceiverState& state);

}  // namespace vaquita::perceiver
