#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vaquita/tensor.hpp"

namespace vaquita::vqformer {

struct VQFormerConfig {
  std::size_t d = 1024;       // video token width
  std::size_t d_text = 4096;  // text embedding width
  std::size_t H = 8;
  std::size_t d_h = 64;
  double s_q = 8.0;  // query scale divisor

  void validate() const;
};

/// Gated cross-attention block state. Queries come from the video tokens,
/// keys/values from the text embeddings. Both gates start at exactly 0, so
/// a fresh block maps M to M * w_m.
struct VQFormerState {
  VQFormerConfig cfg;
  std::vector<Tensor> w_q;  // per head, d x d_h
  std::vector<Tensor> w_k;  // per head, d_text x d_h
  std::vector<Tensor> w_v;  // per head, d_text x d_h
  std::vector<Tensor> w_o;  // per head, d_h x d_text
  Tensor w_m;               // d x d_text
  Tensor g_attn, g_ff;      // scalars, zero-initialized
  Tensor pre_ln_gamma, pre_ln_beta;  // over d, before the q projection
  Tensor ffn_ln_gamma, ffn_ln_beta;  // over d_text
  Tensor w1, b1;  // d_text -> 4*d_text
  Tensor w2, b2;  // 4*d_text -> d_text

  static VQFormerState init(const VQFormerConfig& cfg, std::uint64_t seed,
                            bool trainable = true);
  std::vector<std::pair<std::string, Tensor*>> parameters();
};

/// Multi-head cross-attention: Q = LayerNorm(M) W_q / s_q, K = X W_k,
/// V = X W_v, per-head output softmax(Q K^T) V W_o summed over heads.
/// M is m x d, X is l x d_text; result is m x d_text.
Tensor vq_cross_attention(const Tensor& M, const Tensor& X,
                          const VQFormerState& state);

/// Full gated block:
///   M'  = vq_cross_attention(M, X) * tanh(g_attn) + M w_m
///   M'' = FeedForward(M') * tanh(g_ff) + M'
Tensor vqformer_forward(const Tensor& M, const Tensor& X,
                        const VQFormerState& state);

}  // namespace vaquita::vqformer
