#include "vaquita/vqformer.hpp"

namespace vaquita::vqformer {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

}  // namespace

void VQFormerConfig::validate() const {
  if (d < 1 || d_text < 1 || H < 1 || d_h < 1)
    throw ContractError("vqformer config: all dimensions must be >= 1");
  if (!(s_q > 0)) throw ContractError("vqformer config: s_q must be > 0");
}

VQFormerState VQFormerState::init(const VQFormerConfig& cfg,
                                  std::uint64_t seed, bool trainable) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  VQFormerState s;
  s.cfg = cfg;
  for (std::size_t h = 0; h < cfg.H; ++h) {
    s.w_q.push_back(Tensor::randn({cfg.d, cfg.d_h}, rng, kInitStd, trainable));
    s.w_k.push_back(
        Tensor::randn({cfg.d_text, cfg.d_h}, rng, kInitStd, trainable));
    s.w_v.push_back(
        Tensor::randn({cfg.d_text, cfg.d_h}, rng, kInitStd, trainable));
    s.w_o.push_back(
        Tensor::randn({cfg.d_h, cfg.d_text}, rng, kInitStd, trainable));
  }
  s.w_m = Tensor::randn({cfg.d, cfg.d_text}, rng, kInitStd, trainable);
  s.g_attn = Tensor::scalar(0.0, trainable);
  s.g_ff = Tensor::scalar(0.0, trainable);
  s.pre_ln_gamma = Tensor::full({cfg.d}, 1.0, trainable);
  s.pre_ln_beta = Tensor::zeros({cfg.d}, trainable);
  s.ffn_ln_gamma = Tensor::full({cfg.d_text}, 1.0, trainable);
  s.ffn_ln_beta = Tensor::zeros({cfg.d_text}, trainable);
  s.w1 = Tensor::randn({cfg.d_text, 4 * cfg.d_text}, rng, kInitStd, trainable);
  s.b1 = Tensor::zeros({4 * cfg.d_text}, trainable);
  s.w2 = Tensor::randn({4 * cfg.d_text, cfg.d_text}, rng, kInitStd, trainable);
  s.b2 = Tensor::zeros({cfg.d_text}, trainable);
  return s;
}

std::vector<std::pair<std::string, Tensor*>> VQFormerState::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t h = 0; h < w_q.size(); ++h) {
    const std::string hs = std::to_string(h);
    out.emplace_back("w_q.h" + hs, &w_q[h]);
    out.emplace_back("w_k.h" + hs, &w_k[h]);
    out.emplace_back("w_v.h" + hs, &w_v[h]);
    out.emplace_back("w_o.h" + hs, &w_o[h]);
  }
  out.emplace_back("w_m", &w_m);
  out.emplace_back("g_attn", &g_attn);
  out.emplace_back("g_ff", &g_ff);
  out.emplace_back("pre_ln_gamma", &pre_ln_gamma);
  out.emplace_back("pre_ln_beta", &pre_ln_beta);
  out.emplace_back("ffn_ln_gamma", &ffn_ln_gamma);
  out.emplace_back("ffn_ln_beta", &ffn_ln_beta);
  out.emplace_back("w1", &w1);
  out.emplace_back("b1", &b1);
  out.emplace_back("w2", &w2);
  out.emplace_back("b2", &b2);
  return out;
}

Tensor vq_cross_attention(const Tensor& M, const Tensor& X,
                          const VQFormerState& state) {
  const auto& cfg = state.cfg;
  if (M.rank() != 2 || M.cols() != cfg.d)
    throw ShapeError("vq_cross_attention: M must be m x d");
  if (X.rank() != 2 || X.cols() != cfg.d_text)
    throw ShapeError("vq_cross_attention: X must be l x d_text");

  Tensor m_norm = layer_norm(M, state.pre_ln_gamma, state.pre_ln_beta, kLnEps);
  const double q_scale = 1.0 / cfg.s_q;

  // Per-head projected outputs are summed; algebraically the same as
  // concatenating the heads and applying the stacked (H*d_h) x d_text
  // projection.
  Tensor out;
  for (std::size_t h = 0; h < cfg.H; ++h) {
    Tensor q = scale(matmul(m_norm, state.w_q[h]), q_scale);
    Tensor k = matmul(X, state.w_k[h]);
    Tensor v = matmul(X, state.w_v[h]);
    Tensor attn = softmax_rows(matmul_nt(q, k));
    Tensor head = matmul(matmul(attn, v), state.w_o[h]);
    out = h == 0 ? head : add(out, head);
  }
  return out;
}

Tensor vqformer_forward(const Tensor& M, const Tensor& X,
                        const VQFormerState& state) {
  Tensor attn_out = vq_cross_attention(M, X, state);
  Tensor m_prime = add(scale_by(attn_out, tanh_elem(state.g_attn)),
                       matmul(M, state.w_m));

  Tensor hidden =
      layer_norm(m_prime, state.ffn_ln_gamma, state.ffn_ln_beta, kLnEps);
  hidden = gelu(add_row_vector(matmul(hidden, state.w1), state.b1));
  hidden = add_row_vector(matmul(hidden, state.w2), state.b2);

  return add(scale_by(hidden, tanh_elem(state.g_ff)), m_prime);
}

}  // namespace vaquita::vqformer
