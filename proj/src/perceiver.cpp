#include "vaquita/perceiver.hpp"

#include <cmath>

namespace vaquita::perceiver {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

void require_rank3(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 3)
    throw ShapeError(std::string(what) + " must be rank-3 (T x n x d)");
}

}  // namespace

void PerceiverConfig::validate() const {
  if (T < 1 || n < 1 || d < 1 || m < 1 || p < 1 || H < 1 || d_h < 1)
    throw ContractError("perceiver config: all dimensions must be >= 1");
}

PerceiverState PerceiverState::init(const PerceiverConfig& cfg,
                                    std::uint64_t seed, bool trainable) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  PerceiverState s;
  s.cfg = cfg;
  s.latents = Tensor::randn({cfg.m, cfg.d}, rng, kInitStd, trainable);
  s.time_enc = Tensor::randn({cfg.T, 1, cfg.d}, rng, kInitStd, trainable);
  s.layers.resize(cfg.p);
  for (auto& layer : s.layers) {
    layer.w_q.reserve(cfg.H);
    layer.w_k.reserve(cfg.H);
    layer.w_v.reserve(cfg.H);
    for (std::size_t h = 0; h < cfg.H; ++h) {
      layer.w_q.push_back(
          Tensor::randn({cfg.d, cfg.d_h}, rng, kInitStd, trainable));
      layer.w_k.push_back(
          Tensor::randn({cfg.d, cfg.d_h}, rng, kInitStd, trainable));
      layer.w_v.push_back(
          Tensor::randn({cfg.d, cfg.d_h}, rng, kInitStd, trainable));
    }
    layer.w_merge =
        Tensor::randn({cfg.H * cfg.d_h, cfg.d}, rng, kInitStd, trainable);
    layer.ln_gamma = Tensor::full({cfg.d}, 1.0, trainable);
    layer.ln_beta = Tensor::zeros({cfg.d}, trainable);
    layer.w1 = Tensor::randn({cfg.d, 4 * cfg.d}, rng, kInitStd, trainable);
    layer.b1 = Tensor::zeros({4 * cfg.d}, trainable);
    layer.w2 = Tensor::randn({4 * cfg.d, cfg.d}, rng, kInitStd, trainable);
    layer.b2 = Tensor::zeros({cfg.d}, trainable);
  }
  return s;
}

std::vector<std::pair<std::string, Tensor*>> PerceiverState::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("latents", &latents);
  out.emplace_back("time_enc", &time_enc);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    auto& layer = layers[l];
    for (std::size_t h = 0; h < layer.w_q.size(); ++h) {
      const std::string hs = std::to_string(h);
      out.emplace_back(prefix + "w_q.h" + hs, &layer.w_q[h]);
      out.emplace_back(prefix + "w_k.h" + hs, &layer.w_k[h]);
      out.emplace_back(prefix + "w_v.h" + hs, &layer.w_v[h]);
    }
    out.emplace_back(prefix + "w_merge", &layer.w_merge);
    out.emplace_back(prefix + "ln_gamma", &layer.ln_gamma);
    out.emplace_back(prefix + "ln_beta", &layer.ln_beta);
    out.emplace_back(prefix + "w1", &layer.w1);
    out.emplace_back(prefix + "b1", &layer.b1);
    out.emplace_back(prefix + "w2", &layer.w2);
    out.emplace_back(prefix + "b2", &layer.b2);
  }
  return out;
}

Tensor add_time_encodings(const Tensor& F, const Tensor& E) {
  require_rank3(F, "add_time_encodings: F");
  require_rank3(E, "add_time_encodings: E");
  const std::size_t T = F.shape()[0], n = F.shape()[1], d = F.shape()[2];
  if (E.shape()[0] != T || E.shape()[1] != 1 || E.shape()[2] != d)
    throw ShapeError("add_time_encodings: E must be T x 1 x d matching F");
  Tensor f2 = reshape(F, {T * n, d});
  Tensor e2 = repeat_rows_each(reshape(E, {T, d}), n);
  return reshape(add(f2, e2), {T, n, d});
}

Tensor flatten_frames(const Tensor& F) {
  require_rank3(F, "flatten_frames: F");
  const std::size_t T = F.shape()[0], n = F.shape()[1], d = F.shape()[2];
  return reshape(F, {T * n, d});
}

Tensor perceiver_layer(const Tensor& latents, const Tensor& feats,
                       const PerceiverLayer& w, std::size_t H,
                       std::size_t d_h) {
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  Tensor kv_src = concat_rows(feats, latents);

  std::vector<Tensor> heads;
  heads.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    Tensor q = matmul(latents, w.w_q[h]);
    Tensor k = matmul(kv_src, w.w_k[h]);
    Tensor v = matmul(kv_src, w.w_v[h]);
    Tensor attn = softmax_rows(scale(matmul_nt(q, k), logit_scale));
    heads.push_back(matmul(attn, v));
  }
  Tensor merged = matmul(concat_cols(heads), w.w_merge);
  Tensor x = add(latents, merged);

  Tensor hidden = layer_norm(x, w.ln_gamma, w.ln_beta, kLnEps);
  hidden = gelu(add_row_vector(matmul(hidden, w.w1), w.b1));
  hidden = add_row_vector(matmul(hidden, w.w2), w.b2);
  return add(x, hidden);
}

Tensor video_perceiver_forward(const Tensor& F, const PerceiverState& state) {
  require_rank3(F, "video_perceiver_forward: F");
  const auto& cfg = state.cfg;
  const std::size_t T = F.shape()[0];
  if (T > cfg.T)
    throw ShapeError("video_perceiver_forward: more frames than time encodings");
  if (F.shape()[1] != cfg.n || F.shape()[2] != cfg.d)
    throw ShapeError("video_perceiver_forward: F does not match config");

  Tensor e = state.time_enc;
  if (T < cfg.T)
    e = reshape(slice_rows(reshape(e, {cfg.T, cfg.d}), 0, T), {T, 1, cfg.d});

  Tensor feats = flatten_frames(add_time_encodings(F, e));
  Tensor tokens = state.latents;
  for (const auto& layer : state.layers)
    tokens = perceiver_layer(tokens, feats, layer, cfg.H, cfg.d_h);
  return tokens;
}

}  // namespace vaquita::perceiver
