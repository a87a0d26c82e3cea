#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <vector>

#include "vaquita/vqformer.hpp"

using namespace vaquita;
using namespace vaquita::vqformer;

namespace {

double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("single text token makes attention output independent of M") {
  VQFormerConfig cfg{.d = 3, .d_text = 4, .H = 2, .d_h = 2, .s_q = 8.0};
  auto state = VQFormerState::init(cfg, 7);
  std::mt19937_64 rng(8);
  Tensor x = Tensor::randn({1, 4}, rng);

  Tensor m1 = Tensor::randn({3, 3}, rng);
  Tensor m2 = Tensor::randn({3, 3}, rng);
  Tensor o1 = vq_cross_attention(m1, x, state);
  Tensor o2 = vq_cross_attention(m2, x, state);
  CHECK(max_abs_diff(o1.values(), o2.values()) == 0.0);

  // Every output row equals sum_h V_h W_o_h.
  for (std::size_t i = 1; i < o1.rows(); ++i)
    for (std::size_t j = 0; j < o1.cols(); ++j)
      CHECK(o1(i, j) == o1(0, j));
}

TEST_CASE("s_q = sqrt(d_h) reproduces standard scaled dot-product logits") {
  VQFormerConfig cfg{.d = 3, .d_text = 4, .H = 1, .d_h = 64, .s_q = 8.0};
  auto state = VQFormerState::init(cfg, 17);
  std::mt19937_64 rng(18);
  Tensor m = Tensor::randn({2, 3}, rng);
  Tensor x = Tensor::randn({3, 4}, rng);

  Tensor m_norm =
      layer_norm(m, state.pre_ln_gamma, state.pre_ln_beta, 1e-5);
  Tensor q_scaled = scale(matmul(m_norm, state.w_q[0]), 1.0 / 8.0);
  Tensor k = matmul(x, state.w_k[0]);
  Tensor logits_via_sq = matmul_nt(q_scaled, k);
  Tensor logits_standard = scale(matmul_nt(matmul(m_norm, state.w_q[0]), k),
                                 1.0 / std::sqrt(64.0));
  CHECK(max_abs_diff(logits_via_sq.values(), logits_standard.values()) == 0.0);
}

TEST_CASE("all-scalar instance matches a hand oracle") {
  VQFormerConfig cfg{.d = 1, .d_text = 1, .H = 1, .d_h = 1, .s_q = 2.0};
  auto state = VQFormerState::init(cfg, 27);
  const double mu = 0.83;
  const double x1 = 0.4, x2 = -1.1;
  const double wq = state.w_q[0].item(), wk = state.w_k[0].item(),
               wv = state.w_v[0].item(), wo = state.w_o[0].item(),
               wm = state.w_m.item();
  const double beta = state.pre_ln_beta.item();  // 1-wide rows normalize to 0
  // Make the gates bite.
  state.g_attn = Tensor::scalar(0.31);
  state.g_ff = Tensor::scalar(-0.42);
  const double fb = state.ffn_ln_beta.item();
  const double w1a = state.w1.values()[0], w1b = state.w1.values()[1],
               w1c = state.w1.values()[2], w1d = state.w1.values()[3];
  const double b1a = state.b1.values()[0], b1b = state.b1.values()[1],
               b1c = state.b1.values()[2], b1d = state.b1.values()[3];
  const double w2a = state.w2.values()[0], w2b = state.w2.values()[1],
               w2c = state.w2.values()[2], w2d = state.w2.values()[3];
  const double b2 = state.b2.item();

  const double q = beta * wq / 2.0;
  const double l1 = q * (x1 * wk), l2 = q * (x2 * wk);
  const double mx = std::max(l1, l2);
  const double e1 = std::exp(l1 - mx), e2 = std::exp(l2 - mx);
  const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
  const double attn = (p1 * (x1 * wv) + p2 * (x2 * wv)) * wo;
  const double m_prime = attn * std::tanh(0.31) + mu * wm;
  auto gelu1 = [](double t) {
    const double u = std::sqrt(2.0 / 3.14159265358979323846) *
                     (t + 0.044715 * t * t * t);
    return 0.5 * t * (1.0 + std::tanh(u));
  };
  const double ff = gelu1(fb * w1a + b1a) * w2a + gelu1(fb * w1b + b1b) * w2b +
                    gelu1(fb * w1c + b1c) * w2c + gelu1(fb * w1d + b1d) * w2d +
                    b2;
  const double expected = ff * std::tanh(-0.42) + m_prime;

  Tensor m = Tensor::from_values({1, 1}, {mu});
  Tensor x = Tensor::from_values({2, 1}, {x1, x2});
  Tensor out = vqformer_forward(m, x, state);
  CHECK(out.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gate-closed block is exactly M * w_m") {
  VQFormerConfig cfg{.d = 3, .d_text = 5, .H = 2, .d_h = 2, .s_q = 8.0};
  std::mt19937_64 rng(37);
  for (int iter = 0; iter < 50; ++iter) {
    auto state = VQFormerState::init(cfg, 100 + iter);
    Tensor m = Tensor::randn({2 + iter % 3, 3}, rng);
    Tensor x = Tensor::randn({1 + iter % 4, 5}, rng);
    Tensor out = vqformer_forward(m, x, state);
    Tensor expected = matmul(m, state.w_m);
    REQUIRE(out.size() == expected.size());
    CHECK(std::memcmp(out.values().data(), expected.values().data(),
                      out.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("output shape is m x d_text") {
  VQFormerConfig cfg{.d = 4, .d_text = 6, .H = 2, .d_h = 3, .s_q = 4.0};
  auto state = VQFormerState::init(cfg, 47);
  std::mt19937_64 rng(48);
  Tensor out = vqformer_forward(Tensor::randn({5, 4}, rng),
                                Tensor::randn({3, 6}, rng), state);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 6);
}

TEST_CASE("text token permutation leaves the block unchanged") {
  VQFormerConfig cfg{.d = 3, .d_text = 4, .H = 2, .d_h = 2, .s_q = 3.0};
  std::mt19937_64 rng(57);
  for (int iter = 0; iter < 20; ++iter) {
    auto state = VQFormerState::init(cfg, 200 + iter);
    state.g_attn = Tensor::scalar(0.8);
    state.g_ff = Tensor::scalar(0.5);
    Tensor m = Tensor::randn({3, 3}, rng);
    const std::size_t l = 2 + rng() % 5;
    Tensor x = Tensor::randn({l, 4}, rng);

    std::vector<std::size_t> perm(l);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> shuffled(l * 4);
    for (std::size_t i = 0; i < l; ++i)
      std::copy_n(x.values().data() + perm[i] * 4, 4,
                  shuffled.data() + i * 4);
    Tensor x_perm = Tensor::from_values({l, 4}, std::move(shuffled));

    Tensor base = vqformer_forward(m, x, state);
    Tensor permuted = vqformer_forward(m, x_perm, state);
    CHECK(max_rel_diff(base.values(), permuted.values()) < 1e-9);
  }
}

TEST_CASE("summing projected heads equals concat with stacked projection") {
  std::mt19937_64 rng(67);
  for (int seed = 0; seed < 20; ++seed) {
    const std::size_t m = 2 + rng() % 3, l = 2 + rng() % 3, H = 2 + rng() % 3,
                      d_h = 2 + rng() % 3, d_text = 3 + rng() % 4;
    // Random per-head attention outputs and projections.
    std::vector<Tensor> heads, w_o;
    for (std::size_t h = 0; h < H; ++h) {
      heads.push_back(Tensor::randn({m, d_h}, rng));
      w_o.push_back(Tensor::randn({d_h, d_text}, rng));
    }
    Tensor summed;
    for (std::size_t h = 0; h < H; ++h) {
      Tensor proj = matmul(heads[h], w_o[h]);
      summed = h == 0 ? proj : add(summed, proj);
    }
    Tensor stacked_w = concat_rows(w_o[0], w_o[1]);
    for (std::size_t h = 2; h < H; ++h)
      stacked_w = concat_rows(stacked_w, w_o[h]);
    Tensor concat_heads = concat_cols(heads);
    Tensor via_concat = matmul(concat_heads, stacked_w);
    CHECK(max_abs_diff(summed.values(), via_concat.values()) < 1e-12);
    (void)l;
  }
}

TEST_CASE("gradients match finite differences for every parameter") {
  VQFormerConfig cfg{.d = 3, .d_text = 4, .H = 2, .d_h = 2, .s_q = 1.5};
  auto state = VQFormerState::init(cfg, 77);
  // Open the gates so their derivatives are exercised away from zero too.
  state.g_attn = Tensor::scalar(0.2, true);
  state.g_ff = Tensor::scalar(-0.1, true);
  std::mt19937_64 rng(78);
  Tensor m = Tensor::randn({2, 3}, rng);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor probe = Tensor::randn({2, 4}, rng);

  auto loss_fn = [&] {
    return sum_all(mul_elem(vqformer_forward(m, x, state), probe));
  };

  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = loss_fn();
  }
  tape.backward(loss);

  for (auto& [name, param] : state.parameters()) {
    std::vector<double> analytic(param->size(), 0.0);
    if (param->has_grad())
      analytic.assign(param->grad().begin(), param->grad().end());
    Tensor original = *param;
    Tensor fd = finite_diff_grad(
        [&, param](const Tensor& t) {
          *param = t;
          return loss_fn().item();
        },
        original, 1e-5);
    *param = original;
    CHECK_MESSAGE(max_rel_diff(analytic, fd.values()) < 1e-5, name);
  }
}
