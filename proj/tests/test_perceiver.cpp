#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "vaquita/perceiver.hpp"

using namespace vaquita;
using namespace vaquita::perceiver;

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

// Permutes the frame axis of a rank-3 tensor.
Tensor permute_frames(const Tensor& f, const std::vector<std::size_t>& perm) {
  const std::size_t T = f.shape()[0], n = f.shape()[1], d = f.shape()[2];
  std::vector<double> out(T * n * d);
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(f.values().data() + perm[t] * n * d, n * d,
                out.data() + t * n * d);
  return Tensor::from_values({T, n, d}, std::move(out));
}

Tensor permute_time_enc(const Tensor& e, const std::vector<std::size_t>& perm) {
  const std::size_t T = e.shape()[0], d = e.shape()[2];
  std::vector<double> out(T * d);
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(e.values().data() + perm[t] * d, d, out.data() + t * d);
  return Tensor::from_values({T, 1, d}, std::move(out));
}

}  // namespace

TEST_CASE("add_time_encodings frozen examples") {
  // Zero encodings leave the features untouched.
  std::mt19937_64 rng(3);
  Tensor f = Tensor::randn({2, 3, 4}, rng);
  Tensor zeros = Tensor::zeros({2, 1, 4});
  CHECK(max_rel_diff(add_time_encodings(f, zeros).values(), f.values()) ==
        0.0);

  // Zero features reproduce the encodings on every patch.
  Tensor fz = Tensor::zeros({2, 3, 4});
  Tensor e = Tensor::randn({2, 1, 4}, rng);
  Tensor out = add_time_encodings(fz, e);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(out.values()[(t * 3 + i) * 4 + j] == e.values()[t * 4 + j]);

  // Hand instance: T=2, n=2, d=1.
  Tensor fh = Tensor::from_values({2, 2, 1}, {1, 2, 3, 4});
  Tensor eh = Tensor::from_values({2, 1, 1}, {10, 20});
  Tensor oh = add_time_encodings(fh, eh);
  CHECK(oh.values()[0] == 11);
  CHECK(oh.values()[1] == 12);
  CHECK(oh.values()[2] == 23);
  CHECK(oh.values()[3] == 24);

  CHECK_THROWS_AS(add_time_encodings(fh, Tensor::zeros({3, 1, 1})),
                  ShapeError);
}

TEST_CASE("flatten_frames layout and round trip") {
  std::mt19937_64 rng(5);
  Tensor f = Tensor::randn({3, 2, 4}, rng);
  Tensor flat = flatten_frames(f);
  REQUIRE(flat.rows() == 6);
  REQUIRE(flat.cols() == 4);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(flat(t * 2 + i, j) == f.values()[(t * 2 + i) * 4 + j]);

  // T=1 is the identity on the n x d slice.
  Tensor single = Tensor::randn({1, 5, 3}, rng);
  CHECK(max_rel_diff(flatten_frames(single).values(), single.values()) == 0.0);

  // Round trip through reshape reproduces F exactly.
  Tensor back = reshape(flat, {3, 2, 4});
  CHECK(max_rel_diff(back.values(), f.values()) == 0.0);
}

TEST_CASE("perceiver_layer output shape") {
  PerceiverConfig cfg{.T = 2, .n = 3, .d = 4, .m = 2, .p = 1, .H = 2,
                      .d_h = 3};
  auto state = PerceiverState::init(cfg, 11);
  std::mt19937_64 rng(12);
  Tensor f = Tensor::randn({2, 3, 4}, rng);
  Tensor out = video_perceiver_forward(f, state);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 4);
}

TEST_CASE("single-element layer matches a scalar-arithmetic oracle") {
  // m=1, T*n=1, H=1, d=d_h=1: every matrix collapses to a scalar.
  PerceiverConfig cfg{.T = 1, .n = 1, .d = 1, .m = 1, .p = 1, .H = 1,
                      .d_h = 1};
  auto state = PerceiverState::init(cfg, 21);
  const auto& layer = state.layers[0];
  const double lat = state.latents.item();
  const double feat = 0.37;
  const double wq = layer.w_q[0].item(), wk = layer.w_k[0].item(),
               wv = layer.w_v[0].item(), wo = layer.w_merge.item();
  const double g = layer.ln_gamma.item(), be = layer.ln_beta.item();
  const double w1 = layer.w1.values()[0], w1b = layer.w1.values()[1],
               w1c = layer.w1.values()[2], w1d = layer.w1.values()[3];
  const double b1a = layer.b1.values()[0], b1b = layer.b1.values()[1],
               b1c = layer.b1.values()[2], b1d = layer.b1.values()[3];
  const double w2a = layer.w2.values()[0], w2b = layer.w2.values()[1],
               w2c = layer.w2.values()[2], w2d = layer.w2.values()[3];
  const double b2 = layer.b2.item();

  // Oracle, spelled out in plain arithmetic.
  const double q = lat * wq;
  const double k_feat = feat * wk, k_lat = lat * wk;
  const double v_feat = feat * wv, v_lat = lat * wv;
  const double l_feat = q * k_feat, l_lat = q * k_lat;  // d_h = 1: scale 1
  const double mx = std::max(l_feat, l_lat);
  const double e_feat = std::exp(l_feat - mx), e_lat = std::exp(l_lat - mx);
  const double attn = (e_feat * v_feat + e_lat * v_lat) / (e_feat + e_lat);
  const double x = lat + attn * wo;
  // Row of length one normalizes to zero; the FFN sees beta.
  const double h = be;
  auto gelu1 = [](double t) {
    const double u = std::sqrt(2.0 / 3.14159265358979323846) *
                     (t + 0.044715 * t * t * t);
    return 0.5 * t * (1.0 + std::tanh(u));
  };
  const double ff = gelu1(h * w1 + b1a) * w2a + gelu1(h * w1b + b1b) * w2b +
                    gelu1(h * w1c + b1c) * w2c + gelu1(h * w1d + b1d) * w2d +
                    b2;
  const double expected = x + ff;

  Tensor f = Tensor::from_values({1, 1, 1}, {feat});
  Tensor out = video_perceiver_forward(
      f, [&] {
        PerceiverState st = state;
        st.time_enc = Tensor::zeros({1, 1, 1});
        return st;
      }());
  CHECK(out.values()[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("permutation properties") {
  PerceiverConfig cfg{.T = 4, .n = 2, .d = 4, .m = 3, .p = 1, .H = 2,
                      .d_h = 3};
  std::mt19937_64 rng(31);

  int changed = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    auto state = PerceiverState::init(cfg, 100 + seed);
    Tensor f = Tensor::randn({cfg.T, cfg.n, cfg.d}, rng);
    std::vector<std::size_t> perm(cfg.T);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (perm == std::vector<std::size_t>{0, 1, 2, 3})
      std::reverse(perm.begin(), perm.end());
    Tensor f_perm = permute_frames(f, perm);

    // (a) zero encodings: permuting frames leaves the output unchanged.
    PerceiverState zero_enc = state;
    zero_enc.time_enc = Tensor::zeros({cfg.T, 1, cfg.d});
    Tensor base_zero = video_perceiver_forward(f, zero_enc);
    Tensor perm_zero = video_perceiver_forward(f_perm, zero_enc);
    CHECK(max_rel_diff(base_zero.values(), perm_zero.values()) < 1e-9);

    // (b) permuting frames together with the encodings changes nothing.
    PerceiverState perm_enc = state;
    perm_enc.time_enc = permute_time_enc(state.time_enc, perm);
    Tensor base = video_perceiver_forward(f, state);
    Tensor joint = video_perceiver_forward(f_perm, perm_enc);
    CHECK(max_rel_diff(base.values(), joint.values()) < 1e-9);

    // (c) frame-only permutation with nonzero encodings moves the output.
    Tensor moved = video_perceiver_forward(f_perm, state);
    if (max_rel_diff(base.values(), moved.values()) > 1e-6) ++changed;
  }
  CHECK(changed >= 18);
}

TEST_CASE("p=2 stacks layers with independent weights") {
  PerceiverConfig cfg{.T = 2, .n = 2, .d = 3, .m = 2, .p = 2, .H = 1,
                      .d_h = 2};
  auto state = PerceiverState::init(cfg, 41);
  CHECK(state.layers.size() == 2);
  CHECK(state.layers[0].w_q[0].values()[0] !=
        state.layers[1].w_q[0].values()[0]);
  std::mt19937_64 rng(42);
  Tensor f = Tensor::randn({2, 2, 3}, rng);
  Tensor out = video_perceiver_forward(f, state);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 3);
}

TEST_CASE("gradients match finite differences for p=1 and p=2") {
  for (std::size_t p : {std::size_t{1}, std::size_t{2}}) {
    PerceiverConfig cfg{.T = 2, .n = 2, .d = 3, .m = 2, .p = p, .H = 1,
                        .d_h = 2};
    auto state = PerceiverState::init(cfg, 51 + p);
    std::mt19937_64 rng(61 + p);
    Tensor f = Tensor::randn({cfg.T, cfg.n, cfg.d}, rng);
    Tensor probe = Tensor::randn({cfg.m, cfg.d}, rng);

    auto loss_fn = [&] {
      return sum_all(mul_elem(video_perceiver_forward(f, state), probe));
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
}

TEST_CASE("fewer frames than configured use the leading time encodings") {
  PerceiverConfig cfg{.T = 5, .n = 2, .d = 3, .m = 2, .p = 1, .H = 1,
                      .d_h = 2};
  auto state = PerceiverState::init(cfg, 71);
  std::mt19937_64 rng(72);
  Tensor f = Tensor::randn({3, 2, 3}, rng);
  Tensor out = video_perceiver_forward(f, state);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 3);
  CHECK_THROWS_AS(
      video_perceiver_forward(Tensor::randn({6, 2, 3}, rng), state),
      ShapeError);
}
