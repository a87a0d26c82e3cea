#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vaquita/tensor.hpp"

using namespace vaquita;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double max_rel_err(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Reverse-mode gradient of sum(op(x) * weights) checked against central
// differences.
double check_grad(const std::function<Tensor(const Tensor&)>& op, Tensor x,
                  std::mt19937_64& rng) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = Tensor::randn(op(x).shape(), rng);
  }
  Tensor x_param = Tensor::from_values(
      x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
      /*requires_grad=*/true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(mul_elem(op(x_param), probe));
  }
  tape.backward(loss);
  Tensor fd = finite_diff_grad(
      [&](const Tensor& t) {
        return sum_all(mul_elem(op(t), probe)).item();
      },
      x, 1e-5);
  return max_rel_err(x_param.grad(), fd.values());
}

}  // namespace

TEST_CASE("matmul frozen examples") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c(0, 0) == 19);
  CHECK(c(0, 1) == 22);
  CHECK(c(1, 0) == 43);
  CHECK(c(1, 1) == 50);

  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor ai = matmul(a, eye);
  CHECK(max_abs_diff(ai.values(), a.values()) == 0.0);

  Tensor s = matmul(Tensor::from_values({1, 1}, {2}),
                    Tensor::from_values({1, 1}, {3}));
  CHECK(s.item() == 6);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul associativity on random 3-chains") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t p = 1 + rng() % 6, q = 1 + rng() % 6, r = 1 + rng() % 6,
                      s = 1 + rng() % 6;
    Tensor a = Tensor::randn({p, q}, rng);
    Tensor b = Tensor::randn({q, r}, rng);
    Tensor c = Tensor::randn({r, s}, rng);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    CHECK(max_rel_err(left.values(), right.values()) < 1e-9);
  }
}

TEST_CASE("softmax frozen examples and row invariants") {
  Tensor u = softmax_rows(Tensor::from_values({1, 3}, {0, 0, 0}));
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(u(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor v = softmax_rows(Tensor::from_values({1, 2}, {std::log(2.0), 0.0}));
  CHECK(v(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(v(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor w = softmax_rows(Tensor::from_values({1, 1}, {-7.25}));
  CHECK(w.item() == 1.0);

  std::mt19937_64 rng(9);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t r = 1 + rng() % 6, c = 1 + rng() % 6;
    Tensor y = softmax_rows(Tensor::randn({r, c}, rng, 3.0));
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(y(i, j) > 0.0);
        CHECK(y(i, j) <= 1.0);
        s += y(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm frozen examples") {
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});
  Tensor y = layer_norm(Tensor::from_values({1, 2}, {1, 3}), gamma, beta,
                        1e-12);
  CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor constant = layer_norm(Tensor::full({2, 3}, 4.2), Tensor::full({3}, 1.0),
                               Tensor::zeros({3}), 0.5);
  for (double v : constant.values()) CHECK(v == 0.0);

  // Affine shift in beta is exact.
  std::mt19937_64 rng(13);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor g4 = Tensor::randn({4}, rng);
  Tensor b4 = Tensor::randn({4}, rng);
  Tensor with_beta = layer_norm(x, g4, b4, 1e-5);
  Tensor without = layer_norm(x, g4, Tensor::zeros({4}), 1e-5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(with_beta(i, j) == without(i, j) + b4.values()[j]);

  // Rows have near-zero mean with gamma=1, beta=0.
  Tensor n = layer_norm(Tensor::randn({5, 6}, rng, 2.0), Tensor::full({6}, 1.0),
                        Tensor::zeros({6}), 1e-5);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mean += n(i, j);
    CHECK(std::abs(mean / 6.0) < 1e-10);
  }

  CHECK_THROWS_AS(layer_norm(x, g4, b4, 0.0), ContractError);
}

TEST_CASE("gelu and tanh frozen examples") {
  Tensor z = gelu(Tensor::from_values({1, 1}, {0.0}));
  CHECK(z.item() == 0.0);
  Tensor big = gelu(Tensor::from_values({1, 1}, {10.0}));
  CHECK(big.item() == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(tanh_elem(Tensor::from_values({1, 1}, {0.0})).item() == 0.0);
}

TEST_CASE("backward frozen examples") {
  // loss = sum(A) -> grad(A) = ones
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum_all(a));
  }
  for (double g : a.grad()) CHECK(g == 1.0);

  // loss = sum(A*B) -> grad(A) = ones * B^T, hand-checked on 2x2
  Tensor a2 = Tensor::from_values({2, 2}, {1, 2, 3, 4}, true);
  Tensor b2 = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  Tape tape2;
  {
    Tape::Scope scope(tape2);
    tape2.backward(sum_all(matmul(a2, b2)));
  }
  // d/dA sum(AB) = ones(2x2) B^T = [[11, 15], [11, 15]]
  CHECK(a2.grad()[0] == 11.0);
  CHECK(a2.grad()[1] == 15.0);
  CHECK(a2.grad()[2] == 11.0);
  CHECK(a2.grad()[3] == 15.0);
  CHECK_FALSE(b2.has_grad());  // detached input: no gradient buffer
}

TEST_CASE("backward contract errors") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(a);
  }
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);

  Tape tape2;
  Tensor vec;
  {
    Tape::Scope scope(tape2);
    vec = scale(a, 2.0);
  }
  CHECK_THROWS_AS(tape2.backward(vec), ContractError);
}

TEST_CASE("tensors unreachable from the loss hold zero gradients") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tensor b = Tensor::from_values({2}, {3, 4}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    Tensor unused = scale(b, 3.0);  // recorded, but not part of the loss
    loss = sum_all(a);
  }
  tape.backward(loss);
  REQUIRE(b.has_grad());
  for (double g : b.grad()) CHECK(g == 0.0);
}

TEST_CASE("non-finite forward results are rejected") {
  CHECK_THROWS_AS(
      Tensor::from_values({1}, {std::numeric_limits<double>::infinity()}),
      NumericError);
  Tensor huge = Tensor::from_values({1, 1}, {1e308});
  CHECK_THROWS_AS(scale(huge, 1e10), NumericError);
  CHECK_THROWS_AS(matmul(huge, huge), NumericError);
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(concat_rows(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})),
                  ShapeError);
  CHECK_THROWS_AS(slice_rows(Tensor::zeros({2, 2}), 1, 3), ShapeError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 2}), {3, 2}), ShapeError);
  CHECK_THROWS_AS(causal_softmax_rows(Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(embed_lookup(Tensor::zeros({3, 2}), std::vector<int>{3}),
                  ContractError);
}

TEST_CASE("finite_diff_grad frozen examples") {
  // f = sum of squares at [1, 2]: analytic gradient 2x
  Tensor x = Tensor::from_values({2}, {1, 2});
  Tensor g = finite_diff_grad(
      [](const Tensor& t) { return sum_all(mul_elem(t, t)).item(); }, x, 1e-5);
  CHECK(g.values()[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g.values()[1] == doctest::Approx(4.0).epsilon(1e-6));

  // constant function -> zero vector
  Tensor zg = finite_diff_grad([](const Tensor&) { return 3.5; }, x, 1e-5);
  for (double v : zg.values()) CHECK(v == 0.0);

  // softmax-then-first-entry on [0, 0]: analytic Jacobian row (1/4, -1/4)
  Tensor origin = Tensor::from_values({1, 2}, {0, 0});
  Tensor sg = finite_diff_grad(
      [](const Tensor& t) { return softmax_rows(t)(0, 0); }, origin, 1e-5);
  CHECK(sg.values()[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(sg.values()[1] == doctest::Approx(-0.25).epsilon(1e-6));

  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0),
                  ContractError);
}

TEST_CASE("every primitive op matches finite differences") {
  std::mt19937_64 rng(101);
  const double tol = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    const std::size_t r = 2 + rng() % 4, c = 2 + rng() % 4;
    Tensor x = Tensor::randn({r, c}, rng);

    CHECK(check_grad([](const Tensor& t) { return softmax_rows(t); }, x, rng) <
          tol);
    CHECK(check_grad([](const Tensor& t) { return log_softmax_rows(t); }, x,
                     rng) < tol);
    CHECK(check_grad([](const Tensor& t) { return gelu(t); }, x, rng) < tol);
    CHECK(check_grad([](const Tensor& t) { return tanh_elem(t); }, x, rng) <
          tol);
    CHECK(check_grad([](const Tensor& t) { return scale(t, -1.7); }, x, rng) <
          tol);
    CHECK(check_grad(
              [](const Tensor& t) { return reshape(t, {t.size(), 1}); }, x,
              rng) < tol);
    CHECK(check_grad([](const Tensor& t) { return repeat_rows_each(t, 3); },
                     x, rng) < tol);
    CHECK(check_grad(
              [](const Tensor& t) { return slice_rows(t, 1, t.rows()); }, x,
              rng) < tol);

    Tensor square = Tensor::randn({r, r}, rng);
    CHECK(check_grad([](const Tensor& t) { return causal_softmax_rows(t); },
                     square, rng) < tol);

    Tensor other = Tensor::randn({r, c}, rng);
    CHECK(check_grad([&](const Tensor& t) { return add(t, other); }, x, rng) <
          tol);
    CHECK(check_grad([&](const Tensor& t) { return mul_elem(t, other); }, x,
                     rng) < tol);
    CHECK(check_grad([&](const Tensor& t) { return concat_rows(t, other); },
                     x, rng) < tol);
    CHECK(check_grad(
              [&](const Tensor& t) {
                return concat_cols(std::vector<Tensor>{t, other});
              },
              x, rng) < tol);

    Tensor rhs = Tensor::randn({c, 3}, rng);
    CHECK(check_grad([&](const Tensor& t) { return matmul(t, rhs); }, x, rng) <
          tol);
    CHECK(check_grad([&](const Tensor& t) { return matmul_tn(t, x); },
                     Tensor::randn({r, c}, rng), rng) < tol);
    Tensor nt = Tensor::randn({4, c}, rng);
    CHECK(check_grad([&](const Tensor& t) { return matmul_nt(t, nt); }, x,
                     rng) < tol);

    Tensor gamma = Tensor::randn({c}, rng);
    Tensor beta = Tensor::randn({c}, rng);
    CHECK(check_grad(
              [&](const Tensor& t) { return layer_norm(t, gamma, beta, 1e-3); },
              x, rng) < tol);
    CHECK(check_grad(
              [&](const Tensor& t) {
                return layer_norm(x, t, beta, 1e-3);
              },
              gamma, rng) < tol);
    CHECK(check_grad(
              [&](const Tensor& t) {
                return layer_norm(x, gamma, t, 1e-3);
              },
              beta, rng) < tol);
    CHECK(check_grad([&](const Tensor& t) { return add_row_vector(x, t); },
                     beta, rng) < tol);

    Tensor gate = Tensor::randn({1}, rng);
    CHECK(check_grad([&](const Tensor& t) { return scale_by(x, t); }, gate,
                     rng) < tol);
    CHECK(check_grad([&](const Tensor& t) { return scale_by(t, gate); }, x,
                     rng) < tol);

    const std::vector<int> ids = {0, static_cast<int>(r - 1), 0};
    CHECK(check_grad([&](const Tensor& t) { return embed_lookup(t, ids); }, x,
                     rng) < tol);
  }
}

TEST_CASE("matmul gradient flows to both operands") {
  std::mt19937_64 rng(7);
  Tensor a = Tensor::randn({3, 2}, rng, 1.0, true);
  Tensor b = Tensor::randn({2, 4}, rng, 1.0, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(gelu(matmul(a, b)));
  }
  tape.backward(loss);
  REQUIRE(a.has_grad());
  REQUIRE(b.has_grad());

  Tensor fd_a = finite_diff_grad(
      [&](const Tensor& t) { return sum_all(gelu(matmul(t, b))).item(); }, a,
      1e-5);
  Tensor fd_b = finite_diff_grad(
      [&](const Tensor& t) { return sum_all(gelu(matmul(a, t))).item(); }, b,
      1e-5);
  CHECK(max_rel_err(a.grad(), fd_a.values()) < 1e-5);
  CHECK(max_rel_err(b.grad(), fd_b.values()) < 1e-5);
}
