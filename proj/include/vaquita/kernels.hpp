#pragma once

#include <cstddef>
#include <span>

// Numeric kernels behind the tensor ops.
//
// Every kernel fixes the order of the floating-point operations that touch a
// given output element; OpenMP splits work only across output elements. The
// parallel kernels below are therefore bit-identical to the serial reference
// implementations in kernels::ref for any thread count. Full reductions to a
// single value (sum, dot) stay serial, left-to-right.

namespace vaquita::kernels {

// C(r x n) = A(r x k) * B(k x n). Accumulates into C when acc is set.
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);

// C(r x n) = A(r x k) * B(n x k)^T
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);

// C(r x n) = A(k x r)^T * B(k x n)
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);

// Row-wise softmax with max subtraction.
void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t r, std::size_t c);
// dx += J_softmax^T dy, given y = softmax(x).
void softmax_rows_bwd(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx, std::size_t r, std::size_t c);

void log_softmax_rows(std::span<const double> x, std::span<double> y,
                      std::size_t r, std::size_t c);
void log_softmax_rows_bwd(std::span<const double> logp,
                          std::span<const double> dy, std::span<double> dx,
                          std::size_t r, std::size_t c);

// Square n x n; row i is a softmax over columns [0, i], zero beyond.
void causal_softmax_rows(std::span<const double> x, std::span<double> y,
                         std::size_t n);
void causal_softmax_rows_bwd(std::span<const double> y,
                             std::span<const double> dy, std::span<double> dx,
                             std::size_t n);

// Per-row normalization with biased variance: y = (x - mean)/sqrt(var + eps)
// * gamma + beta. gamma/beta have length c.
void layer_norm(std::span<const double> x, std::span<const double> gamma,
                std::span<const double> beta, double eps, std::span<double> y,
                std::size_t r, std::size_t c);
// Recomputes row statistics from x. Accumulates into whichever of dx, dgamma,
// dbeta is non-empty.
void layer_norm_bwd(std::span<const double> x, std::span<const double> gamma,
                    double eps, std::span<const double> dy,
                    std::span<double> dx, std::span<double> dgamma,
                    std::span<double> dbeta, std::size_t r, std::size_t c);

// tanh-form gelu: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
void gelu(std::span<const double> x, std::span<double> y, std::size_t size);
void gelu_bwd(std::span<const double> x, std::span<const double> dy,
              std::span<double> dx, std::size_t size);

void tanh_elem(std::span<const double> x, std::span<double> y,
               std::size_t size);
// dx += (1 - y^2) * dy, given y = tanh(x).
void tanh_bwd(std::span<const double> y, std::span<const double> dy,
              std::span<double> dx, std::size_t size);

void add(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size);
void mul(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size);
// y += a * b, elementwise.
void mul_acc(std::span<const double> a, std::span<const double> b,
             std::span<double> y, std::size_t size);
void scale(std::span<const double> x, double c, std::span<double> y,
           std::size_t size);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y,
          std::size_t size);
// y += c
void add_scalar_acc(double c, std::span<double> y, std::size_t size);

// out[j] += sum_i x[i, j], rows ascending.
void col_sum_acc(std::span<const double> x, std::span<double> out,
                 std::size_t r, std::size_t c);

// Serial left-to-right reductions.
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);

int max_threads();

// Serial reference implementations, kept for tests and the benchmark.
namespace ref {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc = false);
void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t r, std::size_t c);
void log_softmax_rows(std::span<const double> x, std::span<double> y,
                      std::size_t r, std::size_t c);
void causal_softmax_rows(std::span<const double> x, std::span<double> y,
                         std::size_t n);
void layer_norm(std::span<const double> x, std::span<const double> gamma,
                std::span<const double> beta, double eps, std::span<double> y,
                std::size_t r, std::size_t c);
void gelu(std::span<const double> x, std::span<double> y, std::size_t size);
void tanh_elem(std::span<const double> x, std::span<double> y,
               std::size_t size);
void add(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size);
void scale(std::span<const double> x, double c, std::span<double> y,
           std::size_t size);

}  // namespace ref

}  // namespace vaquita::kernels
