#include "vaquita/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vaquita::kernels {

namespace {

// Work sizes below this run serially; OpenMP fork overhead dominates there.
constexpr std::size_t kParallelCutoff = 1u << 15;

constexpr double kGeluCubic = 0.044715;
const double kGeluScale = std::sqrt(2.0 / 3.14159265358979323846);

inline void softmax_row(const double* x, double* y, std::size_t c) {
  double m = x[0];
  for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    y[j] = std::exp(x[j] - m);
    s += y[j];
  }
  for (std::size_t j = 0; j < c; ++j) y[j] /= s;
}

inline void log_softmax_row(const double* x, double* y, std::size_t c) {
  double m = x[0];
  for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += std::exp(x[j] - m);
  const double lse = m + std::log(s);
  for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
}

inline void layer_norm_row_stats(const double* x, std::size_t c, double eps,
                                 double& mean, double& inv_std) {
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += x[j];
  mean = s / static_cast<double>(c);
  double v = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    const double d = x[j] - mean;
    v += d * d;
  }
  v /= static_cast<double>(c);
  inv_std = 1.0 / std::sqrt(v + eps);
}

inline double gelu_one(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_one(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  const bool par = r * k * n > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    double* ci = &c[static_cast<std::size_t>(i) * n];
    if (!acc) std::fill(ci, ci + n, 0.0);
    const double* ai = &a[static_cast<std::size_t>(i) * k];
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ai[t];
      const double* bt = &b[t * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  const bool par = r * k * n > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const double* ai = &a[static_cast<std::size_t>(i) * k];
    double* ci = &c[static_cast<std::size_t>(i) * n];
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = &b[j * k];
      double s = acc ? ci[j] : 0.0;
      for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
      ci[j] = s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  const bool par = r * k * n > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    double* ci = &c[static_cast<std::size_t>(i) * n];
    if (!acc) std::fill(ci, ci + n, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[t * r + static_cast<std::size_t>(i)];
      const double* bt = &b[t * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    softmax_row(&x[off], &y[off], c);
  }
}

void softmax_rows_bwd(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx, std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += dy[off + j] * y[off + j];
    for (std::size_t j = 0; j < c; ++j)
      dx[off + j] += y[off + j] * (dy[off + j] - s);
  }
}

void log_softmax_rows(std::span<const double> x, std::span<double> y,
                      std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    log_softmax_row(&x[off], &y[off], c);
  }
}

void log_softmax_rows_bwd(std::span<const double> logp,
                          std::span<const double> dy, std::span<double> dx,
                          std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += dy[off + j];
    for (std::size_t j = 0; j < c; ++j)
      dx[off + j] += dy[off + j] - std::exp(logp[off + j]) * s;
  }
}

void causal_softmax_rows(std::span<const double> x, std::span<double> y,
                         std::size_t n) {
  const bool par = n * n > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    const std::size_t len = static_cast<std::size_t>(i) + 1;
    softmax_row(&x[off], &y[off], len);
    for (std::size_t j = len; j < n; ++j) y[off + j] = 0.0;
  }
}

void causal_softmax_rows_bwd(std::span<const double> y,
                             std::span<const double> dy, std::span<double> dx,
                             std::size_t n) {
  const bool par = n * n > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    const std::size_t len = static_cast<std::size_t>(i) + 1;
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) s += dy[off + j] * y[off + j];
    for (std::size_t j = 0; j < len; ++j)
      dx[off + j] += y[off + j] * (dy[off + j] - s);
  }
}

void layer_norm(std::span<const double> x, std::span<const double> gamma,
                std::span<const double> beta, double eps, std::span<double> y,
                std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    double mean = 0.0, inv_std = 0.0;
    layer_norm_row_stats(&x[off], c, eps, mean, inv_std);
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = (x[off + j] - mean) * inv_std;
      y[off + j] = xhat * gamma[j] + beta[j];
    }
  }
}

void layer_norm_bwd(std::span<const double> x, std::span<const double> gamma,
                    double eps, std::span<const double> dy,
                    std::span<double> dx, std::span<double> dgamma,
                    std::span<double> dbeta, std::size_t r, std::size_t c) {
  if (!dx.empty()) {
    const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * c;
      double mean = 0.0, inv_std = 0.0;
      layer_norm_row_stats(&x[off], c, eps, mean, inv_std);
      double a = 0.0, b = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double g = dy[off + j] * gamma[j];
        const double xhat = (x[off + j] - mean) * inv_std;
        a += g;
        b += g * xhat;
      }
      a /= static_cast<double>(c);
      b /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        const double g = dy[off + j] * gamma[j];
        const double xhat = (x[off + j] - mean) * inv_std;
        dx[off + j] += inv_std * (g - a - xhat * b);
      }
    }
  }
  if (!dgamma.empty() || !dbeta.empty()) {
    std::vector<double> means(r), inv_stds(r);
    for (std::size_t i = 0; i < r; ++i)
      layer_norm_row_stats(&x[i * c], c, eps, means[i], inv_stds[i]);
    // Column reductions: one thread per column, rows ascending.
    const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(c); ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      double sg = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        const double xhat = (x[i * c + jj] - means[i]) * inv_stds[i];
        sg += dy[i * c + jj] * xhat;
        sb += dy[i * c + jj];
      }
      if (!dgamma.empty()) dgamma[jj] += sg;
      if (!dbeta.empty()) dbeta[jj] += sb;
    }
  }
}

void gelu(std::span<const double> x, std::span<double> y, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i)
    y[static_cast<std::size_t>(i)] = gelu_one(x[static_cast<std::size_t>(i)]);
}

void gelu_bwd(std::span<const double> x, std::span<const double> dy,
              std::span<double> dx, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    dx[u] += dy[u] * gelu_grad_one(x[u]);
  }
}

void tanh_elem(std::span<const double> x, std::span<double> y,
               std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i)
    y[static_cast<std::size_t>(i)] = std::tanh(x[static_cast<std::size_t>(i)]);
}

void tanh_bwd(std::span<const double> y, std::span<const double> dy,
              std::span<double> dx, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    dx[u] += dy[u] * (1.0 - y[u] * y[u]);
  }
}

void add(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    y[u] = a[u] + b[u];
  }
}

void mul(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    y[u] = a[u] * b[u];
  }
}

void mul_acc(std::span<const double> a, std::span<const double> b,
             std::span<double> y, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    y[u] += a[u] * b[u];
  }
}

void scale(std::span<const double> x, double c, std::span<double> y,
           std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i)
    y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] * c;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y,
          std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    y[u] += alpha * x[u];
  }
}

void add_scalar_acc(double c, std::span<double> y, std::size_t size) {
  const bool par = size > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(size); ++i)
    y[static_cast<std::size_t>(i)] += c;
}

void col_sum_acc(std::span<const double> x, std::span<double> out,
                 std::size_t r, std::size_t c) {
  const bool par = r * c > kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(c); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < r; ++i) s += x[i * c + static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(j)] += s;
  }
}

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace ref {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t r, std::size_t k,
               std::size_t n, bool acc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[t * r + i] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) softmax_row(&x[i * c], &y[i * c], c);
}

void log_softmax_rows(std::span<const double> x, std::span<double> y,
                      std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) log_softmax_row(&x[i * c], &y[i * c], c);
}

void causal_softmax_rows(std::span<const double> x, std::span<double> y,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(&x[i * n], &y[i * n], i + 1);
    for (std::size_t j = i + 1; j < n; ++j) y[i * n + j] = 0.0;
  }
}

void layer_norm(std::span<const double> x, std::span<const double> gamma,
                std::span<const double> beta, double eps, std::span<double> y,
                std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0, inv_std = 0.0;
    layer_norm_row_stats(&x[i * c], c, eps, mean, inv_std);
    for (std::size_t j = 0; j < c; ++j)
      y[i * c + j] = (x[i * c + j] - mean) * inv_std * gamma[j] + beta[j];
  }
}

void gelu(std::span<const double> x, std::span<double> y, std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) y[i] = gelu_one(x[i]);
}

void tanh_elem(std::span<const double> x, std::span<double> y,
               std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) y[i] = std::tanh(x[i]);
}

void add(std::span<const double> a, std::span<const double> b,
         std::span<double> y, std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) y[i] = a[i] + b[i];
}

void scale(std::span<const double> x, double c, std::span<double> y,
           std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) y[i] = x[i] * c;
}

}  // namespace ref

}  // namespace vaquita::kernels
