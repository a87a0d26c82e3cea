#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "vaquita/errors.hpp"

namespace vaquita {

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorImpl;
struct Access;
}  // namespace detail

/// Dense row-major tensor of 64-bit floats with an optional same-shape
/// gradient buffer. A Tensor is a cheap handle onto an immutable payload;
/// copies share it. Construction rejects non-finite values and zero extents.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  /// Shape {1}.
  static Tensor scalar(double value, bool requires_grad = false);
  /// Gaussian fill, mean 0, the given stddev, drawn sequentially from rng.
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t size() const;
  /// Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double operator()(std::size_t i, std::size_t j) const;
  /// Value of a size-1 tensor.
  double item() const;

  std::span<const double> values() const;
  bool requires_grad() const;
  bool has_grad() const noexcept;
  /// Gradient buffer; ContractError when absent.
  std::span<const double> grad() const;

 private:
  friend struct detail::Access;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records primitive ops while in scope and replays their adjoints in exact
/// reverse order on backward(). Single use: a second backward() without
/// re-recording is a ContractError.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and replays the adjoints. Every recorded
  /// tensor with requires_grad ends up with a gradient buffer; those not
  /// reachable from the loss hold zeros.
  void backward(const Tensor& loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Makes this tape the recording target for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() noexcept;

 private:
  friend struct detail::Access;
  struct Node {
    std::function<void()> adjoint;
    std::vector<std::shared_ptr<detail::TensorImpl>> tracked;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Suppresses recording while alive (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* prev_;
};

// Primitive ops. All record adjoints onto the current tape when any input
// requires (or carries) gradient.

/// A(r x k) * B(k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// A(r x k) * B(n x k)^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// A(k x r)^T * B(k x n).
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
/// Square input; row i is a softmax over columns [0, i], zero beyond.
Tensor causal_softmax_rows(const Tensor& x);

/// Per-row (x - mean)/sqrt(var + eps) * gamma + beta with biased variance.
/// gamma and beta are rank-1 of length cols(x).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

/// tanh-form gelu: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
Tensor gelu(const Tensor& x);
Tensor tanh_elem(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
/// x * s where s is a size-1 tensor (differentiable in both).
Tensor scale_by(const Tensor& x, const Tensor& s);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(std::span<const Tensor> parts);
/// Rows [begin, end).
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Same element count, new shape; row-major order preserved.
Tensor reshape(const Tensor& x, Shape shape);
/// Each row of x repeated `times` times in place: row t*times+u = x[t].
Tensor repeat_rows_each(const Tensor& x, std::size_t times);
/// Adds rank-1 b (length cols(x)) to every row of x.
Tensor add_row_vector(const Tensor& x, const Tensor& b);
/// Gathers rows of table (V x d) at the given ids; each id in [0, V).
Tensor embed_lookup(const Tensor& table, std::span<const int> ids);

/// Left-to-right row-major sum, shape {1}.
Tensor sum_all(const Tensor& x);

/// Central-difference gradient of a scalar-valued function, step h per
/// coordinate. Evaluations run with recording suppressed.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace vaquita
