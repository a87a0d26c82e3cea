#include "vaquita/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <utility>

#include "vaquita/kernels.hpp"

namespace vaquita {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty = absent
  bool requires_grad = false;
};

struct Access {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) {
    return t.impl_;
  }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }
  static void record(Tape& tape, Tape::Node node) {
    tape.nodes_.push_back(std::move(node));
  }
};

}  // namespace detail

using detail::Access;
using detail::TensorImpl;

namespace {

thread_local Tape* t_current_tape = nullptr;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive");
    if (e > std::numeric_limits<std::size_t>::max() / n)
      throw ShapeError("tensor extent product overflows");
    n *= e;
  }
  return n;
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

Tensor make_tensor(Shape shape, std::vector<double> data, const char* op) {
  const std::size_t n = checked_element_count(shape);
  if (n != data.size())
    throw ShapeError(std::string(op) + ": shape " + shape_str(shape) +
                     " does not match element count");
  check_finite(data, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Access::wrap(std::move(impl));
}

bool flows(const Tensor& t) {
  return t.defined() && Access::impl(t)->requires_grad;
}

// Records an adjoint for `out` when a tape is active and any input carries
// gradient. `tracked` gets zero-filled gradient buffers before replay.
void maybe_record(std::initializer_list<Tensor> inputs, Tensor& out,
                  std::function<void()> adjoint) {
  Tape* tape = Tape::current();
  if (!tape) return;
  bool any = false;
  for (const Tensor& t : inputs) any = any || flows(t);
  if (!any) return;
  auto& oi = Access::impl(out);
  oi->requires_grad = true;
  Tape::Node node;
  node.adjoint = std::move(adjoint);
  node.tracked.push_back(oi);
  for (const Tensor& t : inputs)
    if (flows(t)) node.tracked.push_back(Access::impl(t));
  Access::record(*tape, std::move(node));
}

void require_rank2(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 2)
    throw ShapeError(std::string(what) + " must be a rank-2 tensor");
}

void require_vector(const Tensor& t, std::size_t len, const char* what) {
  if (!t.defined() || t.rank() != 1 || t.size() != len)
    throw ShapeError(std::string(what) + " must be rank-1 of length " +
                     std::to_string(len));
}

std::span<double> grad_span(const std::shared_ptr<TensorImpl>& impl) {
  return {impl->grad.data(), impl->grad.size()};
}

std::span<const double> data_span(const std::shared_ptr<TensorImpl>& impl) {
  return {impl->data.data(), impl->data.size()};
}

}  // namespace

// ---------------------------------------------------------------- Tensor --

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  Tensor t = make_tensor(std::move(shape), std::move(values), "from_values");
  Access::impl(t)->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = checked_element_count(shape);
  return from_values(std::move(shape), std::vector<double>(n, 0.0),
                     requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = checked_element_count(shape);
  return from_values(std::move(shape), std::vector<double>(n, value),
                     requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  const std::size_t n = checked_element_count(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::size() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data.size();
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2");
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2");
  return impl_->shape[1];
}

double Tensor::operator()(std::size_t i, std::size_t j) const {
  if (i >= rows() || j >= cols())
    throw ShapeError("tensor element index out of range");
  return impl_->data[i * cols() + j];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item(): tensor is not size-1");
  return impl_->data[0];
}

std::span<const double> Tensor::values() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return {impl_->data.data(), impl_->data.size()};
}

bool Tensor::requires_grad() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->requires_grad;
}

bool Tensor::has_grad() const noexcept {
  return impl_ && !impl_->grad.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad())
    throw ContractError("tensor has no gradient buffer");
  return {impl_->grad.data(), impl_->grad.size()};
}

// ------------------------------------------------------------------ Tape --

Tape* Tape::current() noexcept { return t_current_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(t_current_tape) {
  t_current_tape = &tape;
}

Tape::Scope::~Scope() { t_current_tape = prev_; }

NoGradGuard::NoGradGuard() : prev_(t_current_tape) { t_current_tape = nullptr; }

NoGradGuard::~NoGradGuard() { t_current_tape = prev_; }

void Tape::backward(const Tensor& loss) {
  if (consumed_)
    throw ContractError(
        "backward() already ran on this tape; re-record the forward pass");
  consumed_ = true;
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() requires a scalar loss");

  for (auto& node : nodes_) {
    for (auto& impl : node.tracked) {
      if (impl->grad.size() != impl->data.size())
        impl->grad.assign(impl->data.size(), 0.0);
      else
        std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
    }
  }
  auto& li = Access::impl(loss);
  if (li->grad.size() != 1) li->grad.assign(1, 0.0);
  li->grad[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->adjoint();
}

// ------------------------------------------------------------------- ops --

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul: A");
  require_rank2(b, "matmul: B");
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions disagree: " +
                     shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<double> out(r * n);
  kernels::matmul_nn(a.values(), b.values(), out, r, k, n);
  Tensor y = make_tensor({r, n}, std::move(out), "matmul");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, r, k, n] {
    if (ai->requires_grad)
      kernels::matmul_nt(grad_span(yi), data_span(bi), grad_span(ai), r, n, k,
                         true);
    if (bi->requires_grad)
      kernels::matmul_tn(data_span(ai), grad_span(yi), grad_span(bi), k, r, n,
                         true);
  });
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt: A");
  require_rank2(b, "matmul_nt: B");
  const std::size_t r = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: inner dimensions disagree: " +
                     shape_str(a.shape()) + " * " + shape_str(b.shape()) +
                     "^T");
  std::vector<double> out(r * n);
  kernels::matmul_nt(a.values(), b.values(), out, r, k, n);
  Tensor y = make_tensor({r, n}, std::move(out), "matmul_nt");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, r, k, n] {
    if (ai->requires_grad)
      kernels::matmul_nn(grad_span(yi), data_span(bi), grad_span(ai), r, n, k,
                         true);
    if (bi->requires_grad)
      kernels::matmul_tn(grad_span(yi), data_span(ai), grad_span(bi), n, r, k,
                         true);
  });
  return y;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn: A");
  require_rank2(b, "matmul_tn: B");
  const std::size_t r = a.cols(), k = a.rows(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul_tn: inner dimensions disagree: " +
                     shape_str(a.shape()) + "^T * " + shape_str(b.shape()));
  std::vector<double> out(r * n);
  kernels::matmul_tn(a.values(), b.values(), out, r, k, n);
  Tensor y = make_tensor({r, n}, std::move(out), "matmul_tn");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, r, k, n] {
    if (ai->requires_grad)
      kernels::matmul_nt(data_span(bi), grad_span(yi), grad_span(ai), k, n, r,
                         true);
    if (bi->requires_grad)
      kernels::matmul_nn(data_span(ai), grad_span(yi), grad_span(bi), k, r, n,
                         true);
  });
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows: input");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  kernels::softmax_rows(x.values(), out, r, c);
  Tensor y = make_tensor({r, c}, std::move(out), "softmax_rows");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, r, c] {
    if (xi->requires_grad)
      kernels::softmax_rows_bwd(data_span(yi), grad_span(yi), grad_span(xi), r,
                                c);
  });
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank2(x, "log_softmax_rows: input");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  kernels::log_softmax_rows(x.values(), out, r, c);
  Tensor y = make_tensor({r, c}, std::move(out), "log_softmax_rows");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, r, c] {
    if (xi->requires_grad)
      kernels::log_softmax_rows_bwd(data_span(yi), grad_span(yi),
                                    grad_span(xi), r, c);
  });
  return y;
}

Tensor causal_softmax_rows(const Tensor& x) {
  require_rank2(x, "causal_softmax_rows: input");
  if (x.rows() != x.cols())
    throw ShapeError("causal_softmax_rows: input must be square");
  const std::size_t n = x.rows();
  std::vector<double> out(n * n);
  kernels::causal_softmax_rows(x.values(), out, n);
  Tensor y = make_tensor({n, n}, std::move(out), "causal_softmax_rows");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, n] {
    if (xi->requires_grad)
      kernels::causal_softmax_rows_bwd(data_span(yi), grad_span(yi),
                                       grad_span(xi), n);
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank2(x, "layer_norm: input");
  const std::size_t r = x.rows(), c = x.cols();
  require_vector(gamma, c, "layer_norm: gamma");
  require_vector(beta, c, "layer_norm: beta");
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be > 0");
  std::vector<double> out(r * c);
  kernels::layer_norm(x.values(), gamma.values(), beta.values(), eps, out, r,
                      c);
  Tensor y = make_tensor({r, c}, std::move(out), "layer_norm");
  auto xi = Access::impl(x), gi = Access::impl(gamma), bi = Access::impl(beta),
       yi = Access::impl(y);
  maybe_record({x, gamma, beta}, y, [xi, gi, bi, yi, eps, r, c] {
    kernels::layer_norm_bwd(
        data_span(xi), data_span(gi), eps, grad_span(yi),
        xi->requires_grad ? grad_span(xi) : std::span<double>{},
        gi->requires_grad ? grad_span(gi) : std::span<double>{},
        bi->requires_grad ? grad_span(bi) : std::span<double>{}, r, c);
  });
  return y;
}

Tensor gelu(const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  kernels::gelu(x.values(), out, n);
  Tensor y = make_tensor(x.shape(), std::move(out), "gelu");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, n] {
    if (xi->requires_grad)
      kernels::gelu_bwd(data_span(xi), grad_span(yi), grad_span(xi), n);
  });
  return y;
}

Tensor tanh_elem(const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  kernels::tanh_elem(x.values(), out, n);
  Tensor y = make_tensor(x.shape(), std::move(out), "tanh_elem");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, n] {
    if (xi->requires_grad)
      kernels::tanh_bwd(data_span(yi), grad_span(yi), grad_span(xi), n);
  });
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t n = a.size();
  std::vector<double> out(n);
  kernels::add(a.values(), b.values(), out, n);
  Tensor y = make_tensor(a.shape(), std::move(out), "add");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, n] {
    if (ai->requires_grad) kernels::axpy(1.0, grad_span(yi), grad_span(ai), n);
    if (bi->requires_grad) kernels::axpy(1.0, grad_span(yi), grad_span(bi), n);
  });
  return y;
}

Tensor mul_elem(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul_elem: shapes disagree: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  const std::size_t n = a.size();
  std::vector<double> out(n);
  kernels::mul(a.values(), b.values(), out, n);
  Tensor y = make_tensor(a.shape(), std::move(out), "mul_elem");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, n] {
    if (ai->requires_grad)
      kernels::mul_acc(grad_span(yi), data_span(bi), grad_span(ai), n);
    if (bi->requires_grad)
      kernels::mul_acc(grad_span(yi), data_span(ai), grad_span(bi), n);
  });
  return y;
}

Tensor scale(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  const std::size_t n = x.size();
  std::vector<double> out(n);
  kernels::scale(x.values(), c, out, n);
  Tensor y = make_tensor(x.shape(), std::move(out), "scale");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, c, n] {
    if (xi->requires_grad) kernels::axpy(c, grad_span(yi), grad_span(xi), n);
  });
  return y;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale_by: s must be size-1");
  const double sv = s.values()[0];
  const std::size_t n = x.size();
  std::vector<double> out(n);
  kernels::scale(x.values(), sv, out, n);
  Tensor y = make_tensor(x.shape(), std::move(out), "scale_by");
  auto xi = Access::impl(x), si = Access::impl(s), yi = Access::impl(y);
  maybe_record({x, s}, y, [xi, si, yi, sv, n] {
    if (xi->requires_grad) kernels::axpy(sv, grad_span(yi), grad_span(xi), n);
    if (si->requires_grad)
      si->grad[0] += kernels::dot(grad_span(yi), data_span(xi));
  });
  return y;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_rows: A");
  require_rank2(b, "concat_rows: B");
  if (a.cols() != b.cols())
    throw ShapeError("concat_rows: column counts disagree");
  const std::size_t ra = a.rows(), rb = b.rows(), c = a.cols();
  std::vector<double> out(( ra + rb) * c);
  std::memcpy(out.data(), a.values().data(), ra * c * sizeof(double));
  std::memcpy(out.data() + ra * c, b.values().data(), rb * c * sizeof(double));
  Tensor y = make_tensor({ra + rb, c}, std::move(out), "concat_rows");
  auto ai = Access::impl(a), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({a, b}, y, [ai, bi, yi, ra, rb, c] {
    if (ai->requires_grad)
      kernels::axpy(1.0, std::span<const double>{yi->grad.data(), ra * c},
                    grad_span(ai), ra * c);
    if (bi->requires_grad)
      kernels::axpy(1.0,
                    std::span<const double>{yi->grad.data() + ra * c, rb * c},
                    grad_span(bi), rb * c);
  });
  return y;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols: part");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts disagree");
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::memcpy(out.data() + i * total + off, p.values().data() + i * pc,
                  pc * sizeof(double));
    off += pc;
  }
  Tensor y = make_tensor({r, total}, std::move(out), "concat_cols");
  std::vector<std::shared_ptr<TensorImpl>> impls;
  bool any = false;
  for (const Tensor& p : parts) {
    impls.push_back(Access::impl(p));
    any = any || flows(p);
  }
  Tape* tape = Tape::current();
  if (tape && any) {
    auto yi = Access::impl(y);
    yi->requires_grad = true;
    Tape::Node node;
    node.tracked.push_back(yi);
    for (auto& impl : impls)
      if (impl->requires_grad) node.tracked.push_back(impl);
    node.adjoint = [impls, yi, r, total] {
      std::size_t off = 0;
      for (auto& impl : impls) {
        const std::size_t pc = impl->shape[1];
        if (impl->requires_grad) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              impl->grad[i * pc + j] += yi->grad[i * total + off + j];
        }
        off += pc;
      }
    };
    Access::record(*tape, std::move(node));
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows: input");
  if (begin >= end || end > x.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of bounds for " +
                     std::to_string(x.rows()) + " rows");
  const std::size_t c = x.cols(), r = end - begin;
  std::vector<double> out(r * c);
  std::memcpy(out.data(), x.values().data() + begin * c,
              r * c * sizeof(double));
  Tensor y = make_tensor({r, c}, std::move(out), "slice_rows");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, begin, r, c] {
    if (xi->requires_grad)
      kernels::axpy(1.0, grad_span(yi),
                    std::span<double>{xi->grad.data() + begin * c, r * c},
                    r * c);
  });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  const std::size_t n = checked_element_count(shape);
  if (n != x.size())
    throw ShapeError("reshape: element count changes from " +
                     std::to_string(x.size()) + " to " + std::to_string(n));
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor y = make_tensor(std::move(shape), std::move(out), "reshape");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, n] {
    if (xi->requires_grad) kernels::axpy(1.0, grad_span(yi), grad_span(xi), n);
  });
  return y;
}

Tensor repeat_rows_each(const Tensor& x, std::size_t times) {
  require_rank2(x, "repeat_rows_each: input");
  if (times == 0) throw ContractError("repeat_rows_each: times must be >= 1");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * times * c);
  for (std::size_t t = 0; t < r; ++t)
    for (std::size_t u = 0; u < times; ++u)
      std::memcpy(out.data() + (t * times + u) * c, x.values().data() + t * c,
                  c * sizeof(double));
  Tensor y = make_tensor({r * times, c}, std::move(out), "repeat_rows_each");
  auto xi = Access::impl(x), yi = Access::impl(y);
  maybe_record({x}, y, [xi, yi, times, r, c] {
    if (!xi->requires_grad) return;
    for (std::size_t t = 0; t < r; ++t)
      for (std::size_t u = 0; u < times; ++u)
        for (std::size_t j = 0; j < c; ++j)
          xi->grad[t * c + j] += yi->grad[(t * times + u) * c + j];
  });
  return y;
}

Tensor add_row_vector(const Tensor& x, const Tensor& b) {
  require_rank2(x, "add_row_vector: input");
  const std::size_t r = x.rows(), c = x.cols();
  require_vector(b, c, "add_row_vector: b");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = x.values()[i * c + j] + b.values()[j];
  Tensor y = make_tensor({r, c}, std::move(out), "add_row_vector");
  auto xi = Access::impl(x), bi = Access::impl(b), yi = Access::impl(y);
  maybe_record({x, b}, y, [xi, bi, yi, r, c] {
    if (xi->requires_grad)
      kernels::axpy(1.0, grad_span(yi), grad_span(xi), r * c);
    if (bi->requires_grad)
      kernels::col_sum_acc(grad_span(yi), grad_span(bi), r, c);
  });
  return y;
}

Tensor embed_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embed_lookup: table");
  if (ids.empty()) throw ContractError("embed_lookup: empty id list");
  const std::size_t v = table.rows(), d = table.cols(), s = ids.size();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw ContractError("embed_lookup: id " + std::to_string(id) +
                          " out of range [0, " + std::to_string(v) + ")");
  std::vector<double> out(s * d);
  for (std::size_t i = 0; i < s; ++i)
    std::memcpy(out.data() + i * d,
                table.values().data() + static_cast<std::size_t>(ids[i]) * d,
                d * sizeof(double));
  Tensor y = make_tensor({s, d}, std::move(out), "embed_lookup");
  auto ti = Access::impl(table), yi = Access::impl(y);
  std::vector<int> ids_copy(ids.begin(), ids.end());
  maybe_record({table}, y, [ti, yi, ids_copy, d] {
    if (!ti->requires_grad) return;
    for (std::size_t i = 0; i < ids_copy.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(ids_copy[i]);
      for (std::size_t j = 0; j < d; ++j)
        ti->grad[row * d + j] += yi->grad[i * d + j];
    }
  });
  return y;
}

Tensor sum_all(const Tensor& x) {
  const double s = kernels::sum(x.values());
  Tensor y = make_tensor({1}, {s}, "sum_all");
  auto xi = Access::impl(x), yi = Access::impl(y);
  const std::size_t n = x.size();
  maybe_record({x}, y, [xi, yi, n] {
    if (xi->requires_grad)
      kernels::add_scalar_acc(yi->grad[0], grad_span(xi), n);
  });
  return y;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0)) throw ContractError("finite_diff_grad: h must be > 0");
  NoGradGuard no_grad;
  std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> g(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> prt = base;
    prt[i] = base[i] + h;
    const double fp = f(Tensor::from_values(x.shape(), std::move(prt)));
    std::vector<double> mrt = base;
    mrt[i] = base[i] - h;
    const double fm = f(Tensor::from_values(x.shape(), std::move(mrt)));
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite evaluation");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::from_values(x.shape(), std::move(g));
}

int cli_exit_code(const std::exception& e) noexcept {
  if (dynamic_cast<const FormatError*>(&e)) return 2;
  if (dynamic_cast<const ContractError*>(&e)) return 2;
  if (dynamic_cast<const DegenerateInputError*>(&e)) return 3;
  if (dynamic_cast<const ShapeError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e)) return 5;
  return 1;
}

}  // namespace vaquita
