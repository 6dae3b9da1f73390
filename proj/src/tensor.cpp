#include "smtl/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smtl/errors.hpp"

namespace smtl {

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
};

namespace {
std::atomic<std::uint64_t> next_id{1};
std::atomic<bool> sigmoid_fault{false};
}  // namespace

}  // namespace detail

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

[[maybe_unused]] void debug_check_no_nan(const Tensor& t, std::string_view op) {
#ifndef NDEBUG
  for (double v : t.values()) assert(!std::isnan(v) && "NaN in forward pass");
  (void)op;
#else
  (void)t;
  (void)op;
#endif
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, std::string_view op) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_string(a.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  const auto n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (element_count(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " + std::to_string(values.size()) +
                     " values");
  }
  auto data = std::make_shared<detail::TensorData>();
  data->shape = std::move(shape);
  data->values = std::move(values);
  data->requires_grad = requires_grad;
  data->id = detail::next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(data));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return data_->shape; }
std::size_t Tensor::size() const { return data_->values.size(); }

std::size_t Tensor::rows() const { return ndim() == 1 ? 1 : shape()[0]; }
std::size_t Tensor::cols() const { return ndim() == 1 ? shape()[0] : size() / shape()[0]; }

std::span<const double> Tensor::values() const { return data_->values; }
std::span<double> Tensor::mutable_values() { return data_->values; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  return data_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data_->values[r * cols() + c]; }

bool Tensor::requires_grad() const { return data_ && data_->requires_grad; }
void Tensor::set_requires_grad(bool on) { data_->requires_grad = on; }
bool Tensor::has_grad() const { return !data_->grad.empty(); }
std::span<const double> Tensor::grad() const { return data_->grad; }

std::span<double> Tensor::mutable_grad() const {
  if (data_->grad.empty()) data_->grad.assign(data_->values.size(), 0.0);
  return data_->grad;
}

void Tensor::zero_grad() const {
  if (!data_->grad.empty()) std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

std::uint64_t Tensor::id() const { return data_->id; }

Tensor Tensor::clone() const { return from(data_->shape, data_->values, data_->requires_grad); }

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
#ifndef NDEBUG
  for (const auto& in : inputs) {
    if (!in.defined()) throw ContractError(std::string(op) + ": undefined input");
  }
#endif
  debug_check_no_nan(output, op);
  entries_.push_back(Entry{std::string(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward: root must be a scalar tensor, got " +
                        (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  }
  const auto produced = std::find_if(entries_.rbegin(), entries_.rend(),
                                     [&](const Entry& e) { return e.output.id() == root.id(); });
  if (produced == entries_.rend()) throw ContractError("backward: root was not produced on this tape");

  Tensor seed = root;
  seed.mutable_grad()[0] = 1.0;
  for (auto it = produced; it != entries_.rend(); ++it) {
    if (!it->output.has_grad() || !it->backward) continue;
    it->backward();
  }
#ifndef NDEBUG
  for (const auto& e : entries_) {
    for (const auto& in : e.inputs) {
      for (double g : in.grad()) assert(!std::isnan(g) && "NaN in backward pass");
    }
  }
#endif
}

// ---------------------------------------------------------------------------
// Scalar helpers

double stable_sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace fault {
void corrupt_sigmoid_backward(bool on) { detail::sigmoid_fault.store(on); }
bool sigmoid_backward_corrupted() { return detail::sigmoid_fault.load(); }
}  // namespace fault

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n}, any_requires_grad({&a, &b}));
  auto o = out.mutable_values();
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  if (!out.requires_grad()) return out;
  tape.record("matmul", {a, b}, out, [a, b, out, m, k, n]() mutable {
    const auto g = out.grad();
    if (a.requires_grad()) {
      // dA = G * B^T
      auto ga = a.mutable_grad();
      const auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      // dB = A^T * G
      auto gb = b.mutable_grad();
      const auto av = a.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m}, a.requires_grad());
  auto o = out.mutable_values();
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = av[i * n + j];
  if (!out.requires_grad()) return out;
  tape.record("transpose", {a}, out, [a, out, m, n]() mutable {
    const auto g = out.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_matrix(x, "linear");
  require_matrix(weight, "linear");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  }
  if (bias.size() != out_dim) {
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  }
  Tensor out = Tensor::zeros({batch, out_dim}, any_requires_grad({&x, &weight, &bias}));
  auto o = out.mutable_values();
  const auto xv = x.values(), wv = weight.values(), bv = bias.values();

  // Row-major weight^T so the inner loop is a contiguous axpy.
  std::vector<double> wt(in * out_dim);
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < in; ++c) wt[c * out_dim + r] = wv[r * in + c];
  for (std::size_t i = 0; i < batch; ++i) {
    double* orow = &o[i * out_dim];
    std::copy(bv.begin(), bv.end(), orow);
    for (std::size_t c = 0; c < in; ++c) {
      const double xic = xv[i * in + c];
      const double* wrow = &wt[c * out_dim];
      for (std::size_t r = 0; r < out_dim; ++r) orow[r] += xic * wrow[r];
    }
  }
  if (!out.requires_grad()) return out;
  tape.record("linear", {x, weight, bias}, out, [x, weight, bias, out, batch, in, out_dim]() mutable {
    const auto g = out.grad();
    if (x.requires_grad()) {
      auto gx = x.mutable_grad();
      const auto wv = weight.values();
      for (std::size_t i = 0; i < batch; ++i) {
        double* gxrow = &gx[i * in];
        for (std::size_t r = 0; r < out_dim; ++r) {
          const double gir = g[i * out_dim + r];
          if (gir == 0.0) continue;
          const double* wrow = &wv[r * in];
          for (std::size_t c = 0; c < in; ++c) gxrow[c] += gir * wrow[c];
        }
      }
    }
    if (weight.requires_grad()) {
      auto gw = weight.mutable_grad();
      const auto xv = x.values();
      for (std::size_t i = 0; i < batch; ++i) {
        const double* xrow = &xv[i * in];
        for (std::size_t r = 0; r < out_dim; ++r) {
          const double gir = g[i * out_dim + r];
          if (gir == 0.0) continue;
          double* gwrow = &gw[r * in];
          for (std::size_t c = 0; c < in; ++c) gwrow[c] += gir * xrow[c];
        }
      }
    }
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t r = 0; r < out_dim; ++r) gb[r] += g[i * out_dim + r];
    }
  });
  return out;
}

namespace {

template <typename Forward, typename GradA, typename GradB>
Tensor binary_op(Tape& tape, std::string_view name, const Tensor& a, const Tensor& b, Forward f, GradA da,
                 GradB db) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape(), any_requires_grad({&a, &b}));
  auto o = out.mutable_values();
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(av[i], bv[i]);
  if (!out.requires_grad()) return out;
  tape.record(name, {a, b}, out, [a, b, out, da, db]() mutable {
    const auto g = out.grad();
    const auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(av[i], bv[i]);
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(av[i], bv[i]);
    }
  });
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (!out.requires_grad()) return out;
  tape.record("relu", {a}, out, [a, out]() mutable {
    const auto g = out.grad();
    const auto av = a.values();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > 0.0) ga[i] += g[i];
    }
  });
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_sigmoid(av[i]);
  if (!out.requires_grad()) return out;
  tape.record("sigmoid", {a}, out, [a, out]() mutable {
    const auto g = out.grad();
    const auto s = out.values();
    auto ga = a.mutable_grad();
    const bool corrupt = fault::sigmoid_backward_corrupted();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double local = corrupt ? s[i] : s[i] * (1.0 - s[i]);
      ga[i] += g[i] * local;
    }
  });
  return out;
}

Tensor log(Tape& tape, const Tensor& a) {
  const auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(av[i]) + " at flat index " + std::to_string(i));
    }
  }
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(av[i]);
  if (!out.requires_grad()) return out;
  tape.record("log", {a}, out, [a, out]() mutable {
    const auto g = out.grad();
    const auto av = a.values();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  if (!out.requires_grad()) return out;
  tape.record("scale", {a}, out, [a, out, factor]() mutable {
    const auto g = out.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc, a.requires_grad());
  if (!out.requires_grad()) return out;
  tape.record("sum", {a}, out, [a, out]() mutable {
    const double g = out.grad()[0];
    for (double& ga : a.mutable_grad()) ga += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) { return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size())); }

Tensor elementwise(Tape& tape, UnaryOp op, const Tensor& a) {
  switch (op) {
    case UnaryOp::relu:
      return relu(tape, a);
    case UnaryOp::sigmoid:
      return sigmoid(tape, a);
    case UnaryOp::log:
      return log(tape, a);
  }
  throw ContractError("elementwise: unknown unary op");
}

Tensor elementwise(Tape& tape, BinaryOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case BinaryOp::add:
      return add(tape, a, b);
    case BinaryOp::sub:
      return sub(tape, a, b);
    case BinaryOp::mul:
      return mul(tape, a, b);
  }
  throw ContractError("elementwise: unknown binary op");
}

}  // namespace smtl
