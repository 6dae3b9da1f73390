#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is how
// parameters are updated in place by the optimizer. Every differentiable op
// takes the Tape it records onto as its first argument; the tape is rebuilt
// for every forward pass and replayed once by backward().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smtl {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {
struct TensorData;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(data_); }

  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size() const;
  // Row/column counts of a 2-D tensor; a 1-D tensor is treated as a row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use. Const because the
  // gradient belongs to the shared storage, not the handle.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  // Unique identity of the underlying storage (the tape node id).
  std::uint64_t id() const;

  // Deep copy detached from any tape.
  Tensor clone() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}

  std::shared_ptr<detail::TensorData> data_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Appends an operation. Inputs must be leaves or outputs of earlier entries.
  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and replays every entry once in reverse order.
  // Gradients accumulate into every requires_grad tensor reachable from root.
  void backward(const Tensor& root);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

// Numerically stable logistic function; finite for every finite input.
double stable_sigmoid(double x) noexcept;
// log(1 + e^x) without overflow.
double softplus(double x) noexcept;

// Differentiable primitives. Outputs require grad whenever an input does.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
// x [B x in] times weight [out x in] transposed, plus bias [out].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// ReLU with subgradient 0 at exactly 0.
Tensor relu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
// Throws DomainError on any non-positive input.
Tensor log(Tape& tape, const Tensor& a);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

enum class UnaryOp { relu, sigmoid, log };
enum class BinaryOp { add, sub, mul };
Tensor elementwise(Tape& tape, UnaryOp op, const Tensor& a);
Tensor elementwise(Tape& tape, BinaryOp op, const Tensor& a, const Tensor& b);

// Test hooks for mutation testing of the gradient checker.
namespace fault {
void corrupt_sigmoid_backward(bool on);
bool sigmoid_backward_corrupted();
}  // namespace fault

}  // namespace smtl
