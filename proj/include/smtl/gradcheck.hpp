#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "smtl/tensor.hpp"

namespace smtl {

// Error between analytic and central-difference gradients is measured as
// |a - n| / max(|a|, |n|, kRelativeErrorFloor).
inline constexpr double kRelativeErrorFloor = 1e-3;

struct TensorCheck {
  std::size_t tensor_index = 0;
  std::vector<std::size_t> coordinates;
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct CheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Scalar function of the parameters, rebuilt on the given tape each call.
using ScalarFunction = std::function<Tensor(Tape&)>;

double relative_error(double analytic, double numeric);

// Compares backward() against central differences for every coordinate of
// every parameter (or an evenly strided subset of at most max_coordinates per
// tensor when it is nonzero). Parameter values are restored afterwards and
// their gradients are left holding the analytic result.
//
// Throws ContractError when h is outside [1e-7, 1e-3] and DeterminismError
// when two baseline evaluations of f disagree.
CheckReport finite_difference_check(const ScalarFunction& f, std::vector<Tensor> params, double h = 1e-5,
                                    double tol = 1e-5, std::size_t max_coordinates = 0);

}  // namespace smtl

namespace smtl {

// ---------------------------------------------------------------------------
// Built-in finite-difference suite

enum class SuiteSize { small, full };

struct SuiteEntry {
  std::string name;  // e.g. "primitive:sigmoid", "loss:selective_bce", "model:residual"
  std::size_t parameters = 0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::string note;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::vector<std::string> failures() const;
};

// Primitives, batch normalization, every loss (including the exact-zero
// check on masked logits) and a small residual model. `full` adds a wider
// normalized model and larger tensors.
SuiteReport run_gradcheck_suite(SuiteSize size, double tol = 1e-5);

}  // namespace smtl
