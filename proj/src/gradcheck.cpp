#include "smtl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smtl/errors.hpp"

namespace smtl {

double relative_error(double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) return std::numeric_limits<double>::infinity();
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFunction& f) {
  Tape tape;
  return f(tape).item();
}

}  // namespace

CheckReport finite_difference_check(const ScalarFunction& f, std::vector<Tensor> params, double h, double tol,
                                    std::size_t max_coordinates) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ContractError("finite_difference_check: step h must lie in [1e-7, 1e-3]");

  const double base = evaluate(f);
  const double again = evaluate(f);
  if (base != again && !(std::isnan(base) && std::isnan(again))) {
    throw DeterminismError("finite_difference_check: function is not deterministic (" + std::to_string(base) +
                           " vs " + std::to_string(again) + ")");
  }

  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    Tensor root = f(tape);
    tape.backward(root);
  }

  CheckReport report;
  report.tolerance = tol;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    TensorCheck check;
    check.tensor_index = t;
    const std::size_t n = p.size();
    const std::size_t stride = (max_coordinates == 0 || n <= max_coordinates) ? 1 : (n + max_coordinates - 1) / max_coordinates;
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t c = 0; c < n; c += stride) {
      auto values = p.mutable_values();
      const double original = values[c];
      values[c] = original + h;
      const double plus = evaluate(f);
      values[c] = original - h;
      const double minus = evaluate(f);
      values[c] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[c];
      check.coordinates.push_back(c);
      check.analytic.push_back(a);
      check.numeric.push_back(numeric);
      check.max_rel_error = std::max(check.max_rel_error, relative_error(a, numeric));
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace smtl
