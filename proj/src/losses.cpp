#include "smtl/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "smtl/errors.hpp"

namespace smtl {

namespace {

void require_logit_matrix(const Tensor& logits, std::string_view op) {
  if (logits.ndim() != 2) {
    throw ShapeError(std::string(op) + ": logits must be [B x L], got " + shape_string(logits.shape()));
  }
}

// -[y log s + (1-y) log(1-s)] with s = sigmoid(p), for binary y.
double bce_term(double logit, std::uint8_t y) { return y ? softplus(-logit) : softplus(logit); }

// Shared kernel: row i contributes (1/norms[i]) * sum of bce terms over the
// positions where include(i, j) holds.
template <typename Include>
LossValue masked_kernel(Tape& tape, std::string_view op, const Tensor& logits, std::vector<std::uint8_t> labels,
                        std::vector<std::size_t> norms, Include include) {
  const std::size_t batch = logits.rows(), width = logits.cols();
  const auto p = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      if (include(i, j)) row += bce_term(p[i * width + j], labels[i * width + j]);
    }
    total += row / static_cast<double>(norms[i]);
  }
  const double value = total / static_cast<double>(batch);

  LossValue out;
  out.value = value;
  out.normalizer_used = norms;
  out.loss = Tensor::scalar(value, logits.requires_grad());
  if (logits.requires_grad()) {
    tape.record(op, {logits}, out.loss,
                [logits, loss = out.loss, labels = std::move(labels), norms = std::move(norms), include, batch,
                 width]() mutable {
                  const double g = loss.grad()[0] / static_cast<double>(batch);
                  const auto p = logits.values();
                  auto gp = logits.mutable_grad();
                  for (std::size_t i = 0; i < batch; ++i) {
                    const double row_scale = g / static_cast<double>(norms[i]);
                    for (std::size_t j = 0; j < width; ++j) {
                      if (!include(i, j)) continue;
                      const std::size_t at = i * width + j;
                      gp[at] += (stable_sigmoid(p[at]) - static_cast<double>(labels[at])) * row_scale;
                    }
                  }
                });
  }
  return out;
}

void check_targets(const Tensor& logits, std::span<const MaskedTarget> targets, std::string_view op) {
  require_logit_matrix(logits, op);
  if (targets.size() != logits.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " logit rows");
  }
  for (const auto& t : targets) {
    if (t.targets.size() != logits.cols() || t.mask.size() != logits.cols()) {
      throw ShapeError(std::string(op) + ": target length does not match " + std::to_string(logits.cols()) +
                       " logit columns");
    }
  }
}

}  // namespace

Tensor sigmoid_probabilities(const Tensor& logits) {
  Tensor out = Tensor::zeros(logits.shape());
  auto o = out.mutable_values();
  const auto p = logits.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_sigmoid(p[i]);
  return out;
}

LossValue selective_bce(Tape& tape, const Tensor& logits, std::span<const MaskedTarget> targets,
                        Normalizer normalizer) {
  check_targets(logits, targets, "selective_bce");
  const std::size_t batch = logits.rows(), width = logits.cols();
  std::vector<std::uint8_t> labels(batch * width);
  std::vector<std::uint8_t> mask(batch * width);
  std::vector<std::size_t> norms(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    targets[i].validate(width);
    for (std::size_t j = 0; j < width; ++j) {
      labels[i * width + j] = targets[i].targets[j];
      mask[i * width + j] = targets[i].mask[j] ? 1 : 0;
    }
    norms[i] = normalizer == Normalizer::per_dataset ? targets[i].mask_count() : width;
  }
  return masked_kernel(tape, "selective_bce", logits, std::move(labels), std::move(norms),
                       [mask = std::move(mask), width](std::size_t i, std::size_t j) { return mask[i * width + j] != 0; });
}

LossValue full_bce(Tape& tape, const Tensor& logits, std::span<const MaskedTarget> targets) {
  check_targets(logits, targets, "full_bce");
  const std::size_t batch = logits.rows(), width = logits.cols();
  std::vector<std::uint8_t> labels(batch * width);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto y = targets[i].targets[j];
      if (y > 1) throw ContractError("full_bce: target value is not 0/1");
      labels[i * width + j] = y;
    }
  }
  return masked_kernel(tape, "full_bce", logits, std::move(labels), std::vector<std::size_t>(batch, width),
                       [](std::size_t, std::size_t) { return true; });
}

LossValue binary_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets) {
  require_logit_matrix(logits, "binary_cross_entropy");
  if (targets.shape() != logits.shape()) {
    throw ShapeError("binary_cross_entropy: targets " + shape_string(targets.shape()) + " vs logits " +
                     shape_string(logits.shape()));
  }
  std::vector<std::uint8_t> labels(targets.size());
  const auto t = targets.values();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) throw ContractError("binary_cross_entropy: target value is not 0/1");
    labels[i] = t[i] == 1.0 ? 1 : 0;
  }
  return masked_kernel(tape, "bce", logits, std::move(labels), std::vector<std::size_t>(logits.rows(), logits.cols()),
                       [](std::size_t, std::size_t) { return true; });
}

LossValue softmax_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& onehot) {
  require_logit_matrix(logits, "softmax_cross_entropy");
  if (onehot.shape() != logits.shape()) {
    throw ShapeError("softmax_cross_entropy: one-hot " + shape_string(onehot.shape()) + " vs logits " +
                     shape_string(logits.shape()));
  }
  const std::size_t batch = logits.rows(), width = logits.cols();
  const auto p = logits.values();
  const auto y = onehot.values();
  std::vector<std::size_t> truth(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const double v = y[i * width + j];
      if (v == 1.0) {
        truth[i] = j;
        ++ones;
      } else if (v != 0.0) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) throw ContractError("softmax_cross_entropy: row " + std::to_string(i) + " is not one-hot");
  }

  // log-sum-exp with the row max factored out.
  std::vector<double> log_norm(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, p[i * width + j]);
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) acc += std::exp(p[i * width + j] - mx);
    log_norm[i] = mx + std::log(acc);
    total += log_norm[i] - p[i * width + truth[i]];
  }

  LossValue out;
  out.value = total / static_cast<double>(batch);
  out.normalizer_used.assign(batch, 1);
  out.loss = Tensor::scalar(out.value, logits.requires_grad());
  if (logits.requires_grad()) {
    tape.record("softmax_cross_entropy", {logits}, out.loss,
                [logits, loss = out.loss, truth = std::move(truth), log_norm = std::move(log_norm), batch,
                 width]() mutable {
                  const double g = loss.grad()[0] / static_cast<double>(batch);
                  const auto p = logits.values();
                  auto gp = logits.mutable_grad();
                  for (std::size_t i = 0; i < batch; ++i) {
                    for (std::size_t j = 0; j < width; ++j) {
                      const std::size_t at = i * width + j;
                      const double prob = std::exp(p[at] - log_norm[i]);
                      gp[at] += (prob - (j == truth[i] ? 1.0 : 0.0)) * g;
                    }
                  }
                });
  }
  return out;
}

}  // namespace smtl
