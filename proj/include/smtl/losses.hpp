#pragma once

// Loss functions over raw logits. All losses are fused logit-space
// primitives: no log is ever taken of a saturated probability.

#include <cstddef>
#include <span>
#include <vector>

#include "smtl/labels.hpp"
#include "smtl/tensor.hpp"

namespace smtl {

// Divisor applied to each sample's selective loss.
enum class Normalizer {
  per_dataset,  // N = number of classes the sample's dataset annotates
  union_size,   // N = number of union outputs
};

struct LossValue {
  Tensor loss;  // differentiable scalar on the tape (batch mean)
  double value = 0.0;
  // N used for each sample, in batch order.
  std::vector<std::size_t> normalizer_used;
};

// Elementwise stable sigmoid of a logits tensor (not recorded on a tape).
Tensor sigmoid_probabilities(const Tensor& logits);

// Per sample: E = (1/N) * sum over in-mask j of the binary cross-entropy of
// (sigmoid(logit_j), y_j). Out-of-mask logits are never read and receive an
// exactly zero gradient. The batch loss is the left-to-right mean of E.
LossValue selective_bce(Tape& tape, const Tensor& logits, std::span<const MaskedTarget> targets,
                        Normalizer normalizer = Normalizer::per_dataset);

// Mean over the batch of -log softmax(logits)[true class].
LossValue softmax_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& onehot);

// Plain BCE over every output with dense 0/1 targets [B x L], mean over L.
LossValue binary_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets);

// Unselective baseline: masks are ignored and positions a sample's dataset
// never annotates are treated as negatives.
LossValue full_bce(Tape& tape, const Tensor& logits, std::span<const MaskedTarget> targets);

}  // namespace smtl
