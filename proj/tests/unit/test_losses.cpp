#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "smtl/errors.hpp"
#include "smtl/losses.hpp"

using namespace smtl;

namespace {

struct Instance {
  std::vector<double> logits;
  MaskedTarget target;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 32);
  std::normal_distribution<double> z(0.0, 3.0);
  std::bernoulli_distribution coin(0.5);
  Instance in;
  const auto l = len(rng);
  in.target.targets.assign(l, 0);
  in.target.mask.assign(l, false);
  for (std::size_t j = 0; j < l; ++j) {
    in.logits.push_back(z(rng));
    in.target.mask[j] = coin(rng);
  }
  in.target.mask[std::uniform_int_distribution<std::size_t>(0, l - 1)(rng)] = true;
  for (std::size_t j = 0; j < l; ++j) in.target.targets[j] = in.target.mask[j] && coin(rng);
  return in;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("selective loss matches the scalar oracle and masks gradients exactly") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      const auto in = random_instance(rng);
      const auto l = in.logits.size();
      Tape tape;
      auto logits = Tensor::from({1, l}, in.logits, true);
      const auto v = selective_bce(tape, logits, std::span(&in.target, 1));
      const double n = static_cast<double>(in.target.mask_count());
      CHECK(v.normalizer_used[0] == in.target.mask_count());
      CHECK(std::fabs(v.value - oracle::masked_bce(in.logits, in.target.targets, in.target.mask, n)) < 1e-12);
      tape.backward(v.loss);
      for (std::size_t j = 0; j < l; ++j) {
        if (!in.target.mask[j]) {
          CHECK(logits.grad()[j] == 0.0);
        } else {
          CHECK(std::fabs(logits.grad()[j] - (oracle::sigmoid(in.logits[j]) - in.target.targets[j]) / n) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("batch loss is the mean over samples and the gradient carries 1/B") {
    LabelUnion u({{"a", {"x", "y"}}, {"b", {"p", "q", "r"}}});
    const std::vector<std::uint8_t> la{1, 0}, lb{0, 1, 1};
    const std::vector<MaskedTarget> ts{make_masked_target(u, 0, la), make_masked_target(u, 1, lb)};
    const std::vector<double> z{0.3, -1.2, 2.0, 0.7, -0.4, 1.1, -2.5, 0.0, 0.9, -0.6};
    Tape tape;
    auto logits = Tensor::from({2, 5}, z, true);
    const auto v = selective_bce(tape, logits, ts);
    const std::vector<double> r0(z.begin(), z.begin() + 5), r1(z.begin() + 5, z.end());
    const double e0 = oracle::masked_bce(r0, ts[0].targets, ts[0].mask, 2);
    const double e1 = oracle::masked_bce(r1, ts[1].targets, ts[1].mask, 3);
    CHECK(std::fabs(v.value - (e0 + e1) / 2) < 1e-12);
    tape.backward(v.loss);
    const auto g = logits.grad();
    CHECK(g[2] == 0.0);
    CHECK(g[5] == 0.0);
    CHECK(g[6] == 0.0);
    CHECK(std::fabs(g[0] - (oracle::sigmoid(0.3) - 1) / (2 * 2)) < 1e-12);
    CHECK(std::fabs(g[9] - (oracle::sigmoid(-0.6) - 1) / (3 * 2)) < 1e-12);
  }

  TEST_CASE("union_size normalizer divides by the union width") {
    LabelUnion u({{"a", {"x", "y"}}, {"b", {"p", "q", "r"}}});
    const std::vector<std::uint8_t> la{1, 0};
    const auto t = make_masked_target(u, 0, la);
    Tape tape;
    const std::vector<double> z{0.5, -0.5, 9, 9, 9};
    const auto v = selective_bce(tape, Tensor::from({1, 5}, z, true), std::span(&t, 1), Normalizer::union_size);
    CHECK(v.normalizer_used[0] == 5);
    CHECK(std::fabs(v.value - oracle::masked_bce(z, t.targets, t.mask, 5)) < 1e-12);
  }

  TEST_CASE("full mask agrees with full_bce") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      auto in = random_instance(rng);
      std::fill(in.target.mask.begin(), in.target.mask.end(), true);
      const auto l = in.logits.size();
      Tape t1, t2;
      const double a = selective_bce(t1, Tensor::from({1, l}, in.logits), std::span(&in.target, 1)).value;
      const double b = full_bce(t2, Tensor::from({1, l}, in.logits), std::span(&in.target, 1)).value;
      CHECK(std::fabs(a - b) < 1e-12);
    }
  }

  TEST_CASE("full_bce penalizes unannotated positions as negatives") {
    const MaskedTarget t{{1, 0}, {true, false}, 0};
    Tape tape;
    auto logits = Tensor::from({1, 2}, {0.0, 4.0}, true);
    const auto v = full_bce(tape, logits, std::span(&t, 1));
    tape.backward(v.loss);
    CHECK(logits.grad()[1] > 0.0);
    CHECK(std::fabs(v.value - (std::log(2.0) + std::log1p(std::exp(4.0))) / 2) < 1e-12);
  }

  TEST_CASE("zero logits give ln 2 and uniform softmax gives ln 7") {
    const MaskedTarget t{{1, 0, 0, 1, 0}, {true, true, false, true, false}, 0};
    Tape tape;
    const auto v = selective_bce(tape, Tensor::zeros({1, 5}), std::span(&t, 1));
    CHECK(std::fabs(v.value - std::log(2.0)) < 1e-12);
    std::vector<double> onehot(7, 0.0);
    onehot[3] = 1.0;
    const auto ce = softmax_cross_entropy(tape, Tensor::filled({1, 7}, 0.25), Tensor::from({1, 7}, onehot));
    CHECK(std::fabs(ce.value - std::log(7.0)) < 1e-12);
  }

  TEST_CASE("softmax cross-entropy gradient is softmax minus one-hot") {
    Tape tape;
    auto logits = Tensor::from({1, 3}, {1.0, 2.0, 3.0}, true);
    const auto v = softmax_cross_entropy(tape, logits, Tensor::from({1, 3}, {0, 0, 1}));
    tape.backward(v.loss);
    const double zsum = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(std::fabs(v.value - (std::log(zsum) - 3.0)) < 1e-12);
    CHECK(std::fabs(logits.grad()[0] - std::exp(1.0) / zsum) < 1e-12);
    CHECK(std::fabs(logits.grad()[2] - (std::exp(3.0) / zsum - 1)) < 1e-12);
    CHECK_THROWS_AS(softmax_cross_entropy(tape, logits, Tensor::from({1, 3}, {1, 0, 1})), ContractError);
  }

  TEST_CASE("extreme logits stay finite") {
    const MaskedTarget t{{1, 0}, {true, true}, 0};
    Tape tape;
    auto logits = Tensor::from({1, 2}, {-1000.0, 1000.0}, true);
    const auto v = selective_bce(tape, logits, std::span(&t, 1));
    CHECK(std::isfinite(v.value));
    CHECK(std::fabs(v.value - 1000.0) < 1e-9);
    tape.backward(v.loss);
    CHECK(std::fabs(logits.grad()[0] + 0.5) < 1e-12);
    CHECK(std::fabs(logits.grad()[1] - 0.5) < 1e-12);
    const auto ce = softmax_cross_entropy(tape, Tensor::from({1, 2}, {1000.0, -1000.0}), Tensor::from({1, 2}, {0, 1}));
    CHECK(std::fabs(ce.value - 2000.0) < 1e-9);
  }

  TEST_CASE("binary cross-entropy averages over every output") {
    Tape tape;
    const auto v =
        binary_cross_entropy(tape, Tensor::from({1, 2}, {0.0, 0.0}), Tensor::from({1, 2}, {1, 0}));
    CHECK(std::fabs(v.value - std::log(2.0)) < 1e-12);
    CHECK_THROWS_AS(binary_cross_entropy(tape, Tensor::zeros({1, 2}), Tensor::from({1, 2}, {0.5, 0})),
                    ContractError);
  }

  TEST_CASE("shape errors") {
    const MaskedTarget t{{1, 0}, {true, true}, 0};
    Tape tape;
    CHECK_THROWS_AS(selective_bce(tape, Tensor::zeros({1, 3}), std::span(&t, 1)), ShapeError);
    CHECK_THROWS_AS(selective_bce(tape, Tensor::zeros({2, 2}), std::span(&t, 1)), ShapeError);
  }
}
