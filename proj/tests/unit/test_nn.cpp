#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "smtl/errors.hpp"
#include "smtl/nn.hpp"

using namespace smtl;
namespace fs = std::filesystem;

namespace {

NetworkSpec small_spec(HeadStrategy head = HeadStrategy::shared_selective, bool norm = false) {
  NetworkSpec s;
  s.trunk = {5, 8, 2, norm};
  s.head = head;
  s.spaces = {{"emotion", {"a", "b", "c"}, LabelKind::categorical_exclusive}, {"au", {"x", "y"}}};
  if (head == HeadStrategy::single_task) s.spaces.resize(1);
  s.seed = 3;
  return s;
}

Tensor inputs(std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.7 * static_cast<double>(i) + 0.1);
  return Tensor::from({rows, cols}, v);
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("smtl_nn_" + name); }

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("parameter count follows the layer widths") {
    const Network net(small_spec());
    // stem 5->8, two blocks of 8->8 twice, one 8->5 head over the union.
    CHECK(net.parameter_count() == (5 * 8 + 8) + 2 * 2 * (8 * 8 + 8) + (8 * 5 + 5));
    const Network multi(small_spec(HeadStrategy::multi_head));
    CHECK(multi.head_count() == 2);
    CHECK(multi.parameter_count() == (5 * 8 + 8) + 2 * 2 * (8 * 8 + 8) + (8 * 3 + 3) + (8 * 2 + 2));
    const Network normed(small_spec(HeadStrategy::shared_selective, true));
    CHECK(normed.parameter_count() == net.parameter_count() + 2 * 2 * 8);
  }

  TEST_CASE("spaces are located in union or per-head coordinates") {
    const Network shared(small_spec());
    CHECK(shared.locate(1).head == 0);
    CHECK(shared.locate(1).column == 3);
    const Network multi(small_spec(HeadStrategy::multi_head));
    CHECK(multi.locate(1).head == 1);
    CHECK(multi.locate(1).column == 0);
    CHECK_THROWS_AS((void)multi.locate(2), ContractError);
  }

  TEST_CASE("spec validation") {
    auto s = small_spec();
    s.head = HeadStrategy::single_task;
    CHECK_THROWS_AS(Network{s}, ConfigError);
    s = small_spec();
    s.trunk.width = 0;
    CHECK_THROWS_AS(Network{s}, ConfigError);
    s = small_spec();
    s.spaces.clear();
    CHECK_THROWS_AS(Network{s}, ConfigError);
    CHECK(parse_head_strategy("multi_head") == HeadStrategy::multi_head);
    CHECK_THROWS_AS(parse_head_strategy("tree"), ConfigError);
  }

  TEST_CASE("forward shapes and input validation") {
    Network net(small_spec(HeadStrategy::multi_head));
    Tape tape;
    const auto out = net.forward(tape, inputs(4, 5), Mode::train);
    CHECK(out.logits[0].shape() == Shape{4, 3});
    CHECK(out.logits[1].shape() == Shape{4, 2});
    const auto only = net.forward(tape, inputs(4, 5), Mode::train, 1);
    CHECK_FALSE(only.logits[0].defined());
    CHECK(only.logits[1].defined());
    CHECK_THROWS_AS(net.forward(tape, inputs(4, 6), Mode::train), ShapeError);
    CHECK_THROWS_AS(net.forward(tape, inputs(4, 5), Mode::train, 2), ContractError);
  }

  TEST_CASE("zero weights make a residual block the identity") {
    ResidualBlock block;
    block.first = {Tensor::zeros({3, 3}, true), Tensor::zeros({3}, true), Activation::identity};
    block.second = {Tensor::zeros({3, 3}, true), Tensor::zeros({3}, true), Activation::identity};
    Tape tape;
    const auto x = inputs(2, 3);
    const auto y = block.forward(tape, x, Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
  }

  TEST_CASE("batch normalization uses batch statistics in train mode") {
    NormState state(2);
    Tape tape;
    const auto x = Tensor::from({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
    const auto y = batch_normalize(tape, x, state, Mode::train);
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < 4; ++i) m += y.at(i, c) / 4;
      for (std::size_t i = 0; i < 4; ++i) v += (y.at(i, c) - m) * (y.at(i, c) - m) / 4;
      CHECK(std::fabs(m) < 1e-12);
      const double var = c == 0 ? 1.25 : 125.0;  // biased batch variance of the column
      CHECK(std::fabs(v - var / (var + NormState::kEpsilon)) < 1e-12);
    }
    // Running mean moved 10% of the way towards the batch mean 2.5.
    CHECK(std::fabs(state.running_mean[0] - 0.25) < 1e-12);
    CHECK_THROWS_AS(batch_normalize(tape, Tensor::zeros({1, 2}), state, Mode::train), ContractError);
    const auto e = batch_normalize(tape, Tensor::zeros({1, 2}), state, Mode::eval);
    CHECK(std::fabs(e.at(0, 0) + 0.25 / std::sqrt(state.running_var[0] + NormState::kEpsilon)) < 1e-12);
  }

  TEST_CASE("initialization is seeded") {
    const Network a(small_spec()), b(small_spec());
    auto s = small_spec();
    s.seed = 4;
    const Network c(s);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    CHECK(std::equal(pa[0].values().begin(), pa[0].values().end(), pb[0].values().begin()));
    CHECK_FALSE(std::equal(pa[0].values().begin(), pa[0].values().end(), pc[0].values().begin()));
  }

  TEST_CASE("clone copies values into independent storage") {
    Network net(small_spec(HeadStrategy::shared_selective, true));
    Tape tape;
    net.forward(tape, inputs(6, 5), Mode::train);
    auto copy = net.clone();
    CHECK(copy.norm_states()[0]->running_mean == net.norm_states()[0]->running_mean);
    copy.parameters()[0].mutable_values()[0] += 1.0;
    CHECK(copy.parameters()[0].values()[0] != net.parameters()[0].values()[0]);
  }

  TEST_CASE("checkpoint round trip is bit identical") {
    Network net(small_spec(HeadStrategy::multi_head, true));
    Tape tape;
    net.forward(tape, inputs(6, 5), Mode::train);
    const auto path = temp_file("roundtrip.bin");
    save_checkpoint(path, net, 42, R"({"run":"t"})");
    const auto ck = load_checkpoint(path);
    CHECK(ck.training_seed == 42);
    CHECK(ck.metadata_json.find("\"run\"") != std::string::npos);
    CHECK(ck.network.spec() == net.spec());
    const auto pa = net.parameters(), pb = ck.network.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i].values().data(), pb[i].values().data(), pa[i].size() * sizeof(double)) == 0);
    }
    CHECK(ck.network.norm_states()[1]->running_var == net.norm_states()[1]->running_var);
    const auto ya = net.infer(inputs(3, 5)), yb = ck.network.infer(inputs(3, 5));
    for (std::size_t i = 0; i < ya.logits[0].size(); ++i) CHECK(ya.logits[0].values()[i] == yb.logits[0].values()[i]);
    fs::remove(path);
  }

  TEST_CASE("damaged checkpoints raise ArtifactError") {
    const Network net(small_spec());
    const auto path = temp_file("damaged.bin");
    save_checkpoint(path, net, 1);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 9);
    CHECK_THROWS_AS(load_checkpoint(path), ArtifactError);
    {
      std::ofstream os(path, std::ios::binary);
      os << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(path), ArtifactError);
    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), ArtifactError);
  }
}
