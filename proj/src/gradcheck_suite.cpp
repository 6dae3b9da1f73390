#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "smtl/gradcheck.hpp"
#include "smtl/losses.hpp"
#include "smtl/nn.hpp"

namespace smtl {

std::vector<std::string> SuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e.name);
  }
  return out;
}

namespace {

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  Tensor uniform(Shape shape, double lo, double hi, bool grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = u(engine);
    return Tensor::from(std::move(shape), std::move(v), grad);
  }

  // Values with |x| >= margin, so piecewise-linear ops are smooth nearby.
  Tensor away_from_zero(Shape shape, double margin) {
    Tensor t = uniform(std::move(shape), -1.0, 1.0);
    for (auto& x : t.mutable_values()) x = x < 0 ? x - margin : x + margin;
    return t;
  }
};

// sum(op(...) * R): a fixed random projection so every output coordinate
// carries a distinct upstream gradient.
Tensor project(Tape& tape, const Tensor& y, const Tensor& r) { return sum(tape, mul(tape, y, r)); }

SuiteEntry entry_from(std::string name, const CheckReport& report, std::size_t params) {
  return SuiteEntry{std::move(name), params, report.max_rel_error, report.passed, {}};
}

std::size_t count(const std::vector<Tensor>& ts) {
  std::size_t n = 0;
  for (const auto& t : ts) n += t.size();
  return n;
}

void check(std::vector<SuiteEntry>& out, std::string name, const ScalarFunction& f, std::vector<Tensor> params,
           double tol) {
  const auto n = count(params);
  out.push_back(entry_from(std::move(name), finite_difference_check(f, std::move(params), 1e-5, tol), n));
}

void primitives(std::vector<SuiteEntry>& out, SuiteSize size, double tol, Rng& rng) {
  const std::size_t m = size == SuiteSize::full ? 7 : 3, k = size == SuiteSize::full ? 6 : 4,
                    n = size == SuiteSize::full ? 5 : 2;
  Tensor a = rng.uniform({m, k}, -1, 1), b = rng.uniform({k, n}, -1, 1);
  Tensor rmn = rng.uniform({m, n}, -1, 1, false);
  check(out, "primitive:matmul", [=](Tape& t) { return project(t, matmul(t, a, b), rmn); }, {a, b}, tol);

  Tensor rkm = rng.uniform({k, m}, -1, 1, false);
  check(out, "primitive:transpose", [=](Tape& t) { return project(t, transpose(t, a), rkm); }, {a}, tol);

  Tensor w = rng.uniform({n, k}, -1, 1), bias = rng.uniform({n}, -1, 1);
  check(out, "primitive:linear", [=](Tape& t) { return project(t, linear(t, a, w, bias), rmn); }, {a, w, bias}, tol);

  Tensor x = rng.uniform({m, k}, -1, 1), y = rng.uniform({m, k}, -1, 1);
  Tensor rmk = rng.uniform({m, k}, -1, 1, false);
  check(out, "primitive:add", [=](Tape& t) { return project(t, add(t, x, y), rmk); }, {x, y}, tol);
  check(out, "primitive:sub", [=](Tape& t) { return project(t, sub(t, x, y), rmk); }, {x, y}, tol);
  check(out, "primitive:mul", [=](Tape& t) { return project(t, mul(t, x, y), rmk); }, {x, y}, tol);

  Tensor z = rng.away_from_zero({m, k}, 0.05);
  check(out, "primitive:relu", [=](Tape& t) { return project(t, relu(t, z), rmk); }, {z}, tol);

  Tensor s = rng.uniform({m, k}, -4, 4);
  check(out, "primitive:sigmoid", [=](Tape& t) { return project(t, sigmoid(t, s), rmk); }, {s}, tol);

  Tensor p = rng.uniform({m, k}, 0.5, 2.0);
  check(out, "primitive:log", [=](Tape& t) { return project(t, log(t, p), rmk); }, {p}, tol);

  check(out, "primitive:scale", [=](Tape& t) { return project(t, scale(t, x, -1.7), rmk); }, {x}, tol);
  check(out, "primitive:sum", [=](Tape& t) { return scale(t, sum(t, mul(t, x, x)), 0.5); }, {x}, tol);
  check(out, "primitive:mean", [=](Tape& t) { return mean(t, mul(t, x, y)); }, {x, y}, tol);
}

void normalization(std::vector<SuiteEntry>& out, SuiteSize size, double tol, Rng& rng) {
  const std::size_t rows = size == SuiteSize::full ? 9 : 5, width = size == SuiteSize::full ? 6 : 3;
  Tensor x = rng.uniform({rows, width}, -2, 2);
  Tensor r = rng.uniform({rows, width}, -1, 1, false);
  NormState state(width);
  for (auto& g : state.gamma.mutable_values()) g = 0.5 + std::abs(g);
  state.beta.mutable_values()[0] = 0.3;
  auto st = std::make_shared<NormState>(state);
  check(out, "primitive:batch_norm", [=](Tape& t) { return project(t, batch_normalize(t, x, *st, Mode::train), r); },
        {x, st->gamma, st->beta}, tol);
}

std::vector<MaskedTarget> random_targets(const LabelUnion& u, std::size_t batch, std::mt19937_64& engine) {
  std::vector<MaskedTarget> out;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t k = i % u.dataset_count();
    const auto& space = u.space(k);
    std::vector<std::uint8_t> local(space.size(), 0);
    if (space.kind == LabelKind::categorical_exclusive) {
      local[engine() % space.size()] = 1;
    } else {
      for (auto& l : local) l = static_cast<std::uint8_t>(engine() & 1u);
    }
    out.push_back(make_masked_target(u, k, local));
  }
  return out;
}

LabelUnion suite_union(std::size_t cat, std::size_t multi) {
  LabelSpace a{"a", {}, LabelKind::categorical_exclusive}, b{"b", {}, LabelKind::multilabel_binary};
  for (std::size_t i = 0; i < cat; ++i) a.classes.push_back("a" + std::to_string(i));
  for (std::size_t i = 0; i < multi; ++i) b.classes.push_back("b" + std::to_string(i));
  return LabelUnion({a, b});
}

void losses(std::vector<SuiteEntry>& out, SuiteSize size, double tol, Rng& rng) {
  const std::size_t batch = size == SuiteSize::full ? 12 : 6;
  const auto u = suite_union(size == SuiteSize::full ? 7 : 3, size == SuiteSize::full ? 10 : 4);
  const auto targets = random_targets(u, batch, rng.engine);
  Tensor logits = rng.uniform({batch, u.size()}, -3, 3);

  for (auto norm : {Normalizer::per_dataset, Normalizer::union_size}) {
    const std::string name = norm == Normalizer::per_dataset ? "loss:selective_bce" : "loss:selective_bce_union";
    check(out, name, [=](Tape& t) { return selective_bce(t, logits, targets, norm).loss; }, {logits}, tol);
  }
  check(out, "loss:full_bce", [=](Tape& t) { return full_bce(t, logits, targets).loss; }, {logits}, tol);

  // Masked positions must receive exactly zero, not merely a small value.
  {
    logits.zero_grad();
    Tape tape;
    tape.backward(selective_bce(tape, logits, targets).loss);
    const auto g = logits.grad();
    std::size_t masked = 0, nonzero = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < u.size(); ++j) {
        if (targets[i].mask[j]) continue;
        ++masked;
        const double v = g[i * u.size() + j];
        if (v != 0.0) ++nonzero;
        worst = std::max(worst, std::abs(v));
      }
    }
    out.push_back(SuiteEntry{"loss:selective_bce_masked_zero", masked, worst, nonzero == 0,
                             std::to_string(masked) + " masked logits, " + std::to_string(nonzero) + " nonzero"});
    logits.zero_grad();
  }

  const std::size_t classes = size == SuiteSize::full ? 7 : 4;
  Tensor cl = rng.uniform({batch, classes}, -3, 3);
  std::vector<double> onehot(batch * classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i) onehot[i * classes + rng.engine() % classes] = 1.0;
  const Tensor oh = Tensor::from({batch, classes}, onehot);
  check(out, "loss:softmax_cross_entropy", [=](Tape& t) { return softmax_cross_entropy(t, cl, oh).loss; }, {cl}, tol);

  std::vector<double> dense(batch * classes);
  for (auto& d : dense) d = static_cast<double>(rng.engine() & 1u);
  const Tensor dt = Tensor::from({batch, classes}, dense);
  check(out, "loss:binary_cross_entropy", [=](Tape& t) { return binary_cross_entropy(t, cl, dt).loss; }, {cl}, tol);
}

// Smallest |pre-activation| fed to a ReLU during one forward pass.
double relu_margin(Network& net, const Tensor& x) {
  Tape tape;
  net.forward(tape, x, Mode::train);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& e : tape.entries()) {
    if (e.op != "relu") continue;
    for (double v : e.inputs[0].values()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

void model(std::vector<SuiteEntry>& out, SuiteSize size, double tol, Rng& rng) {
  const bool full = size == SuiteSize::full;
  // Small: 4 -> 6 wide, 2 blocks, 3 outputs = 219 parameters.
  const auto u = full ? suite_union(4, 5) : suite_union(2, 1);
  const std::size_t batch = full ? 10 : 5;
  TrunkSpec trunk{4, full ? 10u : 6u, full ? 3u : 2u, full};
  const auto targets = random_targets(u, batch, rng.engine);
  const Tensor x = rng.uniform({batch, 4}, -1, 1, false);

  // Pick the first init whose ReLU inputs stay clear of the kink at 0.
  constexpr double kKinkMargin = 1e-3;
  std::shared_ptr<Network> net;
  double margin = 0.0;
  for (std::uint64_t seed = 1; seed < 200; ++seed) {
    NetworkSpec spec{trunk, HeadStrategy::shared_selective, {u.spaces().begin(), u.spaces().end()}, seed};
    auto candidate = std::make_shared<Network>(spec);
    // Give the zero biases and the damped branch weights generic values.
    for (auto& p : candidate->parameters()) {
      std::normal_distribution<double> n(0.0, 0.3);
      for (auto& v : p.mutable_values()) v += n(rng.engine);
    }
    margin = relu_margin(*candidate, x);
    if (margin > kKinkMargin) {
      net = std::move(candidate);
      break;
    }
  }
  const std::string name = full ? "model:residual_normalized" : "model:residual";
  if (!net) {
    out.push_back(SuiteEntry{name, 0, 0.0, false, "no kink-free initialization found"});
    return;
  }
  auto params = net->parameters();
  auto e = entry_from(name, finite_difference_check(
                                [=](Tape& t) {
                                  const auto o = net->forward(t, x, Mode::train);
                                  return selective_bce(t, o.logits[0], targets).loss;
                                },
                                params, 1e-5, tol),
                      count(params));
  e.note = "relu margin " + std::to_string(margin);
  out.push_back(std::move(e));
}

}  // namespace

SuiteReport run_gradcheck_suite(SuiteSize size, double tol) {
  Rng rng(20240917);
  SuiteReport report;
  report.tolerance = tol;
  primitives(report.entries, size, tol, rng);
  normalization(report.entries, size, tol, rng);
  losses(report.entries, size, tol, rng);
  model(report.entries, size, tol, rng);
  report.passed = true;
  for (const auto& e : report.entries) {
    report.passed = report.passed && e.passed;
    if (std::isnan(e.max_rel_error)) {
      report.max_rel_error = e.max_rel_error;
    } else if (!std::isnan(report.max_rel_error)) {
      report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    }
  }
  return report;
}

}  // namespace smtl
