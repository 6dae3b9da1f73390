// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   smtl_acceptance            run all criteria
//   smtl_acceptance 1 4 10     run a subset

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixture.hpp"
#include "smtl/cli.hpp"
#include "smtl/experiment.hpp"
#include "smtl/gradcheck.hpp"
#include "smtl/losses.hpp"
#include "tiny_config.hpp"

using namespace smtl;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kInstances = 1000;
constexpr std::size_t kMaxWidth = 32;
constexpr double kMaskGradTol = 1e-10;
constexpr double kOracleTol = 1e-12;
constexpr double kGradcheckTol = 1e-5;
constexpr double kTriviaTol = 1e-12;
constexpr std::size_t kSeeds = 5;
constexpr double kMinSjmtGain = 0.02;
constexpr double kMinCoherence = 0.8;
constexpr std::size_t kMinCompoundWins = 4;
constexpr double kBudgetExactSec = 10.0;
constexpr double kBudgetGradcheckSec = 30.0;
constexpr double kBudgetNoiselessSec = 120.0;
constexpr double kBudgetOrderingSec = 15 * 60.0;
constexpr double kBudgetCompoundSec = 10 * 60.0;
constexpr std::size_t kNoiselessSteps = 2000;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// Criteria 1 and 2: random (logits, mask, target) instances with one sample each.

struct Instance {
  std::vector<double> logits;
  MaskedTarget target;
};

std::vector<Instance> random_instances() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> len(1, kMaxWidth);
  std::normal_distribution<double> z(0.0, 4.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<Instance> out;
  for (std::size_t n = 0; n < kInstances; ++n) {
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
    out.push_back(std::move(in));
  }
  return out;
}

double oracle_sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Scalar-loop masked BCE, independent of the library's fused kernel.
double oracle_loss(const Instance& in) {
  double total = 0.0, n = 0.0;
  for (std::size_t j = 0; j < in.logits.size(); ++j) {
    if (!in.target.mask[j]) continue;
    n += 1.0;
    const double z = in.logits[j];
    const double tail = std::log1p(std::exp(-std::fabs(z)));
    total += in.target.targets[j] ? std::max(-z, 0.0) + tail : std::max(z, 0.0) + tail;
  }
  return total / n;
}

Outcome masking_exactness(const std::vector<Instance>& instances) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t masked = 0, masked_nonzero = 0;
  double worst = 0.0;
  for (const auto& in : instances) {
    const auto l = in.logits.size();
    Tape tape;
    auto logits = Tensor::from({1, l}, in.logits, true);
    const auto v = selective_bce(tape, logits, std::span(&in.target, 1));
    tape.backward(v.loss);
    const double n = static_cast<double>(in.target.mask_count());
    for (std::size_t j = 0; j < l; ++j) {
      const double g = logits.grad()[j];
      if (!in.target.mask[j]) {
        ++masked;
        // Bit-exact zero: compare the representation, so -0.0 also fails.
        const double zero = 0.0;
        if (std::memcmp(&g, &zero, sizeof g) != 0) ++masked_nonzero;
      } else {
        worst = std::max(worst, std::fabs(g - (oracle_sigmoid(in.logits[j]) - in.target.targets[j]) / n));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {masked_nonzero == 0 && worst <= kMaskGradTol && secs < kBudgetExactSec,
          fmt("%zu masked outputs, %zu not bit-exact zero; in-mask max |g - (y^-y)/N| = %.2e (tol %.0e); %.2f s",
              masked, masked_nonzero, worst, kMaskGradTol, secs)};
}

Outcome oracle_equivalence(const std::vector<Instance>& instances) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_oracle = 0.0, worst_full = 0.0;
  for (const auto& in : instances) {
    const auto l = in.logits.size();
    Tape tape;
    const double fused = selective_bce(tape, Tensor::from({1, l}, in.logits), std::span(&in.target, 1)).value;
    worst_oracle = std::max(worst_oracle, std::fabs(fused - oracle_loss(in)));

    MaskedTarget full = in.target;
    std::fill(full.mask.begin(), full.mask.end(), true);
    const double sel = selective_bce(tape, Tensor::from({1, l}, in.logits), std::span(&full, 1)).value;
    const double unmasked = full_bce(tape, Tensor::from({1, l}, in.logits), std::span(&full, 1)).value;
    worst_full = std::max(worst_full, std::fabs(sel - unmasked));
  }
  const double secs = seconds_since(t0);
  return {worst_oracle <= kOracleTol && worst_full <= kOracleTol && secs < kBudgetExactSec,
          fmt("max |fused - oracle| = %.2e, max |full-mask - full_bce| = %.2e (tol %.0e); %.2f s", worst_oracle,
              worst_full, kOracleTol, secs)};
}

// ---------------------------------------------------------------------------

Outcome autodiff_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_gradcheck_suite(SuiteSize::small, kGradcheckTol);
  const double secs = seconds_since(t0);
  std::size_t model_params = 0;
  for (const auto& e : report.entries) {
    if (e.name == "model:residual") model_params = e.parameters;
  }
  std::string failed;
  for (const auto& f : report.failures()) failed += " " + f;
  return {report.passed && report.max_rel_error < kGradcheckTol && model_params > 0 && secs < kBudgetGradcheckSec,
          fmt("%zu checks, max rel error %.2e (tol %.0e), residual model %zu params; %.2f s%s%s",
              report.entries.size(), report.max_rel_error, kGradcheckTol, model_params, secs,
              failed.empty() ? "" : "; failed:", failed.c_str())};
}

Outcome analytic_trivia() {
  Tape tape;
  const MaskedTarget three{{1, 0, 1, 0, 0, 0}, {true, true, true, false, false, false}, 0};
  const double bce = selective_bce(tape, Tensor::zeros({1, 6}), std::span(&three, 1)).value;
  std::vector<double> onehot(7, 0.0);
  onehot[2] = 1.0;
  const double ce = softmax_cross_entropy(tape, Tensor::zeros({1, 7}), Tensor::from({1, 7}, onehot)).value;
  const double e1 = std::fabs(bce - std::log(2.0)), e2 = std::fabs(ce - std::log(7.0));
  return {e1 <= kTriviaTol && e2 <= kTriviaTol,
          fmt("|E - ln 2| = %.1e, |CE - ln 7| = %.1e (tol %.0e)", e1, e2, kTriviaTol)};
}

// ---------------------------------------------------------------------------

double train_accuracy(const Network& net, const Dataset& train_split) {
  const auto task = evaluate_task(predict(net, feature_matrix(train_split)), train_split);
  return task.kind == LabelKind::categorical_exclusive ? task.summary.overall : task.summary.mean_class_accuracy;
}

Outcome noiseless_separability() {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = default_experiment_config();
  config.synthetic.flip_noise = 0.0;
  config.synthetic.feature_noise = 0.0;
  config.train.total_steps = kNoiselessSteps;
  config.finalize();
  const auto data = generate_experiment_data(config);
  const auto run = train_run(data, config, Experiment::basic, Strategy::sjmt);
  const double emo = train_accuracy(run.network, data.emotions.train_split());
  const double au = train_accuracy(run.network, data.aus.train_split());
  const double secs = seconds_since(t0);
  return {emo == 1.0 && au == 1.0 && secs < kBudgetNoiselessSec,
          fmt("%zu train samples per dataset, %zu steps: emotion %.2f%%, AU %.2f%% train accuracy; %.1f s",
              config.synthetic.train_samples, kNoiselessSteps, 100 * emo, 100 * au, secs)};
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7 share the same trainings.

struct BasicSeed {
  double single = 0, classical = 0, sjmt = 0;
  double coherence = 0, coherence_full_bce = 0;
};

double held_out(const RunMetrics& m, const std::string& task) {
  const auto* t = m.find(task);
  if (!t) throw std::runtime_error("run " + m.run + " has no task " + task);
  return t->kind == LabelKind::categorical_exclusive ? t->summary.overall : t->summary.mean_class_accuracy;
}

std::vector<BasicSeed> basic_runs(double& secs) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<BasicSeed> out;
  for (std::size_t seed = 1; seed <= kSeeds; ++seed) {
    auto config = default_experiment_config();
    config.seed = seed;
    config.finalize();
    const auto data = generate_experiment_data(config);
    auto eval = [&](Strategy s, bool full) {
      const auto run = train_run(data, config, Experiment::basic, s, full);
      return evaluate_network(run.network, run.run, std::string(to_string(s)), data, config);
    };
    BasicSeed r;
    r.single = held_out(eval(Strategy::single_task, false), "emotion");
    r.classical = held_out(eval(Strategy::classical_mt, false), "emotion");
    const auto sj = eval(Strategy::sjmt, false);
    r.sjmt = held_out(sj, "emotion");
    r.coherence = sj.coherence.value().macro;
    r.coherence_full_bce = eval(Strategy::sjmt, true).coherence.value().macro;
    std::printf("  seed %zu: emotion held-out single %.4f classical %.4f sjmt %.4f; coherence sjmt %.3f full_bce %.3f\n",
                seed, r.single, r.classical, r.sjmt, r.coherence, r.coherence_full_bce);
    std::fflush(stdout);
    out.push_back(r);
  }
  secs = seconds_since(t0);
  return out;
}

Outcome ordering(const std::vector<BasicSeed>& runs, double secs) {
  double st = 0, cmt = 0, sj = 0;
  for (const auto& r : runs) {
    st += r.single / runs.size();
    cmt += r.classical / runs.size();
    sj += r.sjmt / runs.size();
  }
  return {sj >= cmt && sj >= st && sj - st >= kMinSjmtGain && secs < kBudgetOrderingSec,
          fmt("mean held-out emotion accuracy over %zu seeds: sjmt %.2f%%, classical_mt %.2f%%, single_task %.2f%% "
              "(sjmt - single = %+.2f points, need >= %.0f); %.1f min for all trainings of criteria 6-7",
              runs.size(), 100 * sj, 100 * cmt, 100 * st, 100 * (sj - st), 100 * kMinSjmtGain, secs / 60)};
}

Outcome coherence(const std::vector<BasicSeed>& runs) {
  double sel = 0, full = 0, worst = 1.0;
  for (const auto& r : runs) {
    sel += r.coherence / runs.size();
    full += r.coherence_full_bce / runs.size();
    worst = std::min(worst, r.coherence);
  }
  return {worst >= kMinCoherence && full < sel,
          fmt("sjmt macro precision mean %.3f (min over seeds %.3f, need >= %.1f); full_bce mean %.3f, must be lower",
              sel, worst, kMinCoherence, full)};
}

// ---------------------------------------------------------------------------

Outcome compound() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t wins = 0;
  std::string per_seed;
  for (std::size_t seed = 1; seed <= kSeeds; ++seed) {
    auto config = default_experiment_config();
    config.seed = seed;
    config.finalize();
    const auto data = generate_experiment_data(config);
    auto recall = [&](Strategy s) {
      const auto run = train_run(data, config, Experiment::compound, s);
      const auto m = evaluate_network(run.network, run.run, std::string(to_string(s)), data, config);
      return m.find("compound")->summary.mean_class_recall;
    };
    const double single = recall(Strategy::single_task);
    const double joint = recall(Strategy::sjmt);
    wins += joint > single;
    std::printf("  seed %zu: compound mean class accuracy single %.4f sjmt %.4f\n", seed, single, joint);
    std::fflush(stdout);
    per_seed += fmt("%s%.1f/%.1f", per_seed.empty() ? "" : " ", 100 * joint, 100 * single);
  }
  const double secs = seconds_since(t0);
  return {wins >= kMinCompoundWins && secs < kBudgetCompoundSec,
          fmt("sjmt beats single_task on %zu of %zu seeds (need %zu); sjmt/single %% per seed: %s; %.1f min", wins,
              kSeeds, kMinCompoundWins, per_seed.c_str(), secs / 60)};
}

// ---------------------------------------------------------------------------

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"smtl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  std::string text = ss.str();
  // The one timestamp field: drop its line.
  if (p.filename() == "summary.json") {
    const auto at = text.find("\"created_at\"");
    if (at != std::string::npos) {
      const auto begin = text.rfind('\n', at);
      const auto end = text.find('\n', at);
      text.erase(begin, end - begin);
    }
  }
  return text;
}

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = tiny::fresh_dir("acceptance_determinism");
  const auto config = tiny::write_config(base);
  std::vector<fs::path> roots;
  for (const char* name : {"a", "b"}) {
    const auto out = (base / name).string();
    const std::vector<std::vector<std::string>> commands{
        {"generate"},
        {"train", "--full-bce"},
        {"train", "--experiment", "compound"},
        {"eval"},
        {"report"},
    };
    for (auto cmd : commands) {
      cmd.insert(cmd.end(), {"--config", config.string(), "--out", out});
      if (cli(cmd) != kExitOk) return {false, "command failed: " + cmd.front()};
    }
    roots.emplace_back(out);
  }
  std::set<std::string> names;
  for (const auto& root : roots) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).string());
    }
  }
  std::size_t differing = 0, checkpoints = 0;
  std::string first_diff;
  for (const auto& n : names) {
    const bool same = fs::exists(roots[0] / n) && fs::exists(roots[1] / n) &&
                      file_bytes(roots[0] / n) == file_bytes(roots[1] / n);
    if (!same) {
      ++differing;
      if (first_diff.empty()) first_diff = n;
    }
    checkpoints += fs::path(n).filename() == "checkpoint.bin";
  }
  fs::remove_all(base);
  return {differing == 0 && checkpoints > 0,
          fmt("generate/train/eval/report run twice: %zu files (%zu checkpoints), %zu differ%s%s; %.1f s", names.size(),
              checkpoints, differing, first_diff.empty() ? "" : ", first: ", first_diff.c_str(), seconds_since(t0))};
}

Outcome fixture_table() {
  const auto s = fixture::load_samples();
  const auto expected = fixture::load_expected();
  const auto summary = accuracy_per_class(s.predicted, s.truth, s.classes);
  std::size_t mismatched = summary.classes.size() == expected.size() ? 0 : expected.size();
  for (std::size_t c = 0; c < std::min(expected.size(), summary.classes.size()); ++c) {
    const auto& got = summary.classes[c];
    const auto& want = expected[c];
    const bool recall_ok = got.recall().has_value() == want.recall.has_value() &&
                           (!want.recall || std::fabs(*got.recall() - *want.recall) < 1e-15);
    if (got.name != want.name || got.tp != want.tp || got.tn != want.tn || got.fp != want.fp || got.fn != want.fn ||
        std::fabs(got.accuracy() - want.accuracy) > 1e-15 || !recall_ok) {
      ++mismatched;
    }
  }
  return {mismatched == 0, fmt("%zu samples, %zu classes, %zu rows differ from the hand-counted table",
                               s.truth.size(), expected.size(), mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  const char* titles[] = {"",
                          "gradient masking exactness",
                          "oracle equivalence",
                          "autodiff soundness",
                          "analytic trivia",
                          "noiseless separability",
                          "strategy ordering",
                          "AU coherence",
                          "compound emotions",
                          "determinism",
                          "accuracy fixture"};
  std::size_t failed = 0, ran = 0;
  auto report = [&](int c, const Outcome& o) {
    ++ran;
    failed += !o.passed;
    std::printf("[%s] criterion %2d %-28s %s\n", o.passed ? "PASS" : "FAIL", c, titles[c], o.detail.c_str());
    std::fflush(stdout);
  };
  auto guarded = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      report(c, f());
    } catch (const std::exception& e) {
      report(c, {false, std::string("exception: ") + e.what()});
    }
  };

  std::vector<Instance> instances;
  if (wanted(1) || wanted(2)) instances = random_instances();
  guarded(1, [&] { return masking_exactness(instances); });
  guarded(2, [&] { return oracle_equivalence(instances); });
  guarded(3, autodiff_soundness);
  guarded(4, analytic_trivia);
  guarded(5, noiseless_separability);
  if (wanted(6) || wanted(7)) {
    double secs = 0;
    std::vector<BasicSeed> runs;
    std::string error;
    try {
      runs = basic_runs(secs);
    } catch (const std::exception& e) {
      error = e.what();
    }
    guarded(6, [&] { return error.empty() ? ordering(runs, secs) : Outcome{false, "exception: " + error}; });
    guarded(7, [&] { return error.empty() ? coherence(runs) : Outcome{false, "exception: " + error}; });
  }
  guarded(8, compound);
  guarded(9, determinism);
  guarded(10, fixture_table);

  std::printf("%zu of %zu criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
