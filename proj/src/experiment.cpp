#include "smtl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "smtl/errors.hpp"

namespace smtl {

namespace fs = std::filesystem;

std::string_view to_string(Experiment e) { return e == Experiment::basic ? "basic" : "compound"; }

Experiment parse_experiment(std::string_view text) {
  if (text == "basic") return Experiment::basic;
  if (text == "compound") return Experiment::compound;
  throw ConfigError("unknown experiment '" + std::string(text) + "' (expected basic or compound)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << text;
  if (!out) throw ArtifactError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// Data

ExperimentData generate_experiment_data(const ExperimentConfig& config) {
  auto syn = generate_synthetic(config.synthetic);
  ExperimentData data{std::move(syn.emotions), std::move(syn.aus), std::nullopt, std::move(syn.truth)};
  if (config.synthetic.compound) {
    auto comp = generate_compound(config.synthetic);
    data.compound = std::move(comp.compound);
    data.truth.insert(data.truth.end(), comp.truth.begin(), comp.truth.end());
  }
  return data;
}

std::vector<fs::path> write_experiment_data(const ExperimentData& data, const ExperimentConfig& config,
                                            const fs::path& out) {
  const fs::path dir = out / "data";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ArtifactError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto add = [&](const Dataset& d, const std::string& stem) {
    save_dataset(d, dir, stem, "ground_truth.csv");
    written.push_back(dir / (stem + ".csv"));
    written.push_back(dir / (stem + ".json"));
  };
  add(data.emotions, "emotions");
  add(data.aus, "aus");
  if (data.compound) add(*data.compound, "compound");
  save_ground_truth(data.truth, config.synthetic.au_ids, dir / "ground_truth.csv");
  written.push_back(dir / "ground_truth.csv");
  return written;
}

ExperimentData read_experiment_data(const fs::path& out) {
  const fs::path dir = out / "data";
  auto load = [&](const std::string& stem) {
    const fs::path p = dir / (stem + ".json");
    if (!fs::exists(p)) throw ArtifactError("missing " + p.string() + " (run 'generate' first)");
    return load_dataset(p);
  };
  ExperimentData data{load("emotions"), load("aus"), std::nullopt, {}};
  if (fs::exists(dir / "compound.json")) data.compound = load("compound");
  if (fs::exists(dir / "ground_truth.csv")) data.truth = load_ground_truth(dir / "ground_truth.csv");
  return data;
}

// ---------------------------------------------------------------------------
// Training

std::string run_name(Experiment experiment, Strategy strategy, bool full_bce) {
  std::string name = std::string(to_string(experiment)) + "-" + std::string(to_string(strategy));
  if (full_bce) name += "_full_bce";
  return name;
}

namespace {

struct Splits {
  std::vector<Dataset> train;  // emotions, aus, [compound]
  Splits(const ExperimentData& d) {
    train.push_back(d.emotions.train_split());
    train.push_back(d.aus.train_split());
    if (d.compound) train.push_back(d.compound->train_split());
  }
};

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const Dataset* heldout_for(const LabelSpace& space, const ExperimentData& data, std::deque<Dataset>& storage) {
  const Dataset* full = nullptr;
  if (data.emotions.space == space) full = &data.emotions;
  if (data.aus.space == space) full = &data.aus;
  if (data.compound && data.compound->space == space) full = &*data.compound;
  if (!full) return nullptr;
  storage.push_back(full->test_split());
  return &storage.back();
}

Json task_json(const TaskMetrics& t) {
  return Json{{"overall", t.summary.overall},
              {"mean_class_accuracy", t.summary.mean_class_accuracy},
              {"mean_class_recall", t.summary.mean_class_recall}};
}

}  // namespace

std::vector<const Dataset*> training_sets(const std::vector<Dataset>& train_splits, Experiment experiment,
                                          Strategy strategy) {
  const Dataset* primary = nullptr;
  if (experiment == Experiment::basic) {
    primary = &train_splits.at(0);
  } else {
    if (train_splits.size() < 3) throw ConfigError("compound experiment needs a compound dataset (synthetic.compound)");
    primary = &train_splits[2];
  }
  if (strategy == Strategy::single_task) return {primary};
  return {primary, &train_splits.at(1)};
}

RunOutcome train_run(const ExperimentData& data, const ExperimentConfig& config, Experiment experiment,
                     Strategy strategy, bool full_bce, const std::optional<fs::path>& out) {
  TrainConfig tc = experiment == Experiment::basic ? config.train : config.compound_train;
  tc.strategy = strategy;
  tc.full_bce = full_bce;
  tc.validate();

  Splits splits(data);
  const auto sets = training_sets(splits.train, experiment, strategy);
  const std::string run = run_name(experiment, strategy, full_bce);

  std::deque<Dataset> heldout_storage;
  TrainHooks hooks;
  for (const auto* d : sets) {
    if (const auto* h = heldout_for(d->space, data, heldout_storage); h && !h->samples.empty()) {
      hooks.validation.push_back(h);
    }
  }
  std::optional<fs::path> run_dir;
  if (out) {
    run_dir = *out / "runs" / run;
    std::error_code ec;
    fs::create_directories(*run_dir, ec);
    if (ec) throw ArtifactError("cannot create " + run_dir->string() + ": " + ec.message());
  }
  const Json meta{{"run", run}, {"experiment", to_string(experiment)}, {"strategy", to_string(strategy)},
                  {"full_bce", full_bce}};
  if (run_dir && config.checkpoint_every) {
    hooks.checkpoint_every = config.checkpoint_every;
    hooks.on_checkpoint = [&](std::size_t step, const Network& net) {
      save_checkpoint(*run_dir / ("checkpoint-" + std::to_string(step) + ".bin"), net, tc.seed, meta.dump());
    };
  }

  auto result = train(sets, config.network, tc, hooks);
  RunOutcome outcome{run, std::move(result.network), std::move(result.log)};
  if (!run_dir) return outcome;

  save_checkpoint(*run_dir / "checkpoint.bin", outcome.network, tc.seed, meta.dump());
  write_text(*run_dir / "train_log.csv", outcome.log.to_csv());

  const auto& steps = outcome.log.steps;
  const std::size_t tail = std::min<std::size_t>(100, steps.size());
  double tail_loss = 0.0;
  for (std::size_t i = steps.size() - tail; i < steps.size(); ++i) tail_loss += steps[i].loss;

  Json validation = Json::object();
  for (const auto* h : hooks.validation) {
    validation[h->space.name] = task_json(evaluate_task(predict(outcome.network, feature_matrix(*h)), *h));
  }
  Json names = Json::array();
  for (const auto* d : sets) names.push_back(d->name);
  Json evals = Json::array();
  for (const auto& e : outcome.log.evals) {
    Json m = Json::object();
    for (const auto& [k, v] : e.metrics) m[k] = v;
    evals.push_back(Json{{"step", e.step}, {"metrics", m}});
  }

  Json summary;
  summary["run"] = run;
  summary["experiment"] = to_string(experiment);
  summary["strategy"] = to_string(strategy);
  summary["full_bce"] = full_bce;
  summary["seed"] = tc.seed;
  summary["datasets"] = names;
  summary["network"] = to_json(outcome.network.spec());
  summary["parameters"] = outcome.network.parameter_count();
  summary["train"] = to_json(tc);
  summary["steps"] = steps.size();
  summary["final_loss_mean100"] = tail ? tail_loss / static_cast<double>(tail) : 0.0;
  summary["validation"] = validation;
  summary["evals"] = evals;
  summary["created_at"] = utc_timestamp();
  write_text(*run_dir / "summary.json", dump_stable(summary));
  return outcome;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<std::vector<std::size_t>> generating_sets_for(const LabelSpace& rows, const SyntheticConfig& config) {
  const CompoundConfig* cc = config.compound ? &*config.compound : nullptr;
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& name : rows.classes) {
    if (config.emotion_to_aus.count(name)) {
      sets.push_back(generating_au_sets(config, std::vector<std::string>{name})[0]);
      continue;
    }
    const std::pair<std::string, std::string>* parts = nullptr;
    if (cc) {
      for (const auto& [cname, p] : cc->classes) {
        if (cname == name) parts = &p;
      }
    }
    if (!parts) throw ArtifactError("no generating AU set for class '" + name + "'");
    auto a = generating_au_sets(config, std::vector<std::string>{parts->first, parts->second});
    std::vector<std::size_t> merged;
    std::set_union(a[0].begin(), a[0].end(), a[1].begin(), a[1].end(), std::back_inserter(merged));
    sets.push_back(std::move(merged));
  }
  return sets;
}

RunMetrics evaluate_network(const Network& net, const std::string& run, const std::string& strategy,
                            const ExperimentData& data, const ExperimentConfig& config) {
  RunMetrics metrics;
  metrics.run = run;
  metrics.strategy = strategy;
  std::deque<Dataset> storage;
  const auto& spaces = net.spec().spaces;
  const LabelSpace* categorical = nullptr;
  const Dataset* categorical_test = nullptr;
  const LabelSpace* au = nullptr;
  for (const auto& space : spaces) {
    const Dataset* test = heldout_for(space, data, storage);
    if (!test) {
      throw ArtifactError("checkpoint space '" + space.name + "' does not match any dataset in the data directory");
    }
    if (test->feature_dim != net.spec().trunk.input_dim) {
      throw ArtifactError("checkpoint expects " + std::to_string(net.spec().trunk.input_dim) +
                          " features, dataset '" + test->name + "' has " + std::to_string(test->feature_dim));
    }
    if (test->samples.empty()) continue;
    metrics.tasks.push_back(evaluate_task(predict(net, feature_matrix(*test)), *test));
    if (space.kind == LabelKind::categorical_exclusive && !categorical) {
      categorical = &space;
      categorical_test = test;
    }
    if (space.name == data.aus.space.name) au = &space;
  }
  if (categorical && au && categorical_test && !categorical_test->samples.empty()) {
    auto matrix = au_mean_score_matrix(net, *categorical_test, categorical->name, au->name, config.eval.group_by_truth);
    const auto sets = generating_sets_for(*categorical, config.synthetic);
    metrics.coherence = coherence_score(matrix, sets, config.eval.coherence_k);
    metrics.matrix = std::move(matrix);
  }
  return metrics;
}

RunMetrics evaluate_run_dir(const fs::path& run_dir, const ExperimentData& data, const ExperimentConfig& config) {
  auto ckpt = load_checkpoint(run_dir / "checkpoint.bin");
  std::string strategy = "unknown";
  std::string run = run_dir.filename().string();
  try {
    const auto meta = Json::parse(ckpt.metadata_json);
    strategy = meta.value("strategy", strategy);
    if (meta.value("full_bce", false)) strategy += "+full_bce";
    run = meta.value("run", run);
  } catch (const nlohmann::json::exception&) {
    throw ArtifactError(run_dir.string() + "/checkpoint.bin: malformed metadata");
  }
  auto metrics = evaluate_network(ckpt.network, run, strategy, data, config);
  write_text(run_dir / "eval.json", run_metrics_to_json(metrics));
  if (metrics.matrix) write_text(run_dir / "matrix.csv", matrix_to_csv(*metrics.matrix));
  return metrics;
}

std::vector<fs::path> list_runs(const fs::path& out) {
  std::vector<fs::path> runs;
  const fs::path dir = out / "runs";
  if (!fs::is_directory(dir)) return runs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "checkpoint.bin")) runs.push_back(e.path());
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

ExperimentReport write_report(const fs::path& out) {
  std::vector<RunMetrics> runs;
  for (const auto& dir : list_runs(out)) {
    const fs::path p = dir / "eval.json";
    if (!fs::exists(p)) throw ArtifactError("missing " + p.string() + " (run 'eval' first)");
    try {
      runs.push_back(run_metrics_from_json(read_text(p)));
    } catch (const nlohmann::json::exception& e) {
      throw ArtifactError(p.string() + ": " + e.what());
    }
  }
  if (runs.empty()) throw ArtifactError("no evaluated runs under " + (out / "runs").string());
  auto report = build_report(runs);
  write_text(out / "report.csv", report.csv);
  write_text(out / "report.txt", report.text);
  if (!report.matrix_csv.empty()) write_text(out / "matrix.csv", report.matrix_csv);
  return report;
}

}  // namespace smtl
