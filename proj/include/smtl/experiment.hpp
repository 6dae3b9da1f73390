#pragma once

// The generate -> train -> eval -> report pipeline over an output directory:
//
//   data/{emotions,aus,compound}.{csv,json}, data/ground_truth.csv
//   runs/<run>/{checkpoint.bin, train_log.csv, summary.json, eval.json, matrix.csv}
//   report.csv, report.txt, matrix.csv

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smtl/config.hpp"
#include "smtl/data.hpp"
#include "smtl/eval.hpp"
#include "smtl/train.hpp"

namespace smtl {

enum class Experiment {
  basic,     // emotion-only and AU-only datasets
  compound,  // small balanced compound-emotion set joint with the AU dataset
};

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view text);

struct ExperimentData {
  Dataset emotions;
  Dataset aus;
  std::optional<Dataset> compound;
  std::vector<TruthRecord> truth;
};

ExperimentData generate_experiment_data(const ExperimentConfig& config);
// Returns the written paths in a fixed order.
std::vector<std::filesystem::path> write_experiment_data(const ExperimentData& data, const ExperimentConfig& config,
                                                         const std::filesystem::path& out);
// Throws ArtifactError when the data directory is missing or incomplete.
ExperimentData read_experiment_data(const std::filesystem::path& out);

// e.g. "basic-sjmt", "compound-single_task", "basic-sjmt_full_bce".
std::string run_name(Experiment experiment, Strategy strategy, bool full_bce = false);

// Training splits a strategy consumes, in label-union registration order.
std::vector<const Dataset*> training_sets(const std::vector<Dataset>& train_splits, Experiment experiment,
                                          Strategy strategy);

struct RunOutcome {
  std::string run;
  Network network;
  TrainLog log;
};

// Trains one run under the experiment's shared budget. When `out` is set,
// writes runs/<run>/{checkpoint.bin, train_log.csv, summary.json}; the
// summary's created_at field is the only non-deterministic byte range.
RunOutcome train_run(const ExperimentData& data, const ExperimentConfig& config, Experiment experiment,
                     Strategy strategy, bool full_bce = false,
                     const std::optional<std::filesystem::path>& out = std::nullopt);

// Held-out metrics for every label space of the network, plus the AU score
// matrix and coherence when the network predicts AUs alongside a categorical
// space. Throws ArtifactError if the network does not fit the data.
RunMetrics evaluate_network(const Network& net, const std::string& run, const std::string& strategy,
                            const ExperimentData& data, const ExperimentConfig& config);

// Loads runs/<run>/checkpoint.bin, evaluates it and writes eval.json and matrix.csv.
RunMetrics evaluate_run_dir(const std::filesystem::path& run_dir, const ExperimentData& data,
                            const ExperimentConfig& config);

// Run directories under out/runs, sorted by name.
std::vector<std::filesystem::path> list_runs(const std::filesystem::path& out);

// Collects runs/*/eval.json into report.csv, report.txt and matrix.csv.
ExperimentReport write_report(const std::filesystem::path& out);

// Emotion (or compound class) -> generating AU columns, for coherence.
std::vector<std::vector<std::size_t>> generating_sets_for(const LabelSpace& rows, const SyntheticConfig& config);

// Whole-file text I/O; ArtifactError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace smtl
