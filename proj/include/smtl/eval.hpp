#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smtl/data.hpp"
#include "smtl/labels.hpp"
#include "smtl/nn.hpp"

namespace smtl {

// Multilabel decisions are score >= 0.5 on the sigmoid score, closed at the boundary.
inline constexpr double kDecisionThreshold = 0.5;

struct SpacePrediction {
  std::string space;
  LabelKind kind = LabelKind::multilabel_binary;
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  std::vector<double> logits;  // [n x classes]
  std::vector<double> scores;  // sigmoid(logits)
  std::vector<std::size_t> argmax;  // categorical spaces only
  // One-hot argmax (categorical) or thresholded scores (multilabel).
  std::vector<std::vector<std::uint8_t>> decisions;
};

struct Predictions {
  std::size_t count = 0;
  std::vector<SpacePrediction> spaces;

  const SpacePrediction* find(std::string_view space) const;
};

// Lowest index wins ties.
std::size_t argmax_index(std::span<const double> values);

// Per label space of the network: categorical spaces decide by argmax over
// that space's logits, multilabel spaces by thresholding sigmoid scores.
Predictions predict(const Network& net, const Tensor& features);
Predictions predictions_from_logits(const NetworkSpec& spec, const HeadOutputs& outputs);

struct ClassAccuracy {
  std::size_t class_id = 0;
  std::string name;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  // (TP + TN) / N
  double accuracy() const;
  // TP / (TP + FN); nullopt for a class with no positives.
  std::optional<double> recall() const;
};

struct AccuracySummary {
  std::vector<ClassAccuracy> classes;
  double mean_class_accuracy = 0.0;
  // Mean recall over classes with at least one positive.
  double mean_class_recall = 0.0;
  // Fraction of samples whose decision vector equals the truth exactly
  // (the usual multiclass accuracy for categorical spaces).
  double overall = 0.0;
};

// Throws ContractError on misaligned inputs.
AccuracySummary accuracy_per_class(std::span<const std::vector<std::uint8_t>> predicted,
                                   std::span<const std::vector<std::uint8_t>> truth,
                                   std::span<const std::string> class_names);

struct AUScoreMatrix {
  std::vector<std::string> rows;     // emotion categories
  std::vector<std::string> columns;  // AU classes
  std::vector<double> values;        // [rows x columns] mean sigmoid scores; 0 for empty rows
  std::vector<std::size_t> counts;
  bool grouped_by_truth = false;

  double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
  bool empty_row(std::size_t r) const { return counts[r] == 0; }
};

// Mean AU scores grouped by emotion: by predicted emotion unless explicit
// group labels (e.g. ground truth) are supplied. Throws ContractError on an
// empty test set.
AUScoreMatrix au_mean_score_matrix(const Predictions& predictions, std::string_view emotion_space,
                                   std::string_view au_space,
                                   std::optional<std::span<const std::size_t>> groups = std::nullopt);
AUScoreMatrix au_mean_score_matrix(const Network& net, const Dataset& testset, std::string_view emotion_space,
                                   std::string_view au_space, bool group_by_truth = false);

struct CoherenceResult {
  std::vector<std::optional<double>> precision;  // per matrix row; nullopt if skipped
  double macro = 0.0;
  std::size_t evaluated = 0;
};

// Top-k precision of each row's AU scores against the generating set, ties
// broken by lowest column index. k defaults to the row's set size; rows with
// no samples, and rows with an empty set under the default k, are skipped.
// Throws ContractError when k is zero or exceeds the column count.
CoherenceResult coherence_score(const AUScoreMatrix& matrix, std::span<const std::vector<std::size_t>> truth_sets,
                                std::optional<std::size_t> k = std::nullopt);

struct TaskMetrics {
  std::string task;
  LabelKind kind = LabelKind::multilabel_binary;
  AccuracySummary summary;
};

struct RunMetrics {
  std::string run;
  std::string strategy;
  std::vector<TaskMetrics> tasks;
  std::optional<AUScoreMatrix> matrix;
  std::optional<CoherenceResult> coherence;

  const TaskMetrics* find(std::string_view task) const;
};

TaskMetrics evaluate_task(const Predictions& predictions, const Dataset& testset);

std::string run_metrics_to_json(const RunMetrics& run);
RunMetrics run_metrics_from_json(const std::string& text);

struct ExperimentReport {
  std::string csv;         // run,task,class,metric,value
  std::string comparison;  // strategy comparison table (head of `text`)
  std::string text;        // aligned tables and heatmaps
  std::string matrix_csv;  // first run carrying an AU matrix
};

ExperimentReport build_report(std::span<const RunMetrics> runs);
std::string matrix_to_csv(const AUScoreMatrix& matrix);
std::string ascii_heatmap(const AUScoreMatrix& matrix);

}  // namespace smtl
