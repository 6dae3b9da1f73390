#include "smtl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "smtl/errors.hpp"
#include "smtl/json_io.hpp"

namespace smtl {

const SpacePrediction* Predictions::find(std::string_view space) const {
  for (const auto& s : spaces) {
    if (s.space == space) return &s;
  }
  return nullptr;
}

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Predictions predictions_from_logits(const NetworkSpec& spec, const HeadOutputs& outputs) {
  Predictions p;
  std::size_t column = 0;
  for (std::size_t k = 0; k < spec.spaces.size(); ++k) {
    const auto& space = spec.spaces[k];
    const bool shared = spec.head == HeadStrategy::shared_selective;
    const Tensor& logits = outputs.logits.at(shared ? 0 : k);
    const std::size_t offset = shared ? column : 0;
    column += space.size();
    const std::size_t n = logits.rows(), width = logits.cols();
    p.count = n;

    SpacePrediction sp;
    sp.space = space.name;
    sp.kind = space.kind;
    sp.classes = space.size();
    sp.class_names = space.classes;
    sp.logits.reserve(n * sp.classes);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < sp.classes; ++j) sp.logits.push_back(logits.values()[i * width + offset + j]);
    }
    sp.scores.resize(sp.logits.size());
    std::transform(sp.logits.begin(), sp.logits.end(), sp.scores.begin(), stable_sigmoid);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint8_t> decision(sp.classes, 0);
      const std::span<const double> row(&sp.logits[i * sp.classes], sp.classes);
      if (sp.kind == LabelKind::categorical_exclusive) {
        const auto best = argmax_index(row);
        sp.argmax.push_back(best);
        decision[best] = 1;
      } else {
        for (std::size_t j = 0; j < sp.classes; ++j) decision[j] = sp.scores[i * sp.classes + j] >= kDecisionThreshold;
      }
      sp.decisions.push_back(std::move(decision));
    }
    p.spaces.push_back(std::move(sp));
  }
  return p;
}

Predictions predict(const Network& net, const Tensor& features) {
  return predictions_from_logits(net.spec(), net.infer(features));
}

double ClassAccuracy::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
}

std::optional<double> ClassAccuracy::recall() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

AccuracySummary accuracy_per_class(std::span<const std::vector<std::uint8_t>> predicted,
                                   std::span<const std::vector<std::uint8_t>> truth,
                                   std::span<const std::string> class_names) {
  if (predicted.size() != truth.size()) {
    throw ContractError("accuracy_per_class: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " truth rows");
  }
  if (truth.empty()) throw ContractError("accuracy_per_class: empty evaluation set");
  const std::size_t classes = class_names.size();
  AccuracySummary s;
  for (std::size_t c = 0; c < classes; ++c) s.classes.push_back(ClassAccuracy{c, class_names[c]});
  std::size_t exact = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].size() != classes || truth[i].size() != classes) {
      throw ContractError("accuracy_per_class: row " + std::to_string(i) + " does not have " +
                          std::to_string(classes) + " classes");
    }
    exact += predicted[i] == truth[i];
    for (std::size_t c = 0; c < classes; ++c) {
      auto& ca = s.classes[c];
      const bool p = predicted[i][c] != 0, t = truth[i][c] != 0;
      if (p && t) ++ca.tp;
      else if (!p && !t) ++ca.tn;
      else if (p) ++ca.fp;
      else ++ca.fn;
    }
  }
  double acc = 0.0, rec = 0.0;
  std::size_t with_positives = 0;
  for (const auto& ca : s.classes) {
    acc += ca.accuracy();
    if (auto r = ca.recall()) {
      rec += *r;
      ++with_positives;
    }
  }
  s.mean_class_accuracy = classes ? acc / static_cast<double>(classes) : 0.0;
  s.mean_class_recall = with_positives ? rec / static_cast<double>(with_positives) : 0.0;
  s.overall = static_cast<double>(exact) / static_cast<double>(truth.size());
  return s;
}

AUScoreMatrix au_mean_score_matrix(const Predictions& predictions, std::string_view emotion_space,
                                   std::string_view au_space, std::optional<std::span<const std::size_t>> groups) {
  const auto* emo = predictions.find(emotion_space);
  const auto* au = predictions.find(au_space);
  if (!emo || !au) throw ContractError("au_mean_score_matrix: predictions lack the emotion or AU space");
  if (emo->kind != LabelKind::categorical_exclusive) throw ContractError("au_mean_score_matrix: emotion space must be categorical");
  if (predictions.count == 0) throw ContractError("au_mean_score_matrix: empty test set");
  if (groups && groups->size() != predictions.count) {
    throw ContractError("au_mean_score_matrix: group labels do not match the test set");
  }

  AUScoreMatrix m;
  m.rows = emo->class_names;
  m.columns = au->class_names;
  m.grouped_by_truth = groups.has_value();
  m.values.assign(emo->classes * au->classes, 0.0);
  m.counts.assign(emo->classes, 0);
  for (std::size_t i = 0; i < predictions.count; ++i) {
    const std::size_t row = groups ? (*groups)[i] : emo->argmax[i];
    if (row >= emo->classes) throw ContractError("au_mean_score_matrix: group label out of range");
    ++m.counts[row];
    for (std::size_t j = 0; j < au->classes; ++j) m.values[row * au->classes + j] += au->scores[i * au->classes + j];
  }
  for (std::size_t r = 0; r < emo->classes; ++r) {
    if (m.counts[r] == 0) continue;
    for (std::size_t j = 0; j < au->classes; ++j) m.values[r * au->classes + j] /= static_cast<double>(m.counts[r]);
  }
  return m;
}

AUScoreMatrix au_mean_score_matrix(const Network& net, const Dataset& testset, std::string_view emotion_space,
                                   std::string_view au_space, bool group_by_truth) {
  if (testset.samples.empty()) throw ContractError("au_mean_score_matrix: empty test set");
  const auto preds = predict(net, feature_matrix(testset));
  std::vector<std::size_t> truth;
  if (group_by_truth) {
    if (testset.space.name != emotion_space) {
      throw ContractError("au_mean_score_matrix: grouping by truth needs a test set labelled with the emotion space");
    }
    for (const auto& s : testset.samples) truth.push_back(class_index(s));
  }
  return group_by_truth ? au_mean_score_matrix(preds, emotion_space, au_space, std::span<const std::size_t>(truth))
                          : au_mean_score_matrix(preds, emotion_space, au_space);
}

CoherenceResult coherence_score(const AUScoreMatrix& matrix, std::span<const std::vector<std::size_t>> truth_sets,
                                std::optional<std::size_t> k) {
  const std::size_t rows = matrix.counts.size(), cols = matrix.columns.empty() ? (rows ? matrix.values.size() / rows : 0)
                                                                               : matrix.columns.size();
  if (truth_sets.size() != rows) throw ContractError("coherence_score: need one generating set per matrix row");
  if (k && (*k == 0 || *k > cols)) {
    throw ContractError("coherence_score: k=" + std::to_string(*k) + " outside [1, " + std::to_string(cols) + "]");
  }
  CoherenceResult res;
  res.precision.assign(rows, std::nullopt);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& truth = truth_sets[r];
    const std::size_t kk = k ? *k : truth.size();
    if (matrix.counts[r] == 0 || kk == 0) continue;
    if (kk > cols) throw ContractError("coherence_score: generating set larger than the AU inventory");
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return matrix.values[r * cols + a] > matrix.values[r * cols + b]; });
    const std::set<std::size_t> wanted(truth.begin(), truth.end());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < kk; ++i) hits += wanted.count(order[i]);
    const double p = static_cast<double>(hits) / static_cast<double>(kk);
    res.precision[r] = p;
    total += p;
    ++res.evaluated;
  }
  res.macro = res.evaluated ? total / static_cast<double>(res.evaluated) : 0.0;
  return res;
}

const TaskMetrics* RunMetrics::find(std::string_view task) const {
  for (const auto& t : tasks) {
    if (t.task == task) return &t;
  }
  return nullptr;
}

TaskMetrics evaluate_task(const Predictions& predictions, const Dataset& testset) {
  const auto* sp = predictions.find(testset.space.name);
  if (!sp) throw ContractError("network has no outputs for label space '" + testset.space.name + "'");
  if (predictions.count != testset.size()) throw ContractError("predictions do not cover the test set");
  std::vector<std::vector<std::uint8_t>> truth;
  truth.reserve(testset.size());
  for (const auto& s : testset.samples) truth.push_back(s.labels);
  return TaskMetrics{testset.space.name, testset.space.kind,
                     accuracy_per_class(sp->decisions, truth, testset.space.classes)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json summary_json(const AccuracySummary& s) {
  Json classes = Json::array();
  for (const auto& c : s.classes) {
    classes.push_back(Json{{"class_id", c.class_id}, {"name", c.name}, {"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}});
  }
  return Json{{"classes", classes},
              {"mean_class_accuracy", s.mean_class_accuracy},
              {"mean_class_recall", s.mean_class_recall},
              {"overall", s.overall}};
}

AccuracySummary summary_from_json(const Json& j) {
  AccuracySummary s;
  for (const auto& c : j.at("classes")) {
    s.classes.push_back(ClassAccuracy{c.at("class_id").get<std::size_t>(), c.at("name").get<std::string>(),
                                      c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                                      c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()});
  }
  s.mean_class_accuracy = j.at("mean_class_accuracy").get<double>();
  s.mean_class_recall = j.at("mean_class_recall").get<double>();
  s.overall = j.at("overall").get<double>();
  return s;
}

}  // namespace

std::string run_metrics_to_json(const RunMetrics& run) {
  Json tasks = Json::array();
  for (const auto& t : run.tasks) {
    tasks.push_back(Json{{"task", t.task}, {"kind", std::string(to_string(t.kind))}, {"summary", summary_json(t.summary)}});
  }
  Json j{{"run", run.run}, {"strategy", run.strategy}, {"tasks", tasks}};
  if (run.matrix) {
    j["matrix"] = Json{{"rows", run.matrix->rows},
                       {"columns", run.matrix->columns},
                       {"values", run.matrix->values},
                       {"counts", run.matrix->counts},
                       {"grouping", run.matrix->grouped_by_truth ? "truth" : "predicted"}};
  }
  if (run.coherence) {
    Json per = Json::array();
    for (const auto& p : run.coherence->precision) per.push_back(p ? Json(*p) : Json());
    j["coherence"] = Json{{"precision", per}, {"macro", run.coherence->macro}, {"evaluated", run.coherence->evaluated}};
  }
  return dump_stable(j);
}

RunMetrics run_metrics_from_json(const std::string& text) {
  try {
    const auto j = Json::parse(text);
    RunMetrics r;
    r.run = j.at("run").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    for (const auto& t : j.at("tasks")) {
      r.tasks.push_back(TaskMetrics{t.at("task").get<std::string>(), parse_label_kind(t.at("kind").get<std::string>()),
                                    summary_from_json(t.at("summary"))});
    }
    if (j.contains("matrix")) {
      const auto& m = j.at("matrix");
      r.matrix = AUScoreMatrix{m.at("rows").get<std::vector<std::string>>(), m.at("columns").get<std::vector<std::string>>(),
                               m.at("values").get<std::vector<double>>(), m.at("counts").get<std::vector<std::size_t>>(),
                               m.value("grouping", std::string("predicted")) == "truth"};
    }
    if (j.contains("coherence")) {
      const auto& c = j.at("coherence");
      CoherenceResult cr;
      for (const auto& p : c.at("precision")) cr.precision.push_back(p.is_null() ? std::nullopt : std::optional<double>(p.get<double>()));
      cr.macro = c.at("macro").get<double>();
      cr.evaluated = c.at("evaluated").get<std::size_t>();
      r.coherence = cr;
    }
    return r;
  } catch (const Json::exception& e) {
    throw ArtifactError(std::string("bad run metrics: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * v << '%';
  return os.str();
}

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

// Left-aligned first column, right-aligned others.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::size_t> widths(rows[0].size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) os << "  ";
      if (c == 0) os << std::left;
      else os << std::right;
      os << std::setw(static_cast<int>(widths[c])) << rows[i][c];
    }
    os << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      os << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

void csv_row(std::ostringstream& os, const std::string& run, const std::string& task, const std::string& cls,
             const std::string& metric, double value) {
  os << run << ',' << task << ',' << cls << ',' << metric << ',' << format_double(value) << '\n';
}

}  // namespace

std::string matrix_to_csv(const AUScoreMatrix& m) {
  std::ostringstream os;
  os << "emotion,count";
  for (const auto& c : m.columns) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    os << m.rows[r] << ',' << m.counts[r];
    for (std::size_t c = 0; c < m.columns.size(); ++c) os << ',' << format_double(m.at(r, c));
    os << '\n';
  }
  return os.str();
}

std::string ascii_heatmap(const AUScoreMatrix& m) {
  static constexpr std::string_view ramp = " .:-=+*#%@";
  std::size_t label = 5;
  for (const auto& r : m.rows) label = std::max(label, r.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label)) << "" << ' ';
  for (const auto& c : m.columns) os << std::setw(6) << c;
  os << "  n\n";
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    os << std::left << std::setw(static_cast<int>(label)) << m.rows[r] << ' ';
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      if (m.empty_row(r)) {
        os << std::setw(6) << "  ?";
        continue;
      }
      const double v = std::clamp(m.at(r, c), 0.0, 1.0);
      const auto level = std::min<std::size_t>(ramp.size() - 1, static_cast<std::size_t>(v * static_cast<double>(ramp.size())));
      os << std::string(3, ramp[level]) << "   ";
    }
    os << "  " << m.counts[r] << (m.empty_row(r) ? " (empty)" : "") << '\n';
  }
  os << "scale: each glyph step is 0.1 of mean score, '" << ramp.substr(1, 1) << "' = [0.1, 0.2) ... '"
     << ramp.back() << "' = [0.9, 1.0]\n";
  return os.str();
}

ExperimentReport build_report(std::span<const RunMetrics> runs) {
  ExperimentReport rep;
  std::ostringstream csv, text;
  csv << "run,task,class,metric,value\n";

  std::vector<std::string> task_order;
  for (const auto& run : runs) {
    for (const auto& t : run.tasks) {
      if (std::find(task_order.begin(), task_order.end(), t.task) == task_order.end()) task_order.push_back(t.task);
      for (const auto& c : t.summary.classes) {
        csv_row(csv, run.run, t.task, c.name, "accuracy", c.accuracy());
        if (auto r = c.recall()) csv_row(csv, run.run, t.task, c.name, "recall", *r);
        csv_row(csv, run.run, t.task, c.name, "tp", static_cast<double>(c.tp));
        csv_row(csv, run.run, t.task, c.name, "tn", static_cast<double>(c.tn));
        csv_row(csv, run.run, t.task, c.name, "fp", static_cast<double>(c.fp));
        csv_row(csv, run.run, t.task, c.name, "fn", static_cast<double>(c.fn));
      }
      csv_row(csv, run.run, t.task, "_all", "mean_class_accuracy", t.summary.mean_class_accuracy);
      csv_row(csv, run.run, t.task, "_all", "mean_class_recall", t.summary.mean_class_recall);
      csv_row(csv, run.run, t.task, "_all", "overall_accuracy", t.summary.overall);
    }
    if (run.coherence && run.matrix) {
      for (std::size_t r = 0; r < run.coherence->precision.size(); ++r) {
        if (run.coherence->precision[r]) csv_row(csv, run.run, "coherence", run.matrix->rows[r], "precision", *run.coherence->precision[r]);
      }
      csv_row(csv, run.run, "coherence", "_all", "macro_precision", run.coherence->macro);
    }
  }

  // Strategy comparison: one row per task, one column per run.
  {
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{"Task"};
    for (const auto& run : runs) header.push_back(run.run);
    table.push_back(header);
    for (const auto& task : task_order) {
      std::vector<std::string> row{task};
      for (const auto& run : runs) {
        const auto* t = run.find(task);
        if (!t) row.push_back("-");
        else row.push_back(pct(t->kind == LabelKind::categorical_exclusive ? t->summary.overall : t->summary.mean_class_accuracy));
      }
      table.push_back(row);
    }
    bool any_coherence = false;
    for (const auto& run : runs) any_coherence = any_coherence || run.coherence.has_value();
    if (any_coherence) {
      std::vector<std::string> row{"AU coherence (macro precision)"};
      for (const auto& run : runs) row.push_back(run.coherence ? fixed3(run.coherence->macro) : "-");
      table.push_back(row);
    }
    rep.comparison = "Strategy comparison (categorical: overall accuracy, multilabel: mean per-class accuracy)\n\n" +
                     render_table(table);
    text << rep.comparison << '\n';
  }

  // Per-task class tables.
  for (const auto& task : task_order) {
    std::vector<const RunMetrics*> with;
    const TaskMetrics* first = nullptr;
    for (const auto& run : runs) {
      if (const auto* t = run.find(task)) {
        with.push_back(&run);
        if (!first) first = t;
      }
    }
    const bool categorical = first->kind == LabelKind::categorical_exclusive;
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{task, "Images"};
    for (const auto* run : with) header.push_back(run->run);
    table.push_back(header);
    for (std::size_t c = 0; c < first->summary.classes.size(); ++c) {
      const auto& fc = first->summary.classes[c];
      std::vector<std::string> row{fc.name, std::to_string(fc.tp + fc.fn)};
      for (const auto* run : with) {
        const auto& ca = run->find(task)->summary.classes[c];
        if (categorical) {
          const auto r = ca.recall();
          row.push_back(r ? pct(*r) : "-");
        } else {
          row.push_back(pct(ca.accuracy()));
        }
      }
      table.push_back(row);
    }
    if (categorical) {
      std::vector<std::string> mean_row{"Mean classes", "-"}, all_row{"All images", std::to_string(first->summary.classes.empty() ? 0 : first->summary.classes[0].total())};
      for (const auto* run : with) {
        mean_row.push_back(pct(run->find(task)->summary.mean_class_recall));
        all_row.push_back(pct(run->find(task)->summary.overall));
      }
      table.push_back(mean_row);
      table.push_back(all_row);
      text << "Task " << task << " (per-class rows: fraction of the class's images classified correctly)\n\n";
    } else {
      std::vector<std::string> mean_row{"Mean", "-"};
      for (const auto* run : with) mean_row.push_back(pct(run->find(task)->summary.mean_class_accuracy));
      table.push_back(mean_row);
      text << "Task " << task << " (per-class rows: (TP+TN)/N)\n\n";
    }
    text << render_table(table) << '\n';
  }

  for (const auto& run : runs) {
    if (!run.matrix) continue;
    if (rep.matrix_csv.empty()) rep.matrix_csv = matrix_to_csv(*run.matrix);
    text << "Mean AU scores grouped by " << (run.matrix->grouped_by_truth ? "true" : "predicted") << " "
         << "class, run " << run.run << "\n\n" << ascii_heatmap(*run.matrix);
    if (run.coherence) {
      text << "coherence (top-k precision):";
      for (std::size_t r = 0; r < run.coherence->precision.size(); ++r) {
        if (run.coherence->precision[r]) text << ' ' << run.matrix->rows[r] << '=' << fixed3(*run.coherence->precision[r]);
      }
      text << "  macro=" << fixed3(run.coherence->macro) << '\n';
    }
    text << '\n';
  }

  rep.csv = csv.str();
  rep.text = text.str();
  return rep;
}

}  // namespace smtl
