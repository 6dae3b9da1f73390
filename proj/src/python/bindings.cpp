// Python module smtl._core: losses, schedule, gradient checks, synthetic data,
// metrics, and the experiment pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "smtl/cli.hpp"
#include "smtl/config.hpp"
#include "smtl/errors.hpp"
#include "smtl/experiment.hpp"
#include "smtl/gradcheck.hpp"
#include "smtl/losses.hpp"

namespace py = pybind11;
using namespace smtl;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using Bool = py::array_t<bool, py::array::c_style | py::array::forcecast>;

std::pair<std::size_t, std::size_t> matrix_shape(const py::buffer_info& b, const char* what) {
  if (b.ndim != 2) throw ShapeError(std::string(what) + " must be a 2-D array");
  return {static_cast<std::size_t>(b.shape[0]), static_cast<std::size_t>(b.shape[1])};
}

Tensor to_tensor(const F64& a, bool requires_grad) {
  const auto b = a.request();
  const auto [r, c] = matrix_shape(b, "logits");
  const auto* p = static_cast<const double*>(b.ptr);
  return Tensor::from({r, c}, std::vector<double>(p, p + r * c), requires_grad);
}

py::array_t<double> to_array(std::span<const double> values, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> matrix_of(const std::vector<std::vector<T>>& rows, std::size_t cols) {
  py::array_t<T> out({rows.size(), cols});
  auto* p = out.mutable_data();
  for (const auto& r : rows) p = std::copy(r.begin(), r.end(), p);
  return out;
}

std::vector<MaskedTarget> masked_targets(const U8& targets, const Bool& mask, std::size_t rows, std::size_t cols) {
  const auto tb = targets.request(), mb = mask.request();
  if (matrix_shape(tb, "targets") != std::pair{rows, cols} || matrix_shape(mb, "mask") != std::pair{rows, cols}) {
    throw ShapeError("targets and mask must match the logits shape");
  }
  const auto* t = static_cast<const std::uint8_t*>(tb.ptr);
  const auto* m = static_cast<const bool*>(mb.ptr);
  std::vector<MaskedTarget> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    out[i].targets.assign(t + i * cols, t + (i + 1) * cols);
    out[i].mask.assign(m + i * cols, m + (i + 1) * cols);
    out[i].validate(cols);
  }
  return out;
}

py::tuple loss_and_grad(Tape& tape, const LossValue& v, const Tensor& logits) {
  tape.backward(v.loss);
  return py::make_tuple(v.value, to_array(logits.grad(), logits.rows(), logits.cols()));
}

std::vector<std::vector<std::uint8_t>> rows_of(const U8& a, const char* what, std::size_t& cols) {
  const auto b = a.request();
  const auto [r, c] = matrix_shape(b, what);
  cols = c;
  const auto* p = static_cast<const std::uint8_t*>(b.ptr);
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t i = 0; i < r; ++i) out.emplace_back(p + i * c, p + (i + 1) * c);
  return out;
}

py::dict summary_dict(const AccuracySummary& s) {
  py::list classes;
  for (const auto& c : s.classes) {
    py::dict d;
    d["name"] = c.name;
    d["tp"] = c.tp;
    d["tn"] = c.tn;
    d["fp"] = c.fp;
    d["fn"] = c.fn;
    d["accuracy"] = c.accuracy();
    d["recall"] = c.recall() ? py::cast(*c.recall()) : py::none();
    classes.append(d);
  }
  py::dict out;
  out["classes"] = classes;
  out["mean_class_accuracy"] = s.mean_class_accuracy;
  out["mean_class_recall"] = s.mean_class_recall;
  out["overall"] = s.overall;
  return out;
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  std::vector<std::vector<double>> features;
  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto& s : d.samples) {
    features.push_back(s.features);
    labels.push_back(s.labels);
  }
  out["name"] = d.name;
  out["classes"] = d.space.classes;
  out["kind"] = std::string(to_string(d.space.kind));
  out["train_count"] = d.train_count;
  out["features"] = matrix_of(features, d.feature_dim);
  out["labels"] = matrix_of(labels, d.space.size());
  return out;
}

ExperimentConfig config_from(const std::string& json_text) {
  if (json_text.empty()) return default_experiment_config();
  try {
    return experiment_config_from_json(Json::parse(json_text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Selective joint multitask training core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<ArtifactError>(m, "ArtifactError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def(
      "selective_bce",
      [](const F64& logits, const U8& targets, const Bool& mask, const std::string& normalizer) {
        Tape tape;
        auto z = to_tensor(logits, true);
        const auto ts = masked_targets(targets, mask, z.rows(), z.cols());
        Normalizer n;
        if (normalizer == "per_dataset") n = Normalizer::per_dataset;
        else if (normalizer == "union_size") n = Normalizer::union_size;
        else throw ConfigError("normalizer must be per_dataset or union_size");
        return loss_and_grad(tape, selective_bce(tape, z, ts, n), z);
      },
      py::arg("logits"), py::arg("targets"), py::arg("mask"), py::arg("normalizer") = "per_dataset",
      "Masked sigmoid BCE over [B x L] logits. Returns (loss, dloss/dlogits).");

  m.def(
      "full_bce",
      [](const F64& logits, const U8& targets) {
        Tape tape;
        auto z = to_tensor(logits, true);
        Bool all({z.rows(), z.cols()});
        std::fill(all.mutable_data(), all.mutable_data() + z.size(), true);
        const auto ts = masked_targets(targets, all, z.rows(), z.cols());
        return loss_and_grad(tape, full_bce(tape, z, ts), z);
      },
      py::arg("logits"), py::arg("targets"), "Unmasked sigmoid BCE. Returns (loss, dloss/dlogits).");

  m.def(
      "softmax_cross_entropy",
      [](const F64& logits, const F64& onehot) {
        Tape tape;
        auto z = to_tensor(logits, true);
        auto y = to_tensor(onehot, false);
        return loss_and_grad(tape, softmax_cross_entropy(tape, z, y), z);
      },
      py::arg("logits"), py::arg("onehot"), "Softmax cross-entropy. Returns (loss, dloss/dlogits).");

  m.def(
      "lr_schedule",
      [](std::size_t step, double lr0, std::size_t decay_every_steps, double decay_factor) {
        TrainConfig c;
        c.lr0 = lr0;
        c.decay_every_steps = decay_every_steps;
        c.decay_factor = decay_factor;
        c.validate();
        return lr_schedule(step, c);
      },
      py::arg("step"), py::arg("lr0") = 0.05, py::arg("decay_every_steps") = 1000, py::arg("decay_factor") = 0.1);

  m.def(
      "gradcheck",
      [](const std::string& size, bool inject_sigmoid_fault) {
        if (size != "small" && size != "full") throw ConfigError("size must be small or full");
        struct Restore {
          ~Restore() { fault::corrupt_sigmoid_backward(false); }
        } restore;
        fault::corrupt_sigmoid_backward(inject_sigmoid_fault);
        const auto r = run_gradcheck_suite(size == "full" ? SuiteSize::full : SuiteSize::small);
        py::list entries;
        for (const auto& e : r.entries) {
          py::dict d;
          d["name"] = e.name;
          d["parameters"] = e.parameters;
          d["max_rel_error"] = e.max_rel_error;
          d["passed"] = e.passed;
          entries.append(d);
        }
        py::dict out;
        out["passed"] = r.passed;
        out["max_rel_error"] = r.max_rel_error;
        out["tolerance"] = r.tolerance;
        out["entries"] = entries;
        return out;
      },
      py::arg("size") = "small", py::arg("inject_sigmoid_fault") = false);

  m.def(
      "default_config", [] { return dump_stable(to_json(default_experiment_config())); },
      "Default experiment configuration as JSON text.");

  m.def(
      "generate",
      [](const std::string& config_json) {
        const auto data = generate_experiment_data(config_from(config_json));
        py::dict out;
        out["emotions"] = dataset_dict(data.emotions);
        out["aus"] = dataset_dict(data.aus);
        if (data.compound) out["compound"] = dataset_dict(*data.compound);
        return out;
      },
      py::arg("config_json") = "", "Synthetic datasets for a config (JSON overlay on the defaults).");

  m.def(
      "accuracy_per_class",
      [](const U8& predicted, const U8& truth, const std::vector<std::string>& class_names) {
        std::size_t cp = 0, ct = 0;
        const auto p = rows_of(predicted, "predicted", cp);
        const auto t = rows_of(truth, "truth", ct);
        return summary_dict(accuracy_per_class(p, t, class_names));
      },
      py::arg("predicted"), py::arg("truth"), py::arg("class_names"));

  m.def(
      "coherence_score",
      [](const F64& values, const std::vector<std::size_t>& counts,
         const std::vector<std::vector<std::size_t>>& truth_sets, std::optional<std::size_t> k) {
        const auto b = values.request();
        const auto [r, c] = matrix_shape(b, "values");
        if (counts.size() != r) throw ShapeError("counts must have one entry per row");
        AUScoreMatrix mat;
        const auto* p = static_cast<const double*>(b.ptr);
        mat.values.assign(p, p + r * c);
        mat.counts = counts;
        for (std::size_t i = 0; i < r; ++i) mat.rows.push_back(std::to_string(i));
        for (std::size_t j = 0; j < c; ++j) mat.columns.push_back(std::to_string(j));
        const auto res = coherence_score(mat, truth_sets, k);
        py::dict out;
        out["precision"] = res.precision;
        out["macro"] = res.macro;
        out["evaluated"] = res.evaluated;
        return out;
      },
      py::arg("values"), py::arg("counts"), py::arg("truth_sets"), py::arg("k") = py::none());

  m.def(
      "train_and_evaluate",
      [](const std::string& config_json, const std::string& experiment, const std::string& strategy, bool full_bce) {
        const auto config = config_from(config_json);
        const auto exp = parse_experiment(experiment);
        const auto s = parse_strategy(strategy);
        RunMetrics metrics;
        std::vector<double> losses;
        {
          py::gil_scoped_release release;
          const auto data = generate_experiment_data(config);
          const auto run = train_run(data, config, exp, s, full_bce);
          metrics = evaluate_network(run.network, run.run, strategy, data, config);
          for (const auto& st : run.log.steps) losses.push_back(st.loss);
        }
        py::dict tasks;
        for (const auto& t : metrics.tasks) tasks[py::str(t.task)] = summary_dict(t.summary);
        py::dict out;
        out["run"] = metrics.run;
        out["tasks"] = tasks;
        out["coherence"] = metrics.coherence ? py::cast(metrics.coherence->macro) : py::none();
        out["losses"] = losses;
        return out;
      },
      py::arg("config_json") = "", py::arg("experiment") = "basic", py::arg("strategy") = "sjmt",
      py::arg("full_bce") = false, "Generate data, train one run in memory and return held-out metrics.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"smtl"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the smtl command line in-process. Returns (exit_code, stdout, stderr).");
}
