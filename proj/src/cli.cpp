#include "smtl/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "smtl/config.hpp"
#include "smtl/errors.hpp"
#include "smtl/experiment.hpp"
#include "smtl/gradcheck.hpp"

namespace smtl {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON); defaults are used when omitted");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out_dir, "output directory (overrides config and $" + std::string(kOutDirEnv) + ")");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? default_experiment_config() : load_experiment_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) config.out_dir = env;
  if (!c.out_dir.empty()) config.out_dir = c.out_dir;
  config.finalize();
  return config;
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v << '%';
  return os.str();
}

int cmd_generate(const Common& c, std::ostream& out) {
  const auto config = resolve(c);
  const auto data = generate_experiment_data(config);
  const auto files = write_experiment_data(data, config, config.out_dir);
  out << "wrote " << files.size() << " files:\n";
  for (const auto& f : files) out << "  " << f.string() << "  (" << fs::file_size(f) << " bytes)\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& strategy, const std::string& experiment, bool full_bce,
              std::ostream& out) {
  const auto config = resolve(c);
  const auto exp = parse_experiment(experiment);
  std::vector<std::pair<Strategy, bool>> runs;
  if (strategy == "all") {
    runs = {{Strategy::single_task, false}, {Strategy::classical_mt, false}, {Strategy::sjmt, false}};
    if (full_bce) runs.push_back({Strategy::sjmt, true});
  } else {
    const auto s = parse_strategy(strategy);
    if (full_bce && s != Strategy::sjmt) throw ConfigError("--full-bce only applies to the sjmt strategy");
    runs = {{s, full_bce}};
  }
  const auto data = read_experiment_data(config.out_dir);
  for (const auto& [s, ablation] : runs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto outcome = train_run(data, config, exp, s, ablation, fs::path(config.out_dir));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& last = outcome.log.steps.back();
    out << outcome.run << ": " << outcome.log.steps.size() << " steps, final loss " << format_double(last.loss)
        << ", " << std::fixed << std::setprecision(1) << secs << std::defaultfloat << std::setprecision(6) << " s -> "
        << (fs::path(config.out_dir) / "runs" / outcome.run).string() << '\n';
  }
  return kExitOk;
}

int cmd_eval(const Common& c, const std::vector<std::string>& names, std::ostream& out) {
  const auto config = resolve(c);
  const auto data = read_experiment_data(config.out_dir);
  std::vector<fs::path> dirs;
  if (names.empty()) {
    dirs = list_runs(config.out_dir);
  } else {
    for (const auto& n : names) dirs.push_back(fs::path(config.out_dir) / "runs" / n);
  }
  if (dirs.empty()) throw ArtifactError("no runs under " + (fs::path(config.out_dir) / "runs").string());
  for (const auto& dir : dirs) {
    const auto m = evaluate_run_dir(dir, data, config);
    out << m.run << ":";
    for (const auto& t : m.tasks) {
      out << ' ' << t.task << ' '
          << percent(t.kind == LabelKind::categorical_exclusive ? t.summary.overall : t.summary.mean_class_accuracy);
    }
    if (m.coherence) {
      out << " coherence " << std::fixed << std::setprecision(3) << m.coherence->macro << std::defaultfloat
          << std::setprecision(6);
    }
    out << '\n';
  }
  const auto report = write_report(config.out_dir);
  out << '\n' << report.comparison;
  return kExitOk;
}

int cmd_report(const Common& c, std::ostream& out) {
  const auto config = resolve(c);
  const auto report = write_report(config.out_dir);
  out << report.comparison;
  out << "wrote " << (fs::path(config.out_dir) / "report.txt").string() << ", report.csv"
      << (report.matrix_csv.empty() ? "" : ", matrix.csv") << '\n';
  return kExitOk;
}

int cmd_gradcheck(const std::string& size, const std::string& fault, std::ostream& out, std::ostream& err) {
  if (size != "small" && size != "full") throw ConfigError("--size: expected small or full, got '" + size + "'");
  if (!fault.empty() && fault != "sigmoid") throw ConfigError("--inject-fault: only 'sigmoid' is available");
  struct Restore {
    ~Restore() { fault::corrupt_sigmoid_backward(false); }
  } restore;
  if (fault == "sigmoid") fault::corrupt_sigmoid_backward(true);

  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_gradcheck_suite(size == "full" ? SuiteSize::full : SuiteSize::small);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& e : report.entries) {
    out << std::left << std::setw(34) << e.name << std::right << std::setw(6) << e.parameters << "  "
        << std::scientific << std::setprecision(3) << e.max_rel_error << std::defaultfloat << "  "
        << std::setprecision(6) << (e.passed ? "ok" : "FAIL");
    if (!e.note.empty()) out << "  (" << e.note << ')';
    out << '\n';
  }
  out << "max relative error " << std::scientific << std::setprecision(3) << report.max_rel_error
      << " (tolerance " << report.tolerance << ")" << std::defaultfloat << ", " << std::fixed << std::setprecision(2)
      << secs << " s\n"
      << std::defaultfloat << std::setprecision(6);
  if (report.passed) {
    out << "gradcheck passed\n";
    return kExitOk;
  }
  err << "gradcheck FAILED:";
  for (const auto& f : report.failures()) err << ' ' << f;
  err << '\n';
  return kExitVerification;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selective joint multitask training on synthetic emotion/AU data", "smtl"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, report_c;
  auto* gen = app.add_subcommand("generate", "write the synthetic datasets and ground truth");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "train one strategy or all of them under the same budget");
  add_common(tr, train_c);
  std::string strategy = "all", experiment = "basic";
  bool full_bce = false;
  tr->add_option("--strategy", strategy, "single_task | classical_mt | sjmt | all")
      ->check(CLI::IsMember({"single_task", "classical_mt", "sjmt", "all"}));
  tr->add_option("--experiment", experiment, "basic | compound")->check(CLI::IsMember({"basic", "compound"}));
  tr->add_flag("--full-bce", full_bce, "train the unmasked-BCE ablation of sjmt (added to 'all')");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on the held-out data and assemble the report");
  add_common(ev, eval_c);
  std::vector<std::string> run_names;
  ev->add_option("--run", run_names, "run name under runs/ (repeatable; default: every run)");

  auto* rep = app.add_subcommand("report", "assemble report.csv, report.txt and matrix.csv from evaluated runs");
  add_common(rep, report_c);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every backward pass");
  std::string size = "small", fault_name;
  gc->add_option("--size", size, "small | full");
  gc->add_option("--inject-fault", fault_name, "corrupt a backward pass to test the checker (sigmoid)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "smtl: " << e.what() << '\n' << "run 'smtl --help' for usage\n";
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_c, out);
    if (tr->parsed()) return cmd_train(train_c, strategy, experiment, full_bce, out);
    if (ev->parsed()) return cmd_eval(eval_c, run_names, out);
    if (rep->parsed()) return cmd_report(report_c, out);
    if (gc->parsed()) return cmd_gradcheck(size, fault_name, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "training diverged at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ArtifactError& e) {
    err << "artifact error: " << e.what() << '\n';
    return kExitArtifact;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitArtifact;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace smtl
