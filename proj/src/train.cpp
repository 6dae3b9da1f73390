#include "smtl/train.hpp"

#include <cmath>
#include <sstream>

#include "smtl/errors.hpp"
#include "smtl/eval.hpp"

namespace smtl {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::single_task:
      return "single_task";
    case Strategy::classical_mt:
      return "classical_mt";
    case Strategy::sjmt:
      return "sjmt";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "single_task") return Strategy::single_task;
  if (text == "classical_mt") return Strategy::classical_mt;
  if (text == "sjmt") return Strategy::sjmt;
  throw ConfigError("unknown strategy '" + std::string(text) + "' (expected single_task, classical_mt or sjmt)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0: must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train.decay_factor: must lie in (0, 1]");
  if (decay_every_steps == 0) throw ConfigError("train.decay_every_steps: must be >= 1");
  if (total_steps == 0) throw ConfigError("train.total_steps: must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
  if (!(augmentation_sigma >= 0.0)) throw ConfigError("train.augmentation_sigma: must be >= 0");
  if (full_bce && strategy != Strategy::sjmt) throw ConfigError("train.full_bce: only applies to the sjmt strategy");
}

double lr_schedule(std::size_t step, const TrainConfig& config) {
  const auto stage = static_cast<double>(step / config.decay_every_steps);
  return config.lr0 * std::pow(config.decay_factor, stage);
}

void sgd_step(std::span<Tensor> params, double lr, std::size_t step) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) throw DivergenceError(step, "non-finite gradient in parameter tensor " + std::to_string(i));
    }
  }
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    auto v = p.mutable_values();
    const auto g = p.grad();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * g[j];
    p.zero_grad();
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "step,dataset,lr,loss\n";
  for (const auto& s : steps) os << s.step << ',' << s.datasets << ',' << format_double(s.lr) << ',' << format_double(s.loss) << '\n';
  return os.str();
}

NetworkSpec network_spec_for(Strategy strategy, const TrunkSpec& trunk, std::vector<LabelSpace> spaces,
                             std::uint64_t seed) {
  NetworkSpec spec;
  spec.trunk = trunk;
  spec.spaces = std::move(spaces);
  spec.seed = seed;
  switch (strategy) {
    case Strategy::single_task:
      spec.head = HeadStrategy::single_task;
      break;
    case Strategy::classical_mt:
      spec.head = HeadStrategy::multi_head;
      break;
    case Strategy::sjmt:
      spec.head = HeadStrategy::shared_selective;
      break;
  }
  return spec;
}

namespace {

std::vector<LabelSpace> spaces_of(const std::vector<const Dataset*>& datasets) {
  std::vector<LabelSpace> spaces;
  for (const auto* d : datasets) spaces.push_back(d->space);
  return spaces;
}

const std::vector<const Dataset*>& checked(const std::vector<const Dataset*>& datasets, const TrainConfig& config) {
  config.validate();
  if (datasets.empty()) throw ConfigError("train: no datasets given");
  if (config.strategy == Strategy::single_task && datasets.size() != 1) {
    throw ConfigError("train: single_task trains on exactly one dataset, got " + std::to_string(datasets.size()));
  }
  if (config.strategy != Strategy::single_task && datasets.size() < 2) {
    throw ConfigError("train: " + std::string(to_string(config.strategy)) + " needs at least two datasets");
  }
  return datasets;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

Tensor onehot_or_dense(const std::vector<std::vector<std::uint8_t>>& labels) {
  std::vector<double> v;
  for (const auto& row : labels)
    for (auto l : row) v.push_back(static_cast<double>(l));
  return Tensor::from({labels.size(), labels.front().size()}, std::move(v));
}

LossValue head_loss(Tape& tape, const Tensor& logits, const LabelSpace& space,
                    const std::vector<std::vector<std::uint8_t>>& labels) {
  const Tensor targets = onehot_or_dense(labels);
  return space.kind == LabelKind::categorical_exclusive ? softmax_cross_entropy(tape, logits, targets)
                                                        : binary_cross_entropy(tape, logits, targets);
}

}  // namespace

Trainer::Trainer(std::vector<const Dataset*> datasets, const TrunkSpec& trunk, TrainConfig config)
    : datasets_(checked(datasets, config)),
      config_(config),
      union_(spaces_of(datasets_)),
      network_(network_spec_for(config.strategy, trunk, spaces_of(datasets_), config.seed)),
      sampler_(datasets_, union_, config.strategy == Strategy::classical_mt ? BatchMode::alternating : BatchMode::mixed,
               config.batch_size, derive_seed(config.seed, 202)),
      jitter_rng_(derive_seed(config.seed, 101)) {
  if (trunk.input_dim != datasets_.front()->feature_dim) {
    throw ConfigError("network.input_dim " + std::to_string(trunk.input_dim) + " does not match feature dimension " +
                      std::to_string(datasets_.front()->feature_dim));
  }
}

double Trainer::accumulate_gradients(const Batch& batch) {
  Tape tape;
  Tensor x = batch.features;
  if (config_.augmentation_sigma > 0.0) {
    x = x.clone();
    std::normal_distribution<double> jitter(0.0, config_.augmentation_sigma);
    for (double& v : x.mutable_values()) v += jitter(jitter_rng_);
  }

  LossValue loss;
  switch (config_.strategy) {
    case Strategy::single_task: {
      const auto out = network_.forward(tape, x, Mode::train);
      loss = head_loss(tape, out.logits[0], datasets_[0]->space, batch.local_labels);
      break;
    }
    case Strategy::classical_mt: {
      const std::size_t k = batch.dataset_ids.front();
      for (auto id : batch.dataset_ids) {
        if (id != k) throw ContractError("classical_mt batch mixes datasets");
      }
      const auto out = network_.forward(tape, x, Mode::train, k);
      loss = head_loss(tape, out.logits[k], datasets_[k]->space, batch.local_labels);
      break;
    }
    case Strategy::sjmt: {
      const auto out = network_.forward(tape, x, Mode::train);
      loss = config_.full_bce ? full_bce(tape, out.logits[0], batch.targets)
                              : selective_bce(tape, out.logits[0], batch.targets, config_.normalizer);
      break;
    }
  }
  if (!std::isfinite(loss.value)) throw DivergenceError(steps_done(), "non-finite loss");
  tape.backward(loss.loss);
  return loss.value;
}

std::vector<Tensor> Trainer::updated_parameters(std::size_t dataset) const {
  if (config_.strategy != Strategy::classical_mt) return network_.parameters();
  auto ps = network_.trunk_parameters();
  auto head = network_.head_parameters(dataset);
  ps.insert(ps.end(), head.begin(), head.end());
  return ps;
}

const StepRecord& Trainer::step() {
  const std::size_t t = steps_done();
  const double lr = lr_schedule(t, config_);
  const Batch batch = sampler_.next();
  const double loss = accumulate_gradients(batch);
  auto params = updated_parameters(batch.dataset_ids.front());
  sgd_step(params, lr, t);

  std::vector<bool> present(datasets_.size(), false);
  for (auto id : batch.dataset_ids) present[id] = true;
  std::string names;
  for (std::size_t k = 0; k < datasets_.size(); ++k) {
    if (!present[k]) continue;
    if (!names.empty()) names += '+';
    names += datasets_[k]->name;
  }
  log_.steps.push_back(StepRecord{t, std::move(names), lr, loss});
  return log_.steps.back();
}

std::vector<std::pair<std::string, double>> validation_metrics(const Network& net,
                                                               std::span<const Dataset* const> validation) {
  std::vector<std::pair<std::string, double>> metrics;
  for (const auto* d : validation) {
    if (d->samples.empty()) continue;
    bool has = false;
    for (const auto& s : net.spec().spaces) has = has || s == d->space;
    if (!has) continue;
    const auto task = evaluate_task(predict(net, feature_matrix(*d)), *d);
    metrics.emplace_back(d->space.name + ":overall", task.summary.overall);
    metrics.emplace_back(d->space.name + ":mean_class_accuracy", task.summary.mean_class_accuracy);
  }
  return metrics;
}

TrainResult train(std::vector<const Dataset*> datasets, const TrunkSpec& trunk, const TrainConfig& config,
                  const TrainHooks& hooks) {
  Trainer trainer(std::move(datasets), trunk, config);
  for (std::size_t t = 0; t < config.total_steps; ++t) {
    trainer.step();
    const std::size_t done = t + 1;
    if (config.eval_every && !hooks.validation.empty() && (done % config.eval_every == 0 || done == config.total_steps)) {
      trainer.log().evals.push_back(EvalRecord{done, validation_metrics(trainer.network(), hooks.validation)});
    }
    if (hooks.checkpoint_every && hooks.on_checkpoint && done % hooks.checkpoint_every == 0) {
      hooks.on_checkpoint(done, trainer.network());
    }
  }
  return TrainResult{std::move(trainer.network()), std::move(trainer.log())};
}

}  // namespace smtl
