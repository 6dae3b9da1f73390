#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smtl/data.hpp"
#include "smtl/losses.hpp"
#include "smtl/nn.hpp"

namespace smtl {

enum class Strategy {
  single_task,   // one network per task, one dataset
  classical_mt,  // shared trunk, one head and loss per dataset, alternating batches
  sjmt,          // shared trunk and one head over the label union, mixed batches, selective loss
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct TrainConfig {
  Strategy strategy = Strategy::sjmt;
  std::size_t batch_size = 64;
  double lr0 = 0.05;
  std::size_t decay_every_steps = 1000;
  double decay_factor = 0.1;
  std::size_t total_steps = 4000;
  std::uint64_t seed = 1;
  // Std-dev of Gaussian feature jitter added to training batches.
  double augmentation_sigma = 0.05;
  Normalizer normalizer = Normalizer::per_dataset;
  // Ablation: replace the selective loss by unmasked BCE (sjmt only).
  bool full_bce = false;
  // Validation metrics every N steps (0 disables).
  std::size_t eval_every = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// lr0 * decay_factor^floor(step / decay_every_steps)
double lr_schedule(std::size_t step, const TrainConfig& config);

// p <- p - lr * g for every tensor, then zero the gradients. All gradients
// are checked first; a non-finite entry throws DivergenceError for `step`
// and leaves the parameters untouched.
void sgd_step(std::span<Tensor> params, double lr, std::size_t step = 0);

struct StepRecord {
  std::size_t step = 0;
  std::string datasets;  // '+'-joined names of the datasets in the batch
  double lr = 0.0;
  double loss = 0.0;
};

struct EvalRecord {
  std::size_t step = 0;
  std::vector<std::pair<std::string, double>> metrics;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;

  // step,dataset,lr,loss
  std::string to_csv() const;
};

// Network layout implied by a strategy over the given label spaces.
NetworkSpec network_spec_for(Strategy strategy, const TrunkSpec& trunk, std::vector<LabelSpace> spaces,
                             std::uint64_t seed);

// Step-at-a-time trainer; train() runs it to completion.
class Trainer {
 public:
  // Datasets are the training splits, borrowed for the trainer's lifetime.
  Trainer(std::vector<const Dataset*> datasets, const TrunkSpec& trunk, TrainConfig config);

  // Forward + backward on a batch, leaving gradients in the parameters.
  // Returns the loss value.
  double accumulate_gradients(const Batch& batch);
  // Parameters updated by a batch drawn from dataset k (all for sjmt/single_task).
  std::vector<Tensor> updated_parameters(std::size_t dataset) const;

  // Draws the next batch, updates parameters and appends to the log.
  const StepRecord& step();

  Batch next_batch() { return sampler_.next(); }
  std::size_t steps_done() const { return log_.steps.size(); }
  Network& network() { return network_; }
  const Network& network() const { return network_; }
  TrainLog& log() { return log_; }
  const LabelUnion& label_union() const { return union_; }
  const TrainConfig& config() const { return config_; }

 private:
  std::vector<const Dataset*> datasets_;
  TrainConfig config_;
  LabelUnion union_;
  Network network_;
  BatchSampler sampler_;
  std::mt19937_64 jitter_rng_;
  TrainLog log_;
};

struct TrainHooks {
  // Held-out sets for periodic validation metrics.
  std::vector<const Dataset*> validation;
  // Called after every `checkpoint_every` steps (0 disables).
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t step, const Network&)> on_checkpoint;
};

struct TrainResult {
  Network network;
  TrainLog log;
};

// Throws ConfigError when the dataset count does not fit the strategy and
// DivergenceError on a non-finite loss or gradient.
TrainResult train(std::vector<const Dataset*> datasets, const TrunkSpec& trunk, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// overall / mean-class metrics of `net` on each validation set it has outputs for.
std::vector<std::pair<std::string, double>> validation_metrics(const Network& net,
                                                               std::span<const Dataset* const> validation);

}  // namespace smtl
