#pragma once

// Experiment configuration: one JSON file with a section per module. Missing
// keys keep their defaults; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "smtl/data.hpp"
#include "smtl/json_io.hpp"
#include "smtl/nn.hpp"
#include "smtl/train.hpp"

namespace smtl {

struct EvalSettings {
  // Group the AU score matrix by ground-truth instead of predicted emotion.
  bool group_by_truth = false;
  // Fixed top-k for coherence; unset means k = size of each generating set.
  std::optional<std::size_t> coherence_k;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;  // generator, initialization and sampling
  std::string out_dir = "out";
  SyntheticConfig synthetic;  // synthetic.seed mirrors `seed`
  TrunkSpec network;          // input_dim mirrors synthetic.projection_dim
  TrainConfig train;          // shared budget for every strategy of the basic experiment
  TrainConfig compound_train; // budget of the compound experiment
  std::size_t checkpoint_every = 0;
  EvalSettings eval;

  // Re-derives the mirrored fields and validates every section.
  void finalize();
};

ExperimentConfig default_experiment_config();

// Overlays `j` onto the defaults. Throws ConfigError naming the key path.
ExperimentConfig experiment_config_from_json(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& config);

// Train section only, for run summaries.
Json to_json(const TrainConfig& train);

}  // namespace smtl
