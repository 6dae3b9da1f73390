#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smtl/labels.hpp"
#include "smtl/tensor.hpp"

namespace smtl {

enum class Activation { relu, identity };
enum class Mode { train, eval };

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation activation = Activation::identity;

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }
  Tensor forward(Tape& tape, const Tensor& x) const;
};

// Per-feature batch normalization with a learned affine transform.
struct NormState {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit NormState(std::size_t width);
};

// Train mode normalizes with batch statistics (biased variance) and folds
// them into the running estimates; eval mode uses the running estimates.
// Throws ContractError for fewer than two rows in train mode.
Tensor batch_normalize(Tape& tape, const Tensor& x, NormState& state, Mode mode);

// x + second(relu(norm(first(x)))). All-zero weights give the identity.
struct ResidualBlock {
  DenseLayer first;
  DenseLayer second;
  std::optional<NormState> norm;

  Tensor forward(Tape& tape, const Tensor& x, Mode mode);
};

enum class HeadStrategy { single_task, multi_head, shared_selective };

std::string_view to_string(HeadStrategy head);
HeadStrategy parse_head_strategy(std::string_view text);

struct TrunkSpec {
  std::size_t input_dim = 0;
  std::size_t width = 64;
  std::size_t blocks = 3;
  bool normalization = false;

  bool operator==(const TrunkSpec&) const = default;
};

struct NetworkSpec {
  TrunkSpec trunk;
  HeadStrategy head = HeadStrategy::shared_selective;
  // single_task: exactly one space. multi_head: one space per head.
  // shared_selective: the spaces of the label union, in registration order.
  std::vector<LabelSpace> spaces;
  std::uint64_t seed = 0;

  // Throws ConfigError for zero widths or a head/space layout that does not fit.
  void validate() const;
  std::vector<std::size_t> head_widths() const;

  bool operator==(const NetworkSpec&) const = default;
};

// Raw logits per head; no sigmoid or softmax applied.
struct HeadOutputs {
  std::vector<Tensor> logits;
};

// Where a label space's logits live: head index and first column.
struct SpaceLocation {
  std::size_t head = 0;
  std::size_t column = 0;
};

class Network {
 public:
  // Scaled-normal fan-in initialization from spec.seed, zero biases.
  explicit Network(NetworkSpec spec);

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // Deep copy with independent parameter storage.
  Network clone() const;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t head_count() const { return heads_.size(); }
  SpaceLocation locate(std::size_t space_index) const;

  // Evaluates every head, or only `only_head` when given (other entries of
  // the result are left undefined).
  HeadOutputs forward(Tape& tape, const Tensor& batch, Mode mode, std::optional<std::size_t> only_head = std::nullopt);
  // Eval-mode forward that leaves the network untouched.
  HeadOutputs infer(const Tensor& batch) const;

  std::vector<Tensor> parameters() const;
  std::vector<Tensor> trunk_parameters() const;
  std::vector<Tensor> head_parameters(std::size_t head) const;
  std::size_t parameter_count() const;

  DenseLayer& stem() { return stem_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  std::vector<DenseLayer>& heads() { return heads_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

  // Running statistics of every normalization stage, in block order.
  std::vector<const NormState*> norm_states() const;

 private:
  Tensor trunk_forward(Tape& tape, const Tensor& batch, Mode mode);

  NetworkSpec spec_;
  DenseLayer stem_;
  std::vector<ResidualBlock> blocks_;
  std::vector<DenseLayer> heads_;
};

// Versioned binary checkpoint: magic, version, JSON header (network spec,
// training seed, free-form metadata), then raw little-endian float64 payload
// of parameters followed by normalization running statistics.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Network network;
  std::uint64_t training_seed = 0;
  std::string metadata_json = "{}";
};

void save_checkpoint(const std::filesystem::path& path, const Network& network, std::uint64_t training_seed,
                     const std::string& metadata_json = "{}");
// Throws ArtifactError for unreadable, truncated, or foreign files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smtl
