#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smtl/labels.hpp"
#include "smtl/tensor.hpp"

namespace smtl {

struct Sample {
  std::string id;
  std::vector<double> features;
  // 0/1 per class of the owning dataset's label space.
  std::vector<std::uint8_t> labels;

  bool operator==(const Sample&) const = default;
};

// Samples [0, train_count) form the training split; the rest are held out.
struct Dataset {
  std::string name;
  LabelSpace space;
  std::size_t feature_dim = 0;
  std::size_t train_count = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  Dataset train_split() const;
  Dataset test_split() const;
  // Throws ValidationError on feature/label width or categorical one-hot violations.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

// Class index of a categorical sample (position of its single 1).
std::size_t class_index(const Sample& sample);

// Features as a [n x d] tensor and labels as a dense [n x C] 0/1 tensor.
Tensor feature_matrix(const Dataset& dataset);
Tensor label_matrix(const Dataset& dataset);

// Full generating record of a synthetic sample.
struct TruthRecord {
  std::string sample_id;
  std::string emotion;  // basic or compound category
  std::vector<std::uint8_t> aus;  // post-flip AU bits, in au_ids order

  bool operator==(const TruthRecord&) const = default;
};

struct CompoundConfig {
  // Ordered compound categories and their two basic components.
  std::vector<std::pair<std::string, std::pair<std::string, std::string>>> classes;
  // Held-out images per compound class (same order as classes).
  std::vector<std::size_t> test_counts;
  std::size_t train_per_class = 15;
};

struct SyntheticConfig {
  std::vector<std::string> emotions;
  std::map<std::string, std::vector<int>> emotion_to_aus;
  std::vector<int> au_ids;
  double flip_noise = 0.1;
  std::size_t projection_dim = 128;
  double projection_scale = 0.3;
  double feature_noise = 0.3;
  // Norm of the per-dataset feature offset modelling acquisition domain.
  double domain_shift = 2.0;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  std::uint64_t seed = 1;
  std::optional<CompoundConfig> compound;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::vector<std::uint8_t> au_pattern(const std::string& emotion) const;
};

// Basic emotions, emotion-to-AU table and AU inventory used by default.
SyntheticConfig default_synthetic_config();
// The eight compound categories with their held-out class-count profile.
CompoundConfig default_compound_config();

struct SyntheticData {
  Dataset emotions;  // emotion labels only
  Dataset aus;       // AU labels only
  std::vector<TruthRecord> truth;
  std::vector<double> projection;  // [d x |AU|], row-major
};

// Per sample: emotion uniform, AU bits from the table with independent flip
// noise, features = projection * bits + domain offset + Gaussian noise.
SyntheticData generate_synthetic(const SyntheticConfig& config);

struct CompoundData {
  Dataset compound;
  std::vector<TruthRecord> truth;
};

// Compound AU sets are unions of their components. Balanced training rows
// come first, then the held-out rows. Uses the same projection as
// generate_synthetic for the same seed.
CompoundData generate_compound(const SyntheticConfig& config);

// Emotion -> AU column indices (into au_ids) for coherence checks.
std::vector<std::vector<std::size_t>> generating_au_sets(const SyntheticConfig& config,
                                                         std::span<const std::string> emotions);

// ---------------------------------------------------------------------------
// Batching

enum class BatchMode { mixed, alternating };

struct Batch {
  Tensor features;                    // [B x d]
  std::vector<MaskedTarget> targets;  // union coordinates
  std::vector<std::size_t> dataset_ids;
  std::vector<std::size_t> sample_indices;  // within the source dataset
  std::vector<std::vector<std::uint8_t>> local_labels;
};

// mixed: uniform draws over the concatenation of all datasets; alternating:
// batch t comes wholly from dataset t mod K. Draws are without replacement
// within an epoch and every epoch is reshuffled from the sampler's rng.
class BatchSampler {
 public:
  BatchSampler(std::vector<const Dataset*> datasets, LabelUnion label_union, BatchMode mode, std::size_t batch_size,
               std::uint64_t seed);

  Batch next();
  std::size_t batches_drawn() const { return drawn_; }
  const LabelUnion& label_union() const { return union_; }

 private:
  struct Cursor {
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (dataset, sample)
    std::size_t pos = 0;
  };

  std::pair<std::size_t, std::size_t> draw(Cursor& cursor);

  std::vector<const Dataset*> datasets_;
  LabelUnion union_;
  BatchMode mode_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<Cursor> cursors_;
  std::size_t drawn_ = 0;
};

// ---------------------------------------------------------------------------
// Files

// Writes <stem>.csv and <stem>.json (manifest) into dir; returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& stem,
                                   const std::string& ground_truth_file = "");
// Throws ParseError with file:line location or ValidationError on manifest mismatch.
Dataset load_dataset(const std::filesystem::path& manifest_path);

void save_ground_truth(std::span<const TruthRecord> truth, std::span<const int> au_ids, const std::filesystem::path& path);
std::vector<TruthRecord> load_ground_truth(const std::filesystem::path& path);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace smtl
