#include "smtl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "smtl/errors.hpp"
#include "smtl/json_io.hpp"

namespace smtl {

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::train_split() const {
  Dataset d{name, space, feature_dim, train_count, {}};
  d.samples.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(train_count));
  return d;
}

Dataset Dataset::test_split() const {
  Dataset d{name, space, feature_dim, 0, {}};
  d.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(train_count), samples.end());
  return d;
}

void Dataset::validate() const {
  if (train_count > samples.size()) {
    throw ValidationError("dataset '" + name + "': train_count " + std::to_string(train_count) + " exceeds " +
                          std::to_string(samples.size()) + " samples");
  }
  for (const auto& s : samples) {
    if (s.features.size() != feature_dim) {
      throw ValidationError("dataset '" + name + "', sample " + s.id + ": " + std::to_string(s.features.size()) +
                            " features, expected " + std::to_string(feature_dim));
    }
    if (s.labels.size() != space.size()) {
      throw ValidationError("dataset '" + name + "', sample " + s.id + ": " + std::to_string(s.labels.size()) +
                            " labels, expected " + std::to_string(space.size()));
    }
    std::size_t ones = 0;
    for (auto l : s.labels) {
      if (l > 1) throw ValidationError("dataset '" + name + "', sample " + s.id + ": label is not 0/1");
      ones += l;
    }
    if (space.kind == LabelKind::categorical_exclusive && ones != 1) {
      throw ValidationError("dataset '" + name + "', sample " + s.id + ": categorical sample has " +
                            std::to_string(ones) + " active classes");
    }
  }
}

std::size_t class_index(const Sample& sample) {
  const auto it = std::find(sample.labels.begin(), sample.labels.end(), 1);
  if (it == sample.labels.end()) throw ContractError("sample " + sample.id + " has no active class");
  return static_cast<std::size_t>(it - sample.labels.begin());
}

Tensor feature_matrix(const Dataset& dataset) {
  if (dataset.samples.empty()) throw DataError("dataset '" + dataset.name + "' is empty");
  std::vector<double> v;
  v.reserve(dataset.size() * dataset.feature_dim);
  for (const auto& s : dataset.samples) v.insert(v.end(), s.features.begin(), s.features.end());
  return Tensor::from({dataset.size(), dataset.feature_dim}, std::move(v));
}

Tensor label_matrix(const Dataset& dataset) {
  if (dataset.samples.empty()) throw DataError("dataset '" + dataset.name + "' is empty");
  std::vector<double> v;
  v.reserve(dataset.size() * dataset.space.size());
  for (const auto& s : dataset.samples) {
    for (auto l : s.labels) v.push_back(static_cast<double>(l));
  }
  return Tensor::from({dataset.size(), dataset.space.size()}, std::move(v));
}

// ---------------------------------------------------------------------------
// Synthetic configuration

SyntheticConfig default_synthetic_config() {
  SyntheticConfig c;
  c.emotions = {"Angry", "Disgust", "Fear", "Happy", "Sad", "Surprise", "Neutral"};
  c.emotion_to_aus = {
      {"Angry", {4, 9, 25}},  {"Disgust", {1, 4, 6}},     {"Fear", {5, 25}}, {"Happy", {6, 12, 25}},
      {"Sad", {12, 17}},      {"Surprise", {2, 25, 26}}, {"Neutral", {}},
  };
  c.au_ids = {1, 2, 4, 5, 6, 9, 12, 17, 25, 26};
  return c;
}

CompoundConfig default_compound_config() {
  CompoundConfig c;
  c.classes = {
      {"angrily disgusted", {"Angry", "Disgust"}},   {"angrily surprised", {"Angry", "Surprise"}},
      {"fearfully angry", {"Fear", "Angry"}},        {"fearfully surprised", {"Fear", "Surprise"}},
      {"happily disgusted", {"Happy", "Disgust"}},   {"happily surprised", {"Happy", "Surprise"}},
      {"sadly angry", {"Sad", "Angry"}},             {"sadly disgusted", {"Sad", "Disgust"}},
  };
  c.test_counts = {19, 25, 19, 17, 486, 36, 15, 105};
  c.train_per_class = 15;
  return c;
}

void SyntheticConfig::validate() const {
  if (!(flip_noise >= 0.0 && flip_noise < 0.5)) {
    throw ConfigError("synthetic.flip_noise: must lie in [0, 0.5), got " + std::to_string(flip_noise));
  }
  if (!(feature_noise >= 0.0)) throw ConfigError("synthetic.feature_noise: must be >= 0");
  if (!(domain_shift >= 0.0)) throw ConfigError("synthetic.domain_shift: must be >= 0");
  if (!(projection_scale > 0.0)) throw ConfigError("synthetic.projection_scale: must be > 0");
  if (projection_dim == 0) throw ConfigError("synthetic.projection_dim: must be positive");
  if (train_samples == 0) throw ConfigError("synthetic.train_samples: must be positive");
  if (emotions.empty()) throw ConfigError("synthetic.emotions: must not be empty");
  if (au_ids.empty()) throw ConfigError("synthetic.au_ids: must not be empty");
  std::set<int> aus(au_ids.begin(), au_ids.end());
  if (aus.size() != au_ids.size()) throw ConfigError("synthetic.au_ids: repeated AU id");
  std::set<std::string> names(emotions.begin(), emotions.end());
  if (names.size() != emotions.size()) throw ConfigError("synthetic.emotions: repeated emotion");
  for (const auto& e : emotions) {
    if (!emotion_to_aus.count(e)) throw ConfigError("synthetic.emotion_to_aus: no entry for emotion '" + e + "'");
  }
  for (const auto& [e, list] : emotion_to_aus) {
    if (!names.count(e)) throw ConfigError("synthetic.emotion_to_aus: '" + e + "' is not in synthetic.emotions");
    for (int au : list) {
      if (!aus.count(au)) {
        throw ConfigError("synthetic.emotion_to_aus: AU " + std::to_string(au) + " of '" + e +
                          "' is not in synthetic.au_ids");
      }
    }
  }
  if (compound) {
    if (compound->classes.empty()) throw ConfigError("synthetic.compound.classes: must not be empty");
    if (compound->test_counts.size() != compound->classes.size()) {
      throw ConfigError("synthetic.compound.test_counts: needs one count per compound class");
    }
    for (const auto& [name, parts] : compound->classes) {
      for (const auto& part : {parts.first, parts.second}) {
        if (!names.count(part)) {
          throw ConfigError("synthetic.compound.classes: '" + name + "' references unknown emotion '" + part + "'");
        }
      }
    }
  }
}

std::vector<std::uint8_t> SyntheticConfig::au_pattern(const std::string& emotion) const {
  const auto it = emotion_to_aus.find(emotion);
  if (it == emotion_to_aus.end()) throw ConfigError("unknown emotion '" + emotion + "'");
  std::vector<std::uint8_t> bits(au_ids.size(), 0);
  for (int au : it->second) {
    const auto pos = std::find(au_ids.begin(), au_ids.end(), au);
    bits[static_cast<std::size_t>(pos - au_ids.begin())] = 1;
  }
  return bits;
}

std::vector<std::vector<std::size_t>> generating_au_sets(const SyntheticConfig& config,
                                                         std::span<const std::string> emotions) {
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& e : emotions) {
    const auto bits = config.au_pattern(e);
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < bits.size(); ++j) {
      if (bits[j]) cols.push_back(j);
    }
    sets.push_back(std::move(cols));
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

enum Stream : std::uint64_t { kProjection = 0, kDomain = 1, kEmotionData = 2, kAuData = 3, kCompoundData = 4 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct FeatureModel {
  std::size_t dim = 0;
  std::size_t aus = 0;
  std::vector<double> projection;                // [dim x aus]
  std::vector<std::vector<double>> offsets;      // one per Stream data index
  double flip = 0.0;
  double noise = 0.0;
};

FeatureModel make_feature_model(const SyntheticConfig& c) {
  FeatureModel m;
  m.dim = c.projection_dim;
  m.aus = c.au_ids.size();
  m.flip = c.flip_noise;
  m.noise = c.feature_noise;
  auto rng = stream_rng(c.seed, kProjection);
  std::normal_distribution<double> normal(0.0, c.projection_scale);
  m.projection.resize(m.dim * m.aus);
  for (auto& v : m.projection) v = normal(rng);

  auto drng = stream_rng(c.seed, kDomain);
  std::normal_distribution<double> unit(0.0, 1.0 / std::sqrt(static_cast<double>(m.dim)));
  m.offsets.resize(3, std::vector<double>(m.dim));
  for (auto& off : m.offsets) {
    for (auto& v : off) v = unit(drng) * c.domain_shift;
  }
  return m;
}

// Flips bits in place and returns the projected, shifted, noisy features.
std::vector<double> emit(const FeatureModel& m, std::vector<std::uint8_t>& bits, std::size_t domain,
                         std::mt19937_64& rng) {
  std::bernoulli_distribution flip(m.flip);
  for (auto& b : bits) {
    if (flip(rng)) b ^= 1;
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x(m.dim);
  for (std::size_t r = 0; r < m.dim; ++r) {
    double acc = m.offsets[domain][r];
    for (std::size_t a = 0; a < m.aus; ++a) acc += m.projection[r * m.aus + a] * bits[a];
    x[r] = acc + m.noise * noise(rng);
  }
  return x;
}

std::string sample_id(const std::string& prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << '-';
  os.width(6);
  os.fill('0');
  os << i;
  return os.str();
}

LabelSpace au_space(const SyntheticConfig& c) {
  LabelSpace s{"au", {}, LabelKind::multilabel_binary};
  for (int au : c.au_ids) s.classes.push_back("AU" + std::to_string(au));
  return s;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const auto model = make_feature_model(config);
  SyntheticData out;
  out.projection = model.projection;
  const std::size_t total = config.train_samples + config.test_samples;

  out.emotions = Dataset{"emotions", LabelSpace{"emotion", config.emotions, LabelKind::categorical_exclusive},
                         model.dim, config.train_samples, {}};
  out.aus = Dataset{"aus", au_space(config), model.dim, config.train_samples, {}};

  const std::pair<Dataset*, Stream> jobs[] = {{&out.emotions, kEmotionData}, {&out.aus, kAuData}};
  for (const auto& [dataset, stream] : jobs) {
    auto rng = stream_rng(config.seed, stream);
    std::uniform_int_distribution<std::size_t> pick(0, config.emotions.size() - 1);
    const std::size_t domain = stream - kEmotionData;
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t e = pick(rng);
      auto bits = config.au_pattern(config.emotions[e]);
      Sample s;
      s.id = sample_id(dataset->name, i);
      s.features = emit(model, bits, domain, rng);
      if (stream == kEmotionData) {
        s.labels.assign(config.emotions.size(), 0);
        s.labels[e] = 1;
      } else {
        s.labels = bits;
      }
      out.truth.push_back(TruthRecord{s.id, config.emotions[e], bits});
      dataset->samples.push_back(std::move(s));
    }
  }
  return out;
}

CompoundData generate_compound(const SyntheticConfig& config) {
  config.validate();
  if (!config.compound) throw ConfigError("synthetic.compound: no compound classes configured");
  const auto& cc = *config.compound;
  const auto model = make_feature_model(config);

  LabelSpace space{"compound", {}, LabelKind::categorical_exclusive};
  std::vector<std::vector<std::uint8_t>> patterns;
  for (const auto& [name, parts] : cc.classes) {
    space.classes.push_back(name);
    auto bits = config.au_pattern(parts.first);
    const auto other = config.au_pattern(parts.second);
    for (std::size_t j = 0; j < bits.size(); ++j) bits[j] |= other[j];
    patterns.push_back(std::move(bits));
  }

  CompoundData out;
  out.compound = Dataset{"compound", space, model.dim, cc.train_per_class * cc.classes.size(), {}};
  auto rng = stream_rng(config.seed, kCompoundData);
  std::size_t next = 0;
  auto add = [&](std::size_t cls) {
    auto bits = patterns[cls];
    Sample s;
    s.id = sample_id("compound", next++);
    s.features = emit(model, bits, 2, rng);
    s.labels.assign(cc.classes.size(), 0);
    s.labels[cls] = 1;
    out.truth.push_back(TruthRecord{s.id, cc.classes[cls].first, bits});
    out.compound.samples.push_back(std::move(s));
  };
  for (std::size_t r = 0; r < cc.train_per_class; ++r)
    for (std::size_t c = 0; c < cc.classes.size(); ++c) add(c);
  for (std::size_t c = 0; c < cc.classes.size(); ++c)
    for (std::size_t r = 0; r < cc.test_counts[c]; ++r) add(c);
  return out;
}

// ---------------------------------------------------------------------------
// Sampler

BatchSampler::BatchSampler(std::vector<const Dataset*> datasets, LabelUnion label_union, BatchMode mode,
                           std::size_t batch_size, std::uint64_t seed)
    : datasets_(std::move(datasets)), union_(std::move(label_union)), mode_(mode), batch_size_(batch_size), rng_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be >= 1");
  if (datasets_.empty()) throw DataError("sampler needs at least one dataset");
  if (union_.dataset_count() != datasets_.size()) {
    throw ContractError("label union has " + std::to_string(union_.dataset_count()) + " spaces for " +
                        std::to_string(datasets_.size()) + " datasets");
  }
  for (std::size_t k = 0; k < datasets_.size(); ++k) {
    const auto* d = datasets_[k];
    if (d->samples.empty()) throw DataError("dataset '" + d->name + "' is empty");
    if (!(d->space == union_.space(k))) {
      throw ContractError("dataset '" + d->name + "' does not match label union space " + std::to_string(k));
    }
    if (d->feature_dim != datasets_[0]->feature_dim) {
      throw DataError("datasets disagree on feature dimension (" + std::to_string(d->feature_dim) + " vs " +
                      std::to_string(datasets_[0]->feature_dim) + ")");
    }
  }
  if (mode_ == BatchMode::mixed) {
    Cursor all;
    for (std::size_t k = 0; k < datasets_.size(); ++k)
      for (std::size_t i = 0; i < datasets_[k]->size(); ++i) all.order.emplace_back(k, i);
    all.pos = all.order.size();
    cursors_.push_back(std::move(all));
  } else {
    for (std::size_t k = 0; k < datasets_.size(); ++k) {
      Cursor c;
      for (std::size_t i = 0; i < datasets_[k]->size(); ++i) c.order.emplace_back(k, i);
      c.pos = c.order.size();
      cursors_.push_back(std::move(c));
    }
  }
}

std::pair<std::size_t, std::size_t> BatchSampler::draw(Cursor& cursor) {
  if (cursor.pos == cursor.order.size()) {
    std::shuffle(cursor.order.begin(), cursor.order.end(), rng_);
    cursor.pos = 0;
  }
  return cursor.order[cursor.pos++];
}

Batch BatchSampler::next() {
  Cursor& cursor = mode_ == BatchMode::mixed ? cursors_[0] : cursors_[drawn_ % cursors_.size()];
  const std::size_t dim = datasets_[0]->feature_dim;
  Batch b;
  std::vector<double> features;
  features.reserve(batch_size_ * dim);
  for (std::size_t n = 0; n < batch_size_; ++n) {
    const auto [k, i] = draw(cursor);
    const Sample& s = datasets_[k]->samples[i];
    features.insert(features.end(), s.features.begin(), s.features.end());
    b.targets.push_back(make_masked_target(union_, k, s.labels));
    b.dataset_ids.push_back(k);
    b.sample_indices.push_back(i);
    b.local_labels.push_back(s.labels);
  }
  b.features = Tensor::from({batch_size_, dim}, std::move(features));
  ++drawn_;
  return b;
}

// ---------------------------------------------------------------------------
// Files

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double parse_number(std::string_view field, const std::filesystem::path& path, std::size_t line,
                    const std::string& column) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ParseError(location(path, line) + ": column '" + column + "': invalid number '" + std::string(field) + "'");
  }
  return v;
}

std::uint8_t parse_bit(std::string_view field, const std::filesystem::path& path, std::size_t line,
                       const std::string& column) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw ParseError(location(path, line) + ": column '" + column + "': expected 0 or 1, got '" + std::string(field) + "'");
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void check_csv_name(const std::string& name) {
  if (name.find_first_of(",\n\r") != std::string::npos) {
    throw DataError("name '" + name + "' cannot be written to CSV (contains a separator)");
  }
}

}  // namespace

std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& stem,
                                   const std::string& ground_truth_file) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  const auto csv_name = stem + ".csv";
  {
    std::ofstream os(dir / csv_name, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / csv_name).string());
    os << "sample_id";
    for (std::size_t f = 0; f < dataset.feature_dim; ++f) os << ",f" << f;
    for (const auto& c : dataset.space.classes) {
      check_csv_name(c);
      os << ',' << c;
    }
    os << '\n';
    for (const auto& s : dataset.samples) {
      check_csv_name(s.id);
      os << s.id;
      for (double v : s.features) os << ',' << format_double(v);
      for (auto l : s.labels) os << ',' << static_cast<int>(l);
      os << '\n';
    }
    if (!os) throw DataError("failed writing " + (dir / csv_name).string());
  }
  Json manifest{{"format_version", 1},
                {"name", dataset.name},
                {"label_space", to_json(dataset.space)},
                {"feature_dim", dataset.feature_dim},
                {"samples", csv_name},
                {"train_count", dataset.train_count}};
  if (!ground_truth_file.empty()) manifest["ground_truth"] = ground_truth_file;
  const auto manifest_path = dir / (stem + ".json");
  std::ofstream ms(manifest_path, std::ios::binary | std::ios::trunc);
  if (!ms) throw DataError("cannot write " + manifest_path.string());
  ms << dump_stable(manifest);
  return manifest_path;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream ms(manifest_path);
  if (!ms) throw DataError("cannot open manifest " + manifest_path.string());
  Json manifest;
  try {
    manifest = Json::parse(ms);
  } catch (const Json::parse_error& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }

  static const std::set<std::string> known{"format_version", "name",        "label_space", "feature_dim",
                                           "samples",        "train_count", "ground_truth"};
  for (const auto& [key, _] : manifest.items()) {
    if (!known.count(key)) throw ValidationError(manifest_path.string() + ": unknown manifest key '" + key + "'");
  }

  Dataset d;
  std::filesystem::path csv_path;
  try {
    if (manifest.at("format_version").get<int>() != 1) {
      throw ValidationError(manifest_path.string() + ": unsupported format_version");
    }
    d.name = manifest.at("name").get<std::string>();
    d.space = label_space_from_json(manifest.at("label_space"));
    d.feature_dim = manifest.at("feature_dim").get<std::size_t>();
    d.train_count = manifest.at("train_count").get<std::size_t>();
    csv_path = manifest_path.parent_path() / manifest.at("samples").get<std::string>();
  } catch (const Json::exception& e) {
    throw ParseError(manifest_path.string() + ": field error: " + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }

  std::ifstream cs(csv_path);
  if (!cs) throw DataError("cannot open samples file " + csv_path.string());
  const std::size_t width = 1 + d.feature_dim + d.space.size();
  std::vector<std::string> columns{"sample_id"};
  for (std::size_t f = 0; f < d.feature_dim; ++f) columns.push_back("f" + std::to_string(f));
  for (const auto& c : d.space.classes) columns.push_back(c);

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(cs, line)) throw ParseError(location(csv_path, 1) + ": missing header row");
  ++lineno;
  strip_cr(line);
  const auto header = split_commas(line);
  if (header.size() != width) {
    throw ValidationError(location(csv_path, lineno) + ": header has " + std::to_string(header.size()) +
                          " columns, manifest implies " + std::to_string(width) + " (1 id + " +
                          std::to_string(d.feature_dim) + " features + " + std::to_string(d.space.size()) +
                          " classes)");
  }
  for (std::size_t c = 0; c < width; ++c) {
    if (header[c] != columns[c]) {
      throw ValidationError(location(csv_path, lineno) + ": header column " + std::to_string(c + 1) + " is '" +
                            std::string(header[c]) + "', expected '" + columns[c] + "'");
    }
  }
  while (std::getline(cs, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != width) {
      throw ValidationError(location(csv_path, lineno) + ": row has " + std::to_string(fields.size()) +
                            " columns, expected " + std::to_string(width));
    }
    Sample s;
    s.id = std::string(fields[0]);
    if (s.id.empty()) throw ParseError(location(csv_path, lineno) + ": column 'sample_id': empty");
    s.features.reserve(d.feature_dim);
    for (std::size_t f = 0; f < d.feature_dim; ++f) {
      s.features.push_back(parse_number(fields[1 + f], csv_path, lineno, columns[1 + f]));
    }
    for (std::size_t c = 0; c < d.space.size(); ++c) {
      const std::size_t at = 1 + d.feature_dim + c;
      s.labels.push_back(parse_bit(fields[at], csv_path, lineno, columns[at]));
    }
    d.samples.push_back(std::move(s));
  }
  try {
    d.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  return d;
}

void save_ground_truth(std::span<const TruthRecord> truth, std::span<const int> au_ids,
                       const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "sample_id,emotion";
  for (int au : au_ids) os << ",AU" << au;
  os << '\n';
  for (const auto& r : truth) {
    if (r.aus.size() != au_ids.size()) throw ContractError("truth record " + r.sample_id + " has wrong AU width");
    check_csv_name(r.emotion);
    os << r.sample_id << ',' << r.emotion;
    for (auto b : r.aus) os << ',' << static_cast<int>(b);
    os << '\n';
  }
}

std::vector<TruthRecord> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError(location(path, 1) + ": missing header row");
  strip_cr(line);
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "sample_id" || header[1] != "emotion") {
    throw ParseError(location(path, 1) + ": header must start with sample_id,emotion");
  }
  std::vector<TruthRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ValidationError(location(path, lineno) + ": row has " + std::to_string(fields.size()) +
                            " columns, expected " + std::to_string(header.size()));
    }
    TruthRecord r{std::string(fields[0]), std::string(fields[1]), {}};
    for (std::size_t c = 2; c < fields.size(); ++c) r.aus.push_back(parse_bit(fields[c], path, lineno, std::string(header[c])));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace smtl
