#include "smtl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "smtl/errors.hpp"

namespace smtl {

namespace {

std::string json_type(const Json& j) { return j.type_name(); }

// Reads the keys of one object section and rejects anything left over.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object, got " + json_type(j_));
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + ": expected a number, got " + json_type(*v));
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(where(key) + ": expected a non-negative integer, got " + v->dump());
      }
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, std::uint64_t& out, int) {
    std::size_t tmp = out;
    read(key, tmp);
    out = tmp;
  }
  void read(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + ": expected true or false, got " + v->dump());
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + ": expected a string, got " + v->dump());
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
std::vector<T> read_list(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected a list, got " + json_type(v));
  std::vector<T> out;
  for (const auto& e : v) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!e.is_string()) throw ConfigError(where + ": expected strings, got " + e.dump());
    } else {
      if (!e.is_number_integer()) throw ConfigError(where + ": expected integers, got " + e.dump());
    }
    out.push_back(e.get<T>());
  }
  return out;
}

Normalizer parse_normalizer(const std::string& text, const std::string& where) {
  if (text == "per_dataset") return Normalizer::per_dataset;
  if (text == "union_size") return Normalizer::union_size;
  throw ConfigError(where + ": unknown normalizer '" + text + "' (expected per_dataset or union_size)");
}

std::string_view normalizer_name(Normalizer n) { return n == Normalizer::per_dataset ? "per_dataset" : "union_size"; }

void read_train(const Json& j, const std::string& path, TrainConfig& t) {
  Section s(j, path);
  s.read("batch_size", t.batch_size);
  s.read("lr0", t.lr0);
  s.read("decay_every_steps", t.decay_every_steps);
  s.read("decay_factor", t.decay_factor);
  s.read("total_steps", t.total_steps);
  s.read("augmentation_sigma", t.augmentation_sigma);
  std::string norm(normalizer_name(t.normalizer));
  s.read("normalizer", norm);
  t.normalizer = parse_normalizer(norm, s.where("normalizer"));
  s.read("eval_every", t.eval_every);
  s.finish();
}

void read_compound(const Json& j, const std::string& path, CompoundConfig& c) {
  Section s(j, path);
  s.read("train_per_class", c.train_per_class);
  if (const auto* classes = s.find("classes")) {
    if (!classes->is_array()) throw ConfigError(s.where("classes") + ": expected a list");
    c.classes.clear();
    c.test_counts.clear();
    for (std::size_t i = 0; i < classes->size(); ++i) {
      const std::string where = s.where("classes") + "[" + std::to_string(i) + "]";
      Section e((*classes)[i], where);
      std::string name;
      std::size_t test_count = 0;
      e.read("name", name);
      e.read("test_count", test_count);
      const auto* parts = e.find("components");
      if (!parts) throw ConfigError(where + ".components: required");
      const auto comps = read_list<std::string>(*parts, where + ".components");
      if (comps.size() != 2) throw ConfigError(where + ".components: expected exactly two basic emotions");
      e.finish();
      c.classes.push_back({name, {comps[0], comps[1]}});
      c.test_counts.push_back(test_count);
    }
  }
  s.finish();
}

void read_synthetic(const Json& j, SyntheticConfig& c) {
  Section s(j, "synthetic");
  s.read("flip_noise", c.flip_noise);
  s.read("feature_noise", c.feature_noise);
  s.read("projection_dim", c.projection_dim);
  s.read("projection_scale", c.projection_scale);
  s.read("domain_shift", c.domain_shift);
  s.read("train_samples", c.train_samples);
  s.read("test_samples", c.test_samples);
  if (const auto* v = s.find("emotions")) c.emotions = read_list<std::string>(*v, s.where("emotions"));
  if (const auto* v = s.find("au_ids")) c.au_ids = read_list<int>(*v, s.where("au_ids"));
  if (const auto* v = s.find("emotion_to_aus")) {
    if (!v->is_object()) throw ConfigError(s.where("emotion_to_aus") + ": expected an object");
    c.emotion_to_aus.clear();
    for (auto it = v->begin(); it != v->end(); ++it) {
      c.emotion_to_aus[it.key()] = read_list<int>(it.value(), s.where("emotion_to_aus") + "." + it.key());
    }
  }
  if (const auto* v = s.find("compound")) {
    if (v->is_null()) {
      c.compound.reset();
    } else {
      if (!c.compound) c.compound = default_compound_config();
      read_compound(*v, s.where("compound"), *c.compound);
    }
  }
  s.finish();
}

}  // namespace

void ExperimentConfig::finalize() {
  synthetic.seed = seed;
  train.seed = seed;
  compound_train.seed = seed;
  network.input_dim = synthetic.projection_dim;
  synthetic.validate();
  if (network.width == 0) throw ConfigError("network.width: must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
  train.validate();
  try {
    compound_train.validate();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    if (msg.rfind("train.", 0) == 0) msg = "compound_" + msg;
    throw ConfigError(msg);
  }
  if (eval.coherence_k && (*eval.coherence_k == 0 || *eval.coherence_k > synthetic.au_ids.size())) {
    throw ConfigError("eval.coherence_k: must lie in [1, " + std::to_string(synthetic.au_ids.size()) + "]");
  }
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.synthetic = default_synthetic_config();
  c.synthetic.compound = default_compound_config();
  c.compound_train.total_steps = 8000;
  c.compound_train.decay_every_steps = 2000;
  c.finalize();
  return c;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c = default_experiment_config();
  Section s(j, "");
  s.read("seed", c.seed, 0);
  s.read("out_dir", c.out_dir);
  s.read("checkpoint_every", c.checkpoint_every);
  if (const auto* v = s.find("synthetic")) read_synthetic(*v, c.synthetic);
  if (const auto* v = s.find("network")) {
    Section n(*v, "network");
    n.read("width", c.network.width);
    n.read("blocks", c.network.blocks);
    n.read("normalization", c.network.normalization);
    n.finish();
  }
  if (const auto* v = s.find("train")) read_train(*v, "train", c.train);
  if (const auto* v = s.find("compound_train")) read_train(*v, "compound_train", c.compound_train);
  if (const auto* v = s.find("eval")) {
    Section e(*v, "eval");
    e.read("group_by_truth", c.eval.group_by_truth);
    if (const auto* k = e.find("coherence_k")) {
      if (k->is_null()) {
        c.eval.coherence_k.reset();
      } else {
        std::size_t kk = 0;
        e.read("coherence_k", kk);
        c.eval.coherence_k = kk;
      }
    }
    e.finish();
  }
  s.finish();
  c.finalize();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

Json to_json(const TrainConfig& t) {
  Json j;
  j["batch_size"] = t.batch_size;
  j["lr0"] = t.lr0;
  j["decay_every_steps"] = t.decay_every_steps;
  j["decay_factor"] = t.decay_factor;
  j["total_steps"] = t.total_steps;
  j["augmentation_sigma"] = t.augmentation_sigma;
  j["normalizer"] = normalizer_name(t.normalizer);
  j["eval_every"] = t.eval_every;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  Json s;
  s["flip_noise"] = c.synthetic.flip_noise;
  s["feature_noise"] = c.synthetic.feature_noise;
  s["projection_dim"] = c.synthetic.projection_dim;
  s["projection_scale"] = c.synthetic.projection_scale;
  s["domain_shift"] = c.synthetic.domain_shift;
  s["train_samples"] = c.synthetic.train_samples;
  s["test_samples"] = c.synthetic.test_samples;
  s["emotions"] = c.synthetic.emotions;
  s["au_ids"] = c.synthetic.au_ids;
  Json map = Json::object();
  for (const auto& e : c.synthetic.emotions) {
    auto it = c.synthetic.emotion_to_aus.find(e);
    map[e] = it == c.synthetic.emotion_to_aus.end() ? std::vector<int>{} : it->second;
  }
  s["emotion_to_aus"] = map;
  if (c.synthetic.compound) {
    Json cc;
    cc["train_per_class"] = c.synthetic.compound->train_per_class;
    Json classes = Json::array();
    for (std::size_t i = 0; i < c.synthetic.compound->classes.size(); ++i) {
      const auto& [name, parts] = c.synthetic.compound->classes[i];
      classes.push_back(Json{{"name", name},
                             {"components", {parts.first, parts.second}},
                             {"test_count", c.synthetic.compound->test_counts[i]}});
    }
    cc["classes"] = classes;
    s["compound"] = cc;
  } else {
    s["compound"] = nullptr;
  }
  j["synthetic"] = s;
  j["network"] = Json{{"width", c.network.width}, {"blocks", c.network.blocks}, {"normalization", c.network.normalization}};
  j["train"] = to_json(c.train);
  j["compound_train"] = to_json(c.compound_train);
  Json e;
  e["group_by_truth"] = c.eval.group_by_truth;
  if (c.eval.coherence_k) {
    e["coherence_k"] = *c.eval.coherence_k;
  } else {
    e["coherence_k"] = nullptr;
  }
  j["eval"] = e;
  return j;
}

}  // namespace smtl
