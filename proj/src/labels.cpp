#include "smtl/labels.hpp"

#include <algorithm>
#include <set>

#include "smtl/errors.hpp"

namespace smtl {

std::string_view to_string(LabelKind kind) {
  return kind == LabelKind::categorical_exclusive ? "categorical_exclusive" : "multilabel_binary";
}

LabelKind parse_label_kind(std::string_view text) {
  if (text == "categorical_exclusive") return LabelKind::categorical_exclusive;
  if (text == "multilabel_binary") return LabelKind::multilabel_binary;
  throw ConfigError("unknown label kind '" + std::string(text) +
                    "' (expected categorical_exclusive or multilabel_binary)");
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view cls) const {
  const auto it = std::find(classes.begin(), classes.end(), cls);
  if (it == classes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

void LabelSpace::validate() const {
  if (name.empty()) throw ConfigError("label space name must not be empty");
  if (classes.empty()) throw ConfigError("label space '" + name + "' has no classes");
  std::set<std::string_view> seen;
  for (const auto& c : classes) {
    if (c.empty()) throw ConfigError("label space '" + name + "' has an empty class name");
    if (!seen.insert(c).second) throw ConfigError("label space '" + name + "' repeats class '" + c + "'");
  }
}

LabelUnion::LabelUnion(std::vector<LabelSpace> spaces) {
  for (auto& s : spaces) add(std::move(s));
}

std::size_t LabelUnion::add(LabelSpace space) {
  space.validate();
  if (find(space.name)) throw ConfigError("label space '" + space.name + "' registered twice");
  offsets_.push_back(total_);
  total_ += space.size();
  spaces_.push_back(std::move(space));
  return spaces_.size() - 1;
}

const LabelSpace& LabelUnion::space(std::size_t k) const {
  if (k >= spaces_.size()) throw ContractError("label union has no dataset " + std::to_string(k));
  return spaces_[k];
}

std::size_t LabelUnion::offset(std::size_t k) const {
  space(k);
  return offsets_[k];
}

std::size_t LabelUnion::global_index(std::size_t k, std::size_t local) const {
  if (local >= space(k).size()) {
    throw ContractError("class " + std::to_string(local) + " outside label space '" + spaces_[k].name + "'");
  }
  return offsets_[k] + local;
}

std::optional<std::size_t> LabelUnion::find(std::string_view space_name) const {
  for (std::size_t k = 0; k < spaces_.size(); ++k) {
    if (spaces_[k].name == space_name) return k;
  }
  return std::nullopt;
}

std::vector<bool> LabelUnion::mask(std::size_t k) const {
  std::vector<bool> m(total_, false);
  const auto off = offset(k);
  for (std::size_t j = 0; j < spaces_[k].size(); ++j) m[off + j] = true;
  return m;
}

std::vector<std::string> LabelUnion::qualified_names() const {
  std::vector<std::string> names;
  names.reserve(total_);
  for (const auto& s : spaces_) {
    for (const auto& c : s.classes) names.push_back(s.name + ":" + c);
  }
  return names;
}

std::size_t MaskedTarget::mask_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

void MaskedTarget::validate(std::size_t expected_length) const {
  if (targets.size() != expected_length || mask.size() != expected_length) {
    throw ContractError("masked target length " + std::to_string(targets.size()) + "/" + std::to_string(mask.size()) +
                        " does not match " + std::to_string(expected_length) + " outputs");
  }
  bool any = false;
  for (std::size_t j = 0; j < expected_length; ++j) {
    if (targets[j] > 1) throw ContractError("masked target value at " + std::to_string(j) + " is not 0/1");
    if (targets[j] == 1 && !mask[j]) {
      throw ContractError("masked target sets position " + std::to_string(j) + " outside its mask");
    }
    any = any || mask[j];
  }
  if (!any) throw ContractError("masked target has an empty mask (dataset " + std::to_string(dataset_id) + ")");
}

MaskedTarget make_masked_target(const LabelUnion& label_union, std::size_t k, std::span<const std::uint8_t> local) {
  const auto& space = label_union.space(k);
  if (local.size() != space.size()) {
    throw ContractError("expected " + std::to_string(space.size()) + " labels for space '" + space.name + "', got " +
                        std::to_string(local.size()));
  }
  MaskedTarget t;
  t.dataset_id = k;
  t.mask = label_union.mask(k);
  t.targets.assign(label_union.size(), 0);
  const auto off = label_union.offset(k);
  for (std::size_t j = 0; j < local.size(); ++j) t.targets[off + j] = local[j];
  return t;
}

}  // namespace smtl
