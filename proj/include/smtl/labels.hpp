#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smtl {

enum class LabelKind { categorical_exclusive, multilabel_binary };

std::string_view to_string(LabelKind kind);
LabelKind parse_label_kind(std::string_view text);

// The classes one dataset annotates.
struct LabelSpace {
  std::string name;
  std::vector<std::string> classes;
  LabelKind kind = LabelKind::multilabel_binary;

  std::size_t size() const { return classes.size(); }
  std::optional<std::size_t> index_of(std::string_view cls) const;
  // Throws ConfigError on empty or duplicate class names.
  void validate() const;

  bool operator==(const LabelSpace&) const = default;
};

// Ordered concatenation of registered label spaces. Global indices depend
// only on registration order.
class LabelUnion {
 public:
  LabelUnion() = default;
  explicit LabelUnion(std::vector<LabelSpace> spaces);

  // Returns the dataset index k of the new space.
  std::size_t add(LabelSpace space);

  std::size_t size() const { return total_; }
  std::size_t dataset_count() const { return spaces_.size(); }
  const LabelSpace& space(std::size_t k) const;
  std::span<const LabelSpace> spaces() const { return spaces_; }
  std::size_t offset(std::size_t k) const;
  std::size_t global_index(std::size_t k, std::size_t local) const;
  std::optional<std::size_t> find(std::string_view space_name) const;
  std::vector<bool> mask(std::size_t k) const;
  // "space:class" for every union position.
  std::vector<std::string> qualified_names() const;

  bool operator==(const LabelUnion& other) const { return spaces_ == other.spaces_; }

 private:
  std::vector<LabelSpace> spaces_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// A sample's binary targets over the label union plus the positions its
// dataset annotates.
struct MaskedTarget {
  std::vector<std::uint8_t> targets;
  std::vector<bool> mask;
  std::size_t dataset_id = 0;

  std::size_t mask_count() const;
  // Throws ContractError if the mask is empty or a target is set outside it.
  void validate(std::size_t expected_length) const;

  bool operator==(const MaskedTarget&) const = default;
};

// Lifts dataset-local labels into union coordinates.
MaskedTarget make_masked_target(const LabelUnion& label_union, std::size_t k, std::span<const std::uint8_t> local);

}  // namespace smtl
