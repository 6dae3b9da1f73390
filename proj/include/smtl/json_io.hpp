#pragma once

// JSON conversions shared by manifests, checkpoints, configs and summaries.

#include "json.hpp"
#include "smtl/labels.hpp"
#include "smtl/nn.hpp"

namespace smtl {

using Json = nlohmann::ordered_json;

Json to_json(const LabelSpace& space);
LabelSpace label_space_from_json(const Json& j);

Json to_json(const TrunkSpec& trunk);
Json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const Json& j);

// Serializes with a fixed layout (2-space indent, trailing newline) so that
// identical content always produces identical bytes.
std::string dump_stable(const Json& j);

}  // namespace smtl
