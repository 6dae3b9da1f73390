#include "smtl/json_io.hpp"

#include "smtl/errors.hpp"

namespace smtl {

Json to_json(const LabelSpace& space) {
  return Json{{"name", space.name}, {"kind", std::string(to_string(space.kind))}, {"classes", space.classes}};
}

LabelSpace label_space_from_json(const Json& j) {
  try {
    LabelSpace s;
    s.name = j.at("name").get<std::string>();
    s.kind = parse_label_kind(j.at("kind").get<std::string>());
    s.classes = j.at("classes").get<std::vector<std::string>>();
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("label space: ") + e.what());
  }
}

Json to_json(const TrunkSpec& trunk) {
  return Json{{"input_dim", trunk.input_dim},
              {"width", trunk.width},
              {"blocks", trunk.blocks},
              {"normalization", trunk.normalization}};
}

Json to_json(const NetworkSpec& spec) {
  Json spaces = Json::array();
  for (const auto& s : spec.spaces) spaces.push_back(to_json(s));
  return Json{{"trunk", to_json(spec.trunk)},
              {"head", std::string(to_string(spec.head))},
              {"spaces", spaces},
              {"seed", spec.seed}};
}

NetworkSpec network_spec_from_json(const Json& j) {
  try {
    NetworkSpec spec;
    const auto& t = j.at("trunk");
    spec.trunk.input_dim = t.at("input_dim").get<std::size_t>();
    spec.trunk.width = t.at("width").get<std::size_t>();
    spec.trunk.blocks = t.at("blocks").get<std::size_t>();
    spec.trunk.normalization = t.at("normalization").get<bool>();
    spec.head = parse_head_strategy(j.at("head").get<std::string>());
    for (const auto& s : j.at("spaces")) spec.spaces.push_back(label_space_from_json(s));
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
}

std::string dump_stable(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace smtl
