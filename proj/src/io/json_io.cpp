// SPDX-License-Identifier: Apache-2.0
#include "photofit/json_io.hpp"

namespace photofit {

Json sliders_to_json(const SliderVector& s, const SliderSchema& schema) {
  validate(s, schema);
  Json values = Json::object();
  for (int i = 0; i < schema.size(); ++i) values[schema.at(i).name] = s.values[std::size_t(i)];
  return {{"schema", schema.id()}, {"values", values}};
}

SliderVector sliders_from_json(const Json& j, const SliderSchema& schema) {
  const std::string id = j.value("schema", schema.id());
  if (id != schema.id()) throw ConfigError("unknown slider schema '" + id + "'");
  const Json& values = j.at("values");
  SliderVector s{schema.id(), std::vector<float>(std::size_t(schema.size()))};
  if (values.size() != std::size_t(schema.size())) {
    throw ConfigError("expected " + std::to_string(schema.size()) + " slider values");
  }
  for (auto it = values.begin(); it != values.end(); ++it) {
    s.values[std::size_t(schema.index_of(it.key()))] = it.value().get<float>();
  }
  validate(s, schema);
  return s;
}

Json schema_to_json(const SliderSchema& schema) {
  Json sliders = Json::array();
  for (const auto& s : schema.sliders()) sliders.push_back({{"name", s.name}, {"group", group_name(s.group)}});
  Json groups = Json::object();
  for (Group g : {Group::kEyes, Group::kNose, Group::kMouth, Group::kJaw, Group::kFixed}) {
    groups[std::string(group_name(g))] = schema.indices(g);
  }
  return {{"id", schema.id()}, {"sliders", sliders}, {"groups", groups}};
}

}  // namespace photofit
