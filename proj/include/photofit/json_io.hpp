// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "json.hpp"
#include "photofit/face.hpp"

namespace photofit {

using Json = nlohmann::json;

/// {"schema": id, "values": {name: value, ...}}
Json sliders_to_json(const SliderVector& s, const SliderSchema& schema = default_schema());
SliderVector sliders_from_json(const Json& j, const SliderSchema& schema = default_schema());

/// {"id": ..., "sliders": [{"name", "group"}], "groups": {group: [indices]}}
Json schema_to_json(const SliderSchema& schema);

}  // namespace photofit
