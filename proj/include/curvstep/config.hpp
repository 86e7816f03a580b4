#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "curvstep/method.hpp"

namespace curvstep {

using Json = nlohmann::json;

/// Malformed config document; the message names the offending JSON path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json to_json(const CgConfig& c);
Json to_json(const Schedule& s);
Json to_json(const Link& l);
Json to_json(const MethodSpec& spec);

CgConfig cg_config_from_json(const Json& j, const std::string& path = "cg");
Schedule schedule_from_json(const Json& j, const std::string& path = "schedule");
Link link_from_json(const Json& j, const std::string& path = "link");
MethodSpec method_spec_from_json(const Json& j, const std::string& path = "method");

/// Preset spec with a JSON merge patch applied. Extra keys: "schedule" is
/// merge-patched onto the first scale_by_schedule link's schedule and "lr"
/// sets that schedule's init_value.
MethodSpec preset_with_overrides(std::string_view preset, const Json& overrides = Json::object());

/// assemble() that throws AssemblyFailure instead of returning the error.
Method assemble_or_throw(const MethodSpec& spec, const Model& model);

/// assemble(preset_with_overrides(...)); throws AssemblyFailure on rejection
/// and std::invalid_argument for an unknown preset.
Method make(std::string_view preset, const Model& model, const Json& overrides = Json::object());

}  // namespace curvstep
