#pragma once

#include <json.hpp>

#include "panconf/simulator.hpp"

namespace panconf::cli {

using Json = nlohmann::ordered_json;

/// Overlays the keys of `j` onto `cfg`. Unknown keys throw std::invalid_argument.
void apply_sim_json(const Json& j, SimConfig& cfg);

Json sim_config_json(const SimConfig& cfg);
Json sim_report_json(const SimReport& report);

}  // namespace panconf::cli
