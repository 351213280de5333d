#pragma once

#include <string>

#include "phasebal/simulation.hpp"

namespace phasebal {

// JSON run configuration. Every section is optional and falls back to the
// default system; unknown keys are rejected. See README for the schema.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Full, explicit form of a config (round-trips through run_config_from_json).
std::string run_config_to_json(const RunConfig& run);

}  // namespace phasebal
