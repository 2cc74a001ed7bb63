#pragma once

// JSON forms of the run configuration, the simulation spec and ROI lists.
// Parsers start from the documented defaults, override only the keys present
// and reject unknown keys with a ConfigError naming the dotted key path.

#include <filesystem>
#include <vector>

#include "stftr/io.hpp"
#include "stftr/pipeline.hpp"
#include "stftr/simulator.hpp"

namespace stftr {

RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

// Omitted keys take their desk-default values; a "regions" array replaces
// the default regions wholesale.
SimulationSpec simulation_spec_from_json(const Json& j);
Json to_json(const SimulationSpec& spec);
SimulationSpec load_simulation_spec(const std::filesystem::path& path);

// {"rois": [{"name": ..., "sources": [...]}, ...]}
std::vector<NamedRoi> rois_from_json(const Json& j);
Json rois_to_json(const std::vector<NamedRoi>& rois);
std::vector<NamedRoi> load_rois(const std::filesystem::path& path);

Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

}  // namespace stftr
