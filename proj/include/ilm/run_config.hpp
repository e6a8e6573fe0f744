#pragma once

#include <filesystem>
#include <string>

#include "ilm/orchestrator.hpp"

namespace ilm {

inline constexpr const char* kVersionString = "ilm 0.1.0";

// JSON <-> LoopConfig. Unknown keys are rejected; absent keys keep the struct
// defaults, so the config file and the C++ defaults cannot drift apart.
LoopConfig load_loop_config(const std::filesystem::path& path);
void apply_config_json(LoopConfig& cfg, const std::string& json_text, const std::string& origin);
std::string loop_config_to_json(const LoopConfig& cfg);

// Run manifest: resolved config, seeds, dataset hash, version, completion
// flag, wall-clock summary.
void write_manifest(const std::filesystem::path& path, const LoopConfig& resolved,
                    const DatasetBundle& bundle, bool complete, int episodes_done,
                    double total_seconds);

}  // namespace ilm
