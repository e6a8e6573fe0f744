#pragma once

#include <filesystem>
#include <span>

#include "ilm/optim.hpp"

namespace ilm {

// JSON checkpoint: {"format": "ilm-params-v1", "parameters": [{name, shape,
// values}, ...]}. Values are flattened row-major and serialized with
// shortest-round-trip formatting, so 64-bit values survive save/load exactly.
void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params);

// Loads into an existing parameter set; names and shapes must match exactly.
void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace ilm
