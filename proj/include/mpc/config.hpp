#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mpc/core_model.hpp"
#include "mpc/simulator.hpp"

namespace mpc {

/// Flat `key = value` text, one entry per line, `#` starts a comment. Keys are
/// the field names of ModelConfig and SimScenario; `fcs_error_sigma` sets both.
/// temp_window_c is written as "low,high". Unknown keys and unparsable values
/// throw SchemaError.
void apply_config(std::istream& in, ModelConfig& model, SimScenario& scenario);
void load_config(const std::filesystem::path& path, ModelConfig& model, SimScenario& scenario);

}  // namespace mpc
