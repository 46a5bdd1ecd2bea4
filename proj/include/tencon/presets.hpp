#pragma once

#include <string>
#include <vector>

#include "tencon/csse.hpp"
#include "tencon/hw.hpp"
#include "tencon/tensor_graph.hpp"

namespace tencon::bench {

struct ParseError : GraphError { using GraphError::GraphError; };

struct LayerSpec {
  std::string name;
  FormatSpec spec;
  search::EvalMode mode = search::EvalMode::Training;
  std::string comment;
};

/// Directory searched for named presets: $TENCON_PRESET_DIR if set, else the
/// directory compiled in at build time.
std::string preset_dir();

/// Workload files: {"layers":[{name, format, mode, batch, m_dims, n_dims,
/// ranks, bt_blocks?, comment?}, ...]}.
std::vector<LayerSpec> parse_workload_json(const std::string& text);

/// Accepts a preset name (resolved against preset_dir()) or a file path.
std::vector<LayerSpec> load_workload(const std::string& name_or_path);

/// Accepts a built-in hardware name (fetta, tpu-like, treta-like,
/// sigma-like) or a JSON file with HardwareConfig fields.
hw::HardwareConfig load_hardware(const std::string& name_or_path);
hw::HardwareConfig parse_hardware_json(const std::string& text);

std::vector<std::string> workload_preset_names();

}  // namespace tencon::bench
