#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tencon/tensor_graph.hpp"

namespace tencon::hw {

enum class Stationarity { WS, IS, OS };

const char* to_string(Stationarity s);

/// Per-element / per-op energies. Shipped defaults are order-of-magnitude
/// placeholders (relative costs follow the usual SRAM < DRAM hierarchy);
/// every acceptance property uses ratios or orderings, never absolute joules.
struct EnergyTable {
  double mac = 1.0;
  double reg = 0.1;
  double sram_read = 5.0;
  double sram_write = 5.0;
  double dram_read = 200.0;
  double dram_write = 200.0;
  double noc_hop = 0.3;
};

struct HardwareConfig {
  std::string name = "fetta";
  int num_ces = 16;
  int ce_rows = 4;
  int ce_cols = 4;
  double frequency_hz = 1e9;
  std::int64_t unified_mem_bytes = 512 * 1024;
  int mem_banks = 16;
  int bank_row_elems = 4;
  std::int64_t accum_mem_bytes = 128 * 1024;
  double dram_bw_bytes_per_s = 25.6e9;
  int elem_bytes = 2;
  EnergyTable energy;

  bool transposable_ce = true;
  bool flexible_distribution = true;
  bool flexible_reduction = true;
  std::set<Stationarity> dataflow_modes = {Stationarity::WS, Stationarity::IS,
                                           Stationarity::OS};

  std::int64_t total_macs() const {
    return static_cast<std::int64_t>(num_ces) * ce_rows * ce_cols;
  }
  double dram_bytes_per_cycle() const {
    return dram_bw_bytes_per_s / frequency_hz;
  }
};

/// Built-in accelerator presets. All share 256 MACs and the same memory
/// sizes; they differ in flexibility flags and array organization.
HardwareConfig preset_fetta();
HardwareConfig preset_tpu_like();
HardwareConfig preset_treta_like();
HardwareConfig preset_sigma_like();
HardwareConfig hardware_preset(const std::string& name);
std::vector<std::string> hardware_preset_names();

/// Dim order of one tensor in memory, innermost (fastest-varying) last.
/// The innermost dim is what a memory line holds contiguously, i.e. what can
/// be fetched in parallel.
struct Layout {
  std::vector<DimId> dims;
  DimId innermost() const { return dims.empty() ? -1 : dims.back(); }
  bool operator==(const Layout& o) const { return dims == o.dims; }
};

Layout natural_layout(const std::vector<DimId>& dims);
Layout layout_with_innermost(const std::vector<DimId>& dims, DimId inner);

enum class SpatialAxis { CeRow, CeCol, CeIndex };

/// One contraction's assignment to the array: which dims are spatial (and
/// how wide), which dim streams through the array, and the operand layouts
/// the dataflow expects.
struct Mapping {
  Stationarity st = Stationarity::WS;
  bool stationary_is_b = true;  // WS/IS binding: which operand is held

  DimId row_dim = -1;
  DimId col_dim = -1;
  DimId ce_dim = -1;  // -1: no inter-CE split
  std::int64_t row_extent = 1;
  std::int64_t col_extent = 1;
  std::int64_t ce_extent = 1;

  Layout layout_a, layout_b, layout_out;

  std::map<DimId, std::pair<SpatialAxis, std::int64_t>> spatial() const;
};

struct PerfReport {
  double cycles = 0;
  double energy = 0;
  double edp = 0;  // seconds * energy, refreshed by finalize()
  double utilization = 0;
  std::int64_t macs = 0;
  std::map<std::string, double> traffic;  // dram/sram/noc/reg element counts
  std::int64_t reorder_events = 0;
  double reorder_dram_bytes = 0;

  void finalize(const HardwareConfig& hw);
  void merge(const PerfReport& other);  // additive; recompute util/edp after
};

struct CapacityExceeded : GraphError { using GraphError::GraphError; };
struct NoLegalMapping : GraphError { using GraphError::GraphError; };
struct UnroutablePattern : GraphError { using GraphError::GraphError; };

}  // namespace tencon::hw
