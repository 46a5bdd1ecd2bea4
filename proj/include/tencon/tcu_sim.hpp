#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tencon/hw.hpp"
#include "tencon/tensor_graph.hpp"

namespace tencon::tcu {

/// One of the six operating modes of a transposable contraction engine:
/// which operand is held in the PE registers, whether the held operand is
/// fed through the horizontal or vertical port, and (output-stationary)
/// which operand binds to which port.
struct CeMode {
  hw::Stationarity st = hw::Stationarity::WS;
  bool ib_vertical = true;     // held/bound operand enters via vertical port
  bool swap_operands = false;  // bind A (instead of B) as the held operand
  std::string name() const;
};

std::vector<CeMode> all_ce_modes();

struct TileTooLarge : GraphError { using GraphError::GraphError; };

/// Cycle-level record of one tile executed on a single CE.
/// activity[t] is a bitmask of PEs that perform a MAC at cycle t.
struct CeTrace {
  std::int64_t cycles = 0;
  std::int64_t macs = 0;
  int rows = 0, cols = 0;
  std::vector<std::uint32_t> activity;
  std::string to_json() const;
};

/// Exact latency of one tile, derived from the MAC schedule the simulator
/// also uses (weight/input-stationary: skewed operand wavefront after an
/// optional preload; output-stationary: skewed accumulation plus a skewed
/// drain of the finished partial sums).
std::int64_t ce_tile_cycles(hw::Stationarity st, std::int64_t rows_used,
                            std::int64_t cols_used, std::int64_t stream_len,
                            bool preload_hidden);

/// Run one logical GEMM tile C[M,N] += A[M,K] * B[K,N] on a single CE.
/// Tile bounds depend on the mode: WS needs K<=ce_rows && N<=ce_cols,
/// IS needs K<=ce_rows && M<=ce_cols, OS needs M<=ce_rows && N<=ce_cols.
NdArray run_ce(const CeMode& mode, const NdArray& a, const NdArray& b,
               int ce_rows, int ce_cols, CeTrace* trace = nullptr,
               bool preload_hidden = false);

struct TcuOperand {
  NdArray value;
  std::vector<DimId> dims;
};

struct TcuResult {
  NdArray value;
  std::vector<DimId> out_dims;
  std::int64_t cycles = 0;
  std::int64_t macs = 0;
  std::int64_t tiles = 0;
};

/// Run a whole contraction on the multi-CE unit under a given mapping:
/// tiles the flattened GEMM over the spatial dims, executes every tile
/// through run_ce, routes operand distribution and cross-CE reduction
/// through the butterfly fabrics, and returns the exact numeric result.
TcuResult run_tcu(const TcuOperand& a, const TcuOperand& b,
                  const std::map<DimId, Dim>& dim_table, const hw::Mapping& m,
                  const hw::HardwareConfig& hw);

}  // namespace tencon::tcu
