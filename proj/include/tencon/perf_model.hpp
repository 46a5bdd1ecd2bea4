#pragma once

#include <map>
#include <string>
#include <vector>

#include "tencon/hw.hpp"
#include "tencon/training.hpp"

namespace tencon::perf {

/// All mappings of one contraction that are legal on the given hardware:
/// dataflows the array supports, both stationary-port bindings when the op
/// has no weight operand (weight-stationary holds the weight, input-
/// stationary holds an activation), every spatial row/col dim choice, and
/// inter-CE splits (contracted-dim splits only with a reduction fabric).
/// Flexibility flags never shrink this set, only layout acceptance differs.
std::vector<hw::Mapping> enumerate_mappings(const ContractionOp& op,
                                            const TrainingWorkload& w,
                                            const hw::HardwareConfig& hw);

/// Analytical cost of one contraction under one mapping: cycle count from
/// the tile schedule overlapped with DRAM transfers, per-level traffic, and
/// energy. Does not include layout-reorder costs (evaluate_workload adds
/// those based on what each tensor's producer left in memory).
hw::PerfReport evaluate_mapping(const ContractionOp& op,
                                const TrainingWorkload& w, const hw::Mapping& m,
                                const hw::HardwareConfig& hw);

/// Cost of rewriting one tensor to a different layout through DRAM:
/// one reorder event, a read and a write of every element.
hw::PerfReport layout_reorder_cost(std::int64_t elems,
                                   const hw::HardwareConfig& hw);

struct WorkloadEval {
  hw::PerfReport total;
  std::vector<hw::Mapping> chosen;  // per op, in workload op order
  std::vector<int> reorders;        // per op, reorder events charged
};

/// Map a whole workload: pick a mapping per op and a layout per tensor so
/// the summed cost (including reorders between producers and consumers) is
/// minimal. Joint branch-and-bound for small workloads, greedy beyond that.
WorkloadEval evaluate_workload(const TrainingWorkload& w,
                               const hw::HardwareConfig& hw);

double metric_value(const hw::PerfReport& r, const hw::HardwareConfig& hw,
                    const std::string& metric);  // flops|latency|energy|edp

}  // namespace tencon::perf
