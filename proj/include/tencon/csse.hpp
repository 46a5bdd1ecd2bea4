#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tencon/hw.hpp"
#include "tencon/perf_model.hpp"
#include "tencon/tensor_graph.hpp"

namespace tencon::search {

/// Full: every pairwise merge order. XRooted: chains that grow from the
/// input tensor, one connected node at a time (the classic
/// reconstruction-free baseline space).
enum class SearchSpace { Full, XRooted };

enum class FixedKind {
  AscendingIndex,  // fold cores into the input in core-index order
  Reconstruct      // rebuild the full weight first, then one big GEMM
};

enum class EvalMode { Inference, Training };

struct Candidate {
  ContractionSequence seq;
  std::int64_t macs = 0;
};

struct SearchStats {
  std::uint64_t states_expanded = 0;
  std::uint64_t branches_pruned = 0;
};

struct SearchOptions {
  int capacity = 64;   // candidates handed to the second stage
  bool prune = true;   // cut branches that already cost >= the worst keeper
  SearchSpace space = SearchSpace::Full;
};

/// Number of complete pairwise contraction orders of k tensors:
/// prod_{i=2..k} C(i,2).
std::uint64_t count_sequences(int k);

/// Stage 1: exhaustive merge-order enumeration keeping the `capacity`
/// cheapest sequences by MAC count (ties keep the first found).
std::vector<Candidate> stage1_search(const TensorGraph& g,
                                     const SearchOptions& opt = {},
                                     SearchStats* stats = nullptr);

struct RankedCandidate {
  ContractionSequence seq;
  std::int64_t macs = 0;
  hw::PerfReport report;
  double metric = 0;
};

/// Stage 2: re-rank stage-1 survivors on the hardware model (training mode
/// expands each sequence into its FP/BP/WG workload first). Sorted by the
/// metric, ties by lower MACs, then by step order.
std::vector<RankedCandidate> stage2_rerank(const TensorGraph& g,
                                           const std::vector<Candidate>& cands,
                                           const hw::HardwareConfig& hw,
                                           EvalMode mode,
                                           const std::string& metric);

/// End-to-end search with default options.
RankedCandidate search_best(const TensorGraph& g, const hw::HardwareConfig& hw,
                            EvalMode mode, const std::string& metric,
                            const SearchOptions& opt = {});

/// Deterministic baseline sequences.
ContractionSequence fixed_sequence(const TensorGraph& g, FixedKind kind);

}  // namespace tencon::search
