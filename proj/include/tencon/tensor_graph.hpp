#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tencon {

using DimId = int;
using NodeId = int;

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RankMismatch : GraphError { using GraphError::GraphError; };
struct HyperEdge : GraphError { using GraphError::GraphError; };
struct EmptySpec : GraphError { using GraphError::GraphError; };
struct DeadNode : GraphError { using GraphError::GraphError; };
struct InvalidSequence : GraphError { using GraphError::GraphError; };
struct ShapeMismatch : GraphError { using GraphError::GraphError; };

/// One named dimension. Dims shared by two nodes are contraction edges;
/// dims owned by a single node are dangling (output) edges.
struct Dim {
  DimId id = -1;
  std::int64_t size = 1;
  std::string label;
};

enum class NodeKind { Input, WeightCore, TransferCore, Intermediate, Output };

struct TensorNode {
  NodeId id = -1;
  std::vector<DimId> dims;  // ordered, no repeats
  NodeKind kind = NodeKind::Intermediate;
  // Position of this node within its format (1-based core index for weight
  // and transfer cores, -1 for inputs/intermediates). Fixed-sequence
  // baselines key off this.
  int core_index = -1;
  // Block-term graphs: which block the node belongs to (0 for everything else).
  int block = 0;
};

enum class Format { Dense, TT, TTM, TR, HT, BT };

/// Shape recipe for one tensorized layer.
struct FormatSpec {
  Format format = Format::Dense;
  std::int64_t batch = 1;
  std::vector<std::int64_t> m_dims;  // output-side factors M_i
  std::vector<std::int64_t> n_dims;  // input-side factors N_i
  std::vector<std::int64_t> ranks;   // meaning depends on the format
  int bt_blocks = 1;                 // BT only: number of block terms
};

struct ContractionStep {
  NodeId left = -1;
  NodeId right = -1;
  NodeId result = -1;
};

struct ContractionSequence {
  std::vector<ContractionStep> steps;
};

struct StepCost {
  std::int64_t macs = 0;
  std::int64_t left_elems = 0;
  std::int64_t right_elems = 0;
  std::int64_t result_elems = 0;
};

struct SequenceCost {
  std::int64_t total_macs = 0;
  std::int64_t total_access_elems = 0;
  double arithmetic_intensity = 0.0;
  std::int64_t peak_live_elems = 0;
  // Block-term graphs: element-wise additions of the per-block results,
  // accounted separately from macs.
  std::int64_t block_sum_adds = 0;
};

struct TensorGraph {
  std::map<NodeId, TensorNode> nodes;
  std::map<DimId, Dim> dim_table;
  NodeId next_node_id = 0;
  DimId next_dim_id = 0;

  // Set by build_format: preferred dim order of the fully contracted result
  // (per block for BT). evaluate_numeric normalizes to this order.
  std::vector<std::vector<DimId>> block_output_dims;
  // Node ids per block. Single-block graphs keep everything in block 0.
  std::vector<std::vector<NodeId>> blocks;
  std::optional<FormatSpec> origin;

  DimId add_dim(std::int64_t size, const std::string& label);
  NodeId add_node(const std::vector<DimId>& dims, NodeKind kind,
                  int core_index = -1, int block = 0);

  std::int64_t dim_size(DimId d) const { return dim_table.at(d).size; }
  std::int64_t node_elems(NodeId n) const;
  bool is_live(NodeId n) const { return nodes.count(n) != 0; }
  std::size_t block_count() const { return blocks.empty() ? 1 : blocks.size(); }
  /// Number of live nodes a complete sequence must reduce the graph to.
  std::size_t terminal_node_count() const { return block_count(); }

  /// Rejects hyper-edges: a dim referenced by more than two nodes.
  void check_edges() const;
};

TensorGraph build_format(const FormatSpec& spec);

/// Merge nodes i and j into a fresh Intermediate carrying the symmetric
/// difference of their dims (left dangling dims first, then right).
/// Outer products (empty shared set) are permitted.
std::pair<TensorGraph, StepCost> contract_pair(const TensorGraph& g, NodeId i,
                                               NodeId j);

/// In-place variant used by replay loops; returns the fresh node id.
NodeId contract_pair_inplace(TensorGraph& g, NodeId i, NodeId j,
                             StepCost* cost = nullptr);

SequenceCost sequence_totals(const TensorGraph& g,
                             const ContractionSequence& seq);

bool sequence_is_valid(const TensorGraph& g, const ContractionSequence& seq);

// ---------------------------------------------------------------------------
// Dense reference arrays (the numeric oracle).

struct NdArray {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  NdArray() = default;
  explicit NdArray(std::vector<std::int64_t> s);
  std::int64_t elems() const;
  static NdArray ones(std::vector<std::int64_t> s);
  static NdArray random(std::vector<std::int64_t> s, std::uint64_t seed,
                        bool integer = false);
};

/// Exact index-sum contraction of two arrays labelled by dim ids.
NdArray contract_arrays(const NdArray& a, const std::vector<DimId>& a_dims,
                        const NdArray& b, const std::vector<DimId>& b_dims,
                        const std::map<DimId, Dim>& dim_table,
                        std::vector<DimId>* out_dims);

/// Reorder an array's axes from `from` order to `to` order (same dim set).
NdArray transpose_to(const NdArray& a, const std::vector<DimId>& from,
                     const std::vector<DimId>& to);

/// Execute the sequence with exact index-sum semantics. The result is placed
/// in the graph's canonical output dim order; block-term graphs sum their
/// per-block results element-wise. The value is independent of the sequence.
NdArray evaluate_numeric(const TensorGraph& g, const ContractionSequence& seq,
                         const std::map<NodeId, NdArray>& values);

/// Drop size-1 axes (boundary ranks of TT/TTM show up as unit dims).
NdArray squeeze(const NdArray& a);

}  // namespace tencon
