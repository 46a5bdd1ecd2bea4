#pragma once

#include <map>
#include <string>
#include <vector>

#include "tencon/tensor_graph.hpp"

namespace tencon {

enum class Phase { FP, BP, WG };

/// One tensor of a training workload. External tensors are the graph's
/// original nodes plus the output-gradient seeds; the rest are produced by
/// ops of the workload.
struct WTensor {
  int id = -1;
  std::vector<DimId> dims;
  std::string name;
  bool external = false;       // graph input / weight core / dY seed
  bool grad_seed = false;      // dY injected by the downstream layer
  NodeId origin_node = -1;     // original graph node, when applicable
  int block = 0;
};

struct ContractionOp {
  int id = -1;
  int operand_a = -1;
  int operand_b = -1;
  int result = -1;
  Phase phase = Phase::FP;
  std::vector<DimId> contracted_dims;
};

struct TrainingWorkload {
  std::vector<WTensor> tensors;          // indexed by tensor id
  std::vector<ContractionOp> ops;        // topological order
  std::vector<int> stored;               // FP tensors retained for BP/WG
  std::map<DimId, Dim> dim_table;
  FormatSpec layer_meta;

  std::vector<int> grad_seeds;           // dY tensor ids (one per block)
  std::vector<int> input_grads;          // dX tensor ids (one per block)
  std::map<NodeId, int> core_grads;      // weight core node -> dG tensor id
  std::map<NodeId, int> node_tensor;     // graph node -> tensor id

  std::int64_t tensor_elems(int id) const;
};

struct MultipleInputs : GraphError { using GraphError::GraphError; };
struct NoOutput : GraphError { using GraphError::GraphError; };

/// Replay `fwd` as the FP phase and append reverse-mode adjoint ops:
/// for every FP op C = contract(A, B), dA = contract(dC, B) and
/// dB = contract(dC, A). Adjoints producing weight-core gradients are tagged
/// WG, everything else BP. Block-term graphs expand per block; the logical
/// input gradient is the element-wise sum of the per-block dX tensors.
TrainingWorkload expand_training(const TensorGraph& g,
                                 const ContractionSequence& fwd);

std::int64_t stored_footprint(const TrainingWorkload& w);

/// Inference-mode workload: the FP ops only, no gradient seeds or adjoints.
TrainingWorkload forward_workload(const TensorGraph& g,
                                  const ContractionSequence& fwd);

/// Numeric execution of a workload. `values` supplies every external,
/// non-seed tensor (keyed by origin node id); seeds are filled with ones
/// (loss = unweighted sum of outputs). Returns values for every tensor.
std::map<int, NdArray> run_workload(const TrainingWorkload& w,
                                    const std::map<NodeId, NdArray>& values);

/// Compare every analytic weight/input gradient against central finite
/// differences of the scalar loss; returns the maximum relative error.
double gradient_check(const TensorGraph& g, const TrainingWorkload& w,
                      const std::map<NodeId, NdArray>& values,
                      double fd_step = 1e-5);

/// Convenience: random values at the graph's shapes.
std::map<NodeId, NdArray> random_values(const TensorGraph& g,
                                        std::uint64_t seed,
                                        bool integer = false);

}  // namespace tencon
