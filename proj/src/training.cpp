#include "tencon/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tencon {

std::int64_t TrainingWorkload::tensor_elems(int id) const {
  std::int64_t e = 1;
  for (DimId d : tensors.at(static_cast<std::size_t>(id)).dims)
    e *= dim_table.at(d).size;
  return e;
}

namespace {

std::vector<DimId> shared_dims(const std::vector<DimId>& a,
                               const std::vector<DimId>& b) {
  std::set<DimId> bs(b.begin(), b.end());
  std::vector<DimId> out;
  for (DimId d : a)
    if (bs.count(d)) out.push_back(d);
  return out;
}

std::vector<DimId> contract_result_dims(const std::vector<DimId>& a,
                                        const std::vector<DimId>& b) {
  std::set<DimId> as(a.begin(), a.end()), bs(b.begin(), b.end());
  std::vector<DimId> out;
  for (DimId d : a)
    if (!bs.count(d)) out.push_back(d);
  for (DimId d : b)
    if (!as.count(d)) out.push_back(d);
  return out;
}

}  // namespace

TrainingWorkload expand_training(const TensorGraph& g,
                                 const ContractionSequence& fwd) {
  // Each block needs exactly one Input node.
  std::map<int, int> inputs_per_block;
  for (const auto& [id, node] : g.nodes)
    if (node.kind == NodeKind::Input) inputs_per_block[node.block]++;
  for (std::size_t blk = 0; blk < g.block_count(); ++blk) {
    int n = inputs_per_block.count(static_cast<int>(blk))
                ? inputs_per_block[static_cast<int>(blk)]
                : 0;
    if (n > 1) throw MultipleInputs("block has more than one Input node");
    if (n == 0) throw MultipleInputs("block has no Input node");
  }
  if (!sequence_is_valid(g, fwd)) throw InvalidSequence("invalid fwd sequence");

  TrainingWorkload w;
  w.dim_table = g.dim_table;
  if (g.origin) w.layer_meta = *g.origin;

  auto add_tensor = [&](std::vector<DimId> dims, std::string name,
                        bool external, bool seed, NodeId origin, int block) {
    WTensor t;
    t.id = static_cast<int>(w.tensors.size());
    t.dims = std::move(dims);
    t.name = std::move(name);
    t.external = external;
    t.grad_seed = seed;
    t.origin_node = origin;
    t.block = block;
    w.tensors.push_back(t);
    return t.id;
  };

  TensorGraph work = g;
  std::map<NodeId, int> tensor_of;  // live node -> tensor id
  for (const auto& [id, node] : g.nodes) {
    std::string name;
    switch (node.kind) {
      case NodeKind::Input: name = "X"; break;
      case NodeKind::WeightCore: name = "G" + std::to_string(node.core_index); break;
      case NodeKind::TransferCore: name = "U" + std::to_string(node.core_index); break;
      default: name = "T" + std::to_string(id); break;
    }
    if (g.block_count() > 1) name += "#" + std::to_string(node.block);
    tensor_of[id] = add_tensor(node.dims, name, true, false, id, node.block);
    w.node_tensor[id] = tensor_of[id];
  }

  struct FpStep {
    NodeId a_node, b_node, c_node;
    int a, b, c;  // tensor ids
  };
  std::vector<FpStep> fp_steps;
  int next_op = 0;
  int inter_count = 0;
  for (const auto& step : fwd.steps) {
    int ta = tensor_of.at(step.left), tb = tensor_of.at(step.right);
    StepCost sc;
    NodeId c_node = contract_pair_inplace(work, step.left, step.right, &sc);
    int block = work.nodes.at(c_node).block;
    int tc = add_tensor(work.nodes.at(c_node).dims,
                        "V" + std::to_string(++inter_count), false, false,
                        c_node, block);
    ContractionOp op;
    op.id = next_op++;
    op.operand_a = ta;
    op.operand_b = tb;
    op.result = tc;
    op.phase = Phase::FP;
    op.contracted_dims =
        shared_dims(w.tensors[static_cast<std::size_t>(ta)].dims,
                    w.tensors[static_cast<std::size_t>(tb)].dims);
    w.ops.push_back(op);
    fp_steps.push_back({step.left, step.right, c_node, ta, tb, tc});
    tensor_of.erase(step.left);
    tensor_of.erase(step.right);
    tensor_of[c_node] = tc;
  }

  // Seed one output gradient per surviving node (one per block).
  std::map<int, int> grad_of;  // tensor id -> gradient tensor id
  for (const auto& [node, t] : tensor_of) {
    int blk = work.nodes.at(node).block;
    int dy = add_tensor(w.tensors[static_cast<std::size_t>(t)].dims,
                        g.block_count() > 1 ? "dY#" + std::to_string(blk)
                                            : "dY",
                        true, true, -1, blk);
    w.grad_seeds.push_back(dy);
    grad_of[t] = dy;
  }
  if (tensor_of.empty()) throw NoOutput("graph has no output");

  auto kind_of = [&](NodeId n) -> NodeKind {
    auto it = g.nodes.find(n);
    return it == g.nodes.end() ? NodeKind::Intermediate : it->second.kind;
  };

  std::set<int> stored;
  for (auto it = fp_steps.rbegin(); it != fp_steps.rend(); ++it) {
    const FpStep& s = *it;
    int dc = grad_of.at(s.c);
    auto emit_adjoint = [&](int wrt, int other, NodeId wrt_node) {
      const auto& other_dims = w.tensors[static_cast<std::size_t>(other)].dims;
      const auto& dc_dims = w.tensors[static_cast<std::size_t>(dc)].dims;
      NodeKind k = kind_of(wrt_node);
      bool is_weight = k == NodeKind::WeightCore || k == NodeKind::TransferCore;
      int blk = w.tensors[static_cast<std::size_t>(wrt)].block;
      int dg = add_tensor(contract_result_dims(dc_dims, other_dims),
                          "d" + w.tensors[static_cast<std::size_t>(wrt)].name,
                          false, false, -1, blk);
      ContractionOp op;
      op.id = next_op++;
      op.operand_a = dc;
      op.operand_b = other;
      op.result = dg;
      op.phase = is_weight ? Phase::WG : Phase::BP;
      op.contracted_dims = shared_dims(dc_dims, other_dims);
      w.ops.push_back(op);
      grad_of[wrt] = dg;
      if (!w.tensors[static_cast<std::size_t>(other)].grad_seed) {
        const WTensor& ot = w.tensors[static_cast<std::size_t>(other)];
        bool other_is_weight = ot.external && ot.origin_node >= 0 &&
                               kind_of(ot.origin_node) != NodeKind::Input;
        // Weight cores are resident parameters; only activations produced or
        // consumed in FP must be retained.
        if (!other_is_weight) stored.insert(other);
      }
      if (k == NodeKind::Input) w.input_grads.push_back(dg);
      if (is_weight) w.core_grads[wrt_node] = dg;
    };
    emit_adjoint(s.a, s.b, s.a_node);
    emit_adjoint(s.b, s.a, s.b_node);
  }

  w.stored.assign(stored.begin(), stored.end());
  std::sort(w.stored.begin(), w.stored.end());
  return w;
}

TrainingWorkload forward_workload(const TensorGraph& g,
                                  const ContractionSequence& fwd) {
  TrainingWorkload full = expand_training(g, fwd);
  TrainingWorkload w;
  w.tensors = full.tensors;
  w.dim_table = full.dim_table;
  w.layer_meta = full.layer_meta;
  w.node_tensor = full.node_tensor;
  for (const auto& op : full.ops)
    if (op.phase == Phase::FP) w.ops.push_back(op);
  return w;
}

std::int64_t stored_footprint(const TrainingWorkload& w) {
  std::int64_t total = 0;
  for (int t : w.stored) total += w.tensor_elems(t);
  return total;
}

std::map<int, NdArray> run_workload(const TrainingWorkload& w,
                                    const std::map<NodeId, NdArray>& values) {
  std::map<int, NdArray> vals;
  for (const auto& t : w.tensors) {
    if (!t.external) continue;
    if (t.grad_seed) {
      std::vector<std::int64_t> shape;
      for (DimId d : t.dims) shape.push_back(w.dim_table.at(d).size);
      vals[t.id] = NdArray::ones(shape);
    } else {
      auto it = values.find(t.origin_node);
      if (it == values.end())
        throw ShapeMismatch("missing value for tensor " + t.name);
      vals[t.id] = it->second;
    }
  }
  for (const auto& op : w.ops) {
    const auto& a = w.tensors[static_cast<std::size_t>(op.operand_a)];
    const auto& b = w.tensors[static_cast<std::size_t>(op.operand_b)];
    std::vector<DimId> out_dims;
    NdArray r = contract_arrays(vals.at(op.operand_a), a.dims,
                                vals.at(op.operand_b), b.dims, w.dim_table,
                                &out_dims);
    const auto& res = w.tensors[static_cast<std::size_t>(op.result)];
    if (!out_dims.empty() && out_dims != res.dims)
      r = transpose_to(r, out_dims, res.dims);
    vals[op.result] = std::move(r);
  }
  return vals;
}

std::map<NodeId, NdArray> random_values(const TensorGraph& g,
                                        std::uint64_t seed, bool integer) {
  std::map<NodeId, NdArray> values;
  std::uint64_t s = seed;
  for (const auto& [id, node] : g.nodes) {
    std::vector<std::int64_t> shape;
    for (DimId d : node.dims) shape.push_back(g.dim_size(d));
    values[id] = NdArray::random(shape, s++, integer);
  }
  return values;
}

double gradient_check(const TensorGraph& g, const TrainingWorkload& w,
                      const std::map<NodeId, NdArray>& values,
                      double fd_step) {
  // Forward sequence for the loss: rebuild from the FP ops.
  ContractionSequence fwd;
  {
    std::map<int, NodeId> node_of;  // tensor id -> node id in replay graph
    TensorGraph work = g;
    for (const auto& [n, t] : w.node_tensor) node_of[t] = n;
    for (const auto& op : w.ops) {
      if (op.phase != Phase::FP) continue;
      NodeId a = node_of.at(op.operand_a), b = node_of.at(op.operand_b);
      NodeId c = contract_pair_inplace(work, a, b);
      node_of[op.result] = c;
      fwd.steps.push_back({a, b, c});
    }
  }

  auto loss = [&](const std::map<NodeId, NdArray>& v) {
    NdArray out = evaluate_numeric(g, fwd, v);
    double sum = 0.0;
    for (double x : out.data) sum += x;
    return sum;
  };

  auto vals = run_workload(w, values);
  double max_err = 0.0;
  auto compare = [&](const NdArray& analytic, NodeId node,
                     std::map<NodeId, NdArray>& mutable_values,
                     const std::vector<NodeId>& coupled) {
    NdArray base = mutable_values.at(node);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      for (NodeId n : coupled) mutable_values[n].data[i] = base.data[i] + fd_step;
      double up = loss(mutable_values);
      for (NodeId n : coupled) mutable_values[n].data[i] = base.data[i] - fd_step;
      double down = loss(mutable_values);
      for (NodeId n : coupled) mutable_values[n].data[i] = base.data[i];
      double fd = (up - down) / (2.0 * fd_step);
      double a = analytic.data[i];
      double denom = std::max({std::abs(fd), std::abs(a), 1e-3});
      max_err = std::max(max_err, std::abs(fd - a) / denom);
    }
  };

  std::map<NodeId, NdArray> v = values;

  // Weight / transfer core gradients.
  for (const auto& [node, dg] : w.core_grads) {
    const WTensor& gt = w.tensors[static_cast<std::size_t>(dg)];
    NdArray analytic = transpose_to(vals.at(dg), gt.dims, g.nodes.at(node).dims);
    compare(analytic, node, v, {node});
  }

  // Input gradient: block replicas share the logical input value, so their
  // gradients sum and all replicas are perturbed together.
  std::vector<NodeId> input_nodes;
  for (const auto& [id, node] : g.nodes)
    if (node.kind == NodeKind::Input) input_nodes.push_back(id);
  if (!w.input_grads.empty() && !input_nodes.empty()) {
    NodeId ref = input_nodes.front();
    NdArray total(values.at(ref).shape);
    for (int dx : w.input_grads) {
      const WTensor& t = w.tensors[static_cast<std::size_t>(dx)];
      // Map this replica's dims onto the reference input's axis order.
      NodeId blk_input = -1;
      for (NodeId n : input_nodes)
        if (g.nodes.at(n).block == t.block) blk_input = n;
      NdArray a = transpose_to(vals.at(dx), t.dims, g.nodes.at(blk_input).dims);
      for (std::size_t i = 0; i < total.data.size(); ++i)
        total.data[i] += a.data[i];
    }
    compare(total, ref, v, input_nodes);
  }
  return max_err;
}

}  // namespace tencon
