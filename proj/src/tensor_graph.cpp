#include "tencon/tensor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

namespace tencon {

DimId TensorGraph::add_dim(std::int64_t size, const std::string& label) {
  if (size < 1) throw GraphError("dim size must be >= 1: " + label);
  DimId id = next_dim_id++;
  dim_table[id] = Dim{id, size, label};
  return id;
}

NodeId TensorGraph::add_node(const std::vector<DimId>& dims, NodeKind kind,
                             int core_index, int block) {
  if (dims.empty()) throw GraphError("node must have order >= 1");
  std::set<DimId> seen;
  for (DimId d : dims) {
    if (!dim_table.count(d)) throw GraphError("unknown dim id");
    if (!seen.insert(d).second) throw GraphError("repeated dim in node");
  }
  NodeId id = next_node_id++;
  nodes[id] = TensorNode{id, dims, kind, core_index, block};
  return id;
}

std::int64_t TensorGraph::node_elems(NodeId n) const {
  std::int64_t e = 1;
  for (DimId d : nodes.at(n).dims) e *= dim_size(d);
  return e;
}

void TensorGraph::check_edges() const {
  std::map<DimId, int> uses;
  for (const auto& [id, node] : nodes)
    for (DimId d : node.dims) uses[d]++;
  for (const auto& [d, n] : uses)
    if (n > 2)
      throw HyperEdge("dim " + dim_table.at(d).label + " shared by " +
                      std::to_string(n) + " nodes");
}

namespace {

std::string idx_label(const std::string& base, std::size_t i, int block,
                      int nblocks) {
  std::string s = base + std::to_string(i);
  if (nblocks > 1) s += "#" + std::to_string(block);
  return s;
}

void validate_spec(const FormatSpec& spec) {
  if (spec.batch < 1) throw EmptySpec("batch must be >= 1");
  if (spec.m_dims.empty() || spec.n_dims.empty())
    throw EmptySpec("m_dims / n_dims must be nonempty");
  auto positive = [](const std::vector<std::int64_t>& v) {
    return std::all_of(v.begin(), v.end(), [](std::int64_t x) { return x >= 1; });
  };
  if (!positive(spec.m_dims) || !positive(spec.n_dims) || !positive(spec.ranks))
    throw EmptySpec("dimension sizes must be >= 1");

  std::size_t s = spec.m_dims.size(), t = spec.n_dims.size();
  switch (spec.format) {
    case Format::Dense:
      break;
    case Format::TT:
      if (spec.ranks.size() != s + t + 1)
        throw RankMismatch("TT needs s+t+1 ranks");
      if (spec.ranks.front() != 1 || spec.ranks.back() != 1)
        throw RankMismatch("TT boundary ranks must be 1");
      break;
    case Format::TTM:
      if (s != t) throw RankMismatch("TTM needs len(m_dims) == len(n_dims)");
      if (spec.ranks.size() != s + 1)
        throw RankMismatch("TTM needs d+1 ranks");
      if (spec.ranks.front() != 1 || spec.ranks.back() != 1)
        throw RankMismatch("TTM boundary ranks must be 1");
      break;
    case Format::TR:
      if (spec.ranks.size() != s + t + 1)
        throw RankMismatch("TR needs s+t+1 ranks");
      if (spec.ranks.front() != spec.ranks.back())
        throw RankMismatch("TR needs ranks[0] == ranks[d]");
      break;
    case Format::HT:
      // Fixed 4-leaf binary tree: leaf ranks R1..R4 plus internal R12, R34.
      if (s != 4 || t != 4) throw RankMismatch("HT build is fixed to 4 leaves");
      if (spec.ranks.size() != 6)
        throw RankMismatch("HT needs 6 ranks (R1..R4, R12, R34)");
      break;
    case Format::BT:
      if (s != t) throw RankMismatch("BT needs len(m_dims) == len(n_dims)");
      if (spec.ranks.size() != s)
        throw RankMismatch("BT needs d core ranks");
      if (spec.bt_blocks < 1) throw EmptySpec("bt_blocks must be >= 1");
      break;
  }
}

}  // namespace

TensorGraph build_format(const FormatSpec& spec) {
  validate_spec(spec);
  TensorGraph g;
  g.origin = spec;
  std::size_t s = spec.m_dims.size(), t = spec.n_dims.size();
  int nblocks = spec.format == Format::BT ? spec.bt_blocks : 1;

  for (int blk = 0; blk < nblocks; ++blk) {
    DimId b = g.add_dim(spec.batch, idx_label("B", 0, blk, nblocks));
    std::vector<DimId> m(s), n(t);
    for (std::size_t i = 0; i < s; ++i)
      m[i] = g.add_dim(spec.m_dims[i], idx_label("M", i + 1, blk, nblocks));
    for (std::size_t i = 0; i < t; ++i)
      n[i] = g.add_dim(spec.n_dims[i], idx_label("N", i + 1, blk, nblocks));

    std::vector<DimId> x_dims = {b};
    x_dims.insert(x_dims.end(), n.begin(), n.end());
    std::vector<NodeId> block_nodes;
    block_nodes.push_back(g.add_node(x_dims, NodeKind::Input, -1, blk));

    std::vector<DimId> out = {b};
    out.insert(out.end(), m.begin(), m.end());

    switch (spec.format) {
      case Format::Dense: {
        // Collapsed W node of shape (M..., N...): Y[b,m] = sum_n X[b,n] W[m,n].
        std::vector<DimId> w = m;
        w.insert(w.end(), n.begin(), n.end());
        block_nodes.push_back(g.add_node(w, NodeKind::WeightCore, 1, blk));
        break;
      }
      case Format::TT:
      case Format::TR: {
        std::size_t d = s + t;
        std::vector<DimId> r(d + 1);
        for (std::size_t i = 1; i < d; ++i)
          r[i] = g.add_dim(spec.ranks[i], idx_label("R", i, blk, nblocks));
        if (spec.format == Format::TR) {
          // Ring closure: R_0 and R_d are the same edge.
          r[0] = r[d] = g.add_dim(spec.ranks[0], idx_label("R", 0, blk, nblocks));
        } else {
          r[0] = g.add_dim(1, idx_label("R", 0, blk, nblocks));
          r[d] = g.add_dim(1, idx_label("R", d, blk, nblocks));
          out.insert(out.begin() + 1, r[0]);  // dangling unit boundary ranks
          out.push_back(r[d]);
        }
        // Chain order starts at the input side (N dims), so index-ascending
        // folds stay connected to X.
        for (std::size_t i = 1; i <= d; ++i) {
          DimId mid = i <= t ? n[i - 1] : m[i - 1 - t];
          block_nodes.push_back(g.add_node({r[i - 1], mid, r[i]},
                                           NodeKind::WeightCore,
                                           static_cast<int>(i), blk));
        }
        break;
      }
      case Format::TTM: {
        std::size_t d = s;
        std::vector<DimId> r(d + 1);
        for (std::size_t i = 0; i <= d; ++i)
          r[i] = g.add_dim(spec.ranks[i], idx_label("R", i, blk, nblocks));
        out.insert(out.begin() + 1, r[0]);
        out.push_back(r[d]);
        for (std::size_t i = 1; i <= d; ++i)
          block_nodes.push_back(g.add_node({r[i - 1], m[i - 1], n[i - 1], r[i]},
                                           NodeKind::WeightCore,
                                           static_cast<int>(i), blk));
        break;
      }
      case Format::HT: {
        // Fig. 3(e) shape: 4 leaves (M_i, N_i, R_i), U12 (R1,R2,R12),
        // U34 (R3,R4,R34), root (R12,R34).
        std::vector<DimId> r(4);
        for (int i = 0; i < 4; ++i)
          r[i] = g.add_dim(spec.ranks[i], idx_label("R", i + 1, blk, nblocks));
        DimId r12 = g.add_dim(spec.ranks[4], idx_label("R", 12, blk, nblocks));
        DimId r34 = g.add_dim(spec.ranks[5], idx_label("R", 34, blk, nblocks));
        for (int i = 0; i < 4; ++i)
          block_nodes.push_back(g.add_node({m[i], n[i], r[i]},
                                           NodeKind::WeightCore, i + 1, blk));
        block_nodes.push_back(
            g.add_node({r[0], r[1], r12}, NodeKind::TransferCore, 5, blk));
        block_nodes.push_back(
            g.add_node({r[2], r[3], r34}, NodeKind::TransferCore, 6, blk));
        block_nodes.push_back(
            g.add_node({r12, r34}, NodeKind::TransferCore, 7, blk));
        break;
      }
      case Format::BT: {
        // One block term: d-th-order transfer node joined to d cores.
        std::size_t d = s;
        std::vector<DimId> r(d);
        for (std::size_t i = 0; i < d; ++i)
          r[i] = g.add_dim(spec.ranks[i], idx_label("R", i + 1, blk, nblocks));
        for (std::size_t i = 0; i < d; ++i)
          block_nodes.push_back(g.add_node({m[i], n[i], r[i]},
                                           NodeKind::WeightCore,
                                           static_cast<int>(i) + 1, blk));
        block_nodes.push_back(g.add_node(r, NodeKind::TransferCore,
                                         static_cast<int>(d) + 1, blk));
        break;
      }
    }
    g.blocks.push_back(block_nodes);
    g.block_output_dims.push_back(out);
  }
  g.check_edges();
  return g;
}

// ---------------------------------------------------------------------------

NodeId contract_pair_inplace(TensorGraph& g, NodeId i, NodeId j,
                             StepCost* cost) {
  if (i == j) throw GraphError("contract_pair needs distinct nodes");
  if (!g.is_live(i)) throw DeadNode("node " + std::to_string(i) + " is dead");
  if (!g.is_live(j)) throw DeadNode("node " + std::to_string(j) + " is dead");

  const TensorNode& a = g.nodes.at(i);
  const TensorNode& b = g.nodes.at(j);
  std::set<DimId> a_set(a.dims.begin(), a.dims.end());
  std::set<DimId> b_set(b.dims.begin(), b.dims.end());

  std::vector<DimId> result_dims;
  for (DimId d : a.dims)
    if (!b_set.count(d)) result_dims.push_back(d);
  for (DimId d : b.dims)
    if (!a_set.count(d)) result_dims.push_back(d);

  StepCost c;
  c.macs = 1;
  for (DimId d : a.dims) c.macs *= g.dim_size(d);
  for (DimId d : b.dims)
    if (!a_set.count(d)) c.macs *= g.dim_size(d);
  c.left_elems = g.node_elems(i);
  c.right_elems = g.node_elems(j);
  c.result_elems = 1;
  for (DimId d : result_dims) c.result_elems *= g.dim_size(d);
  if (cost) *cost = c;

  int block = a.block;
  g.nodes.erase(i);
  g.nodes.erase(j);
  NodeId id = g.next_node_id++;
  if (result_dims.empty()) {
    // Full contraction to a scalar: keep a unit dim so order >= 1 holds.
    // Only reachable on degenerate graphs; formats always have dangling dims.
    result_dims.push_back(g.add_dim(1, "scalar"));
  }
  g.nodes[id] = TensorNode{id, result_dims, NodeKind::Intermediate, -1, block};
  return id;
}

std::pair<TensorGraph, StepCost> contract_pair(const TensorGraph& g, NodeId i,
                                               NodeId j) {
  TensorGraph out = g;
  StepCost c;
  contract_pair_inplace(out, i, j, &c);
  return {std::move(out), c};
}

bool sequence_is_valid(const TensorGraph& g, const ContractionSequence& seq) {
  TensorGraph work = g;
  for (const auto& step : seq.steps) {
    if (!work.is_live(step.left) || !work.is_live(step.right) ||
        step.left == step.right)
      return false;
    if (work.nodes.at(step.left).block != work.nodes.at(step.right).block)
      return false;
    NodeId r = contract_pair_inplace(work, step.left, step.right);
    if (step.result >= 0 && step.result != r) return false;
  }
  return work.nodes.size() == g.terminal_node_count();
}

SequenceCost sequence_totals(const TensorGraph& g,
                             const ContractionSequence& seq) {
  TensorGraph work = g;
  SequenceCost total;
  std::int64_t live = 0;
  for (const auto& [id, node] : work.nodes) live += work.node_elems(id);
  total.peak_live_elems = live;

  for (const auto& step : seq.steps) {
    if (!work.is_live(step.left) || !work.is_live(step.right))
      throw InvalidSequence("sequence reuses a consumed node");
    StepCost c;
    contract_pair_inplace(work, step.left, step.right, &c);
    total.total_macs += c.macs;
    total.total_access_elems += c.left_elems + c.right_elems + c.result_elems;
    // Result becomes live while both operands are still resident.
    total.peak_live_elems = std::max(total.peak_live_elems,
                                     live + c.result_elems);
    live += c.result_elems - c.left_elems - c.right_elems;
  }
  if (work.nodes.size() != g.terminal_node_count())
    throw InvalidSequence("sequence does not reduce the graph");
  if (g.block_count() > 1) {
    std::int64_t out_elems = 1;
    for (DimId d : g.block_output_dims.front()) out_elems *= g.dim_size(d);
    total.block_sum_adds =
        out_elems * static_cast<std::int64_t>(g.block_count() - 1);
  }
  if (total.total_access_elems > 0)
    total.arithmetic_intensity =
        static_cast<double>(total.total_macs) /
        static_cast<double>(total.total_access_elems);
  return total;
}

// ---------------------------------------------------------------------------
// NdArray

NdArray::NdArray(std::vector<std::int64_t> s) : shape(std::move(s)) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  data.assign(static_cast<std::size_t>(n), 0.0);
}

std::int64_t NdArray::elems() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

NdArray NdArray::ones(std::vector<std::int64_t> s) {
  NdArray a(std::move(s));
  std::fill(a.data.begin(), a.data.end(), 1.0);
  return a;
}

NdArray NdArray::random(std::vector<std::int64_t> s, std::uint64_t seed,
                        bool integer) {
  NdArray a(std::move(s));
  std::mt19937_64 rng(seed);
  if (integer) {
    std::uniform_int_distribution<int> dist(-4, 4);
    for (auto& v : a.data) v = static_cast<double>(dist(rng));
  } else {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : a.data) v = dist(rng);
  }
  return a;
}

NdArray contract_arrays(const NdArray& a, const std::vector<DimId>& a_dims,
                        const NdArray& b, const std::vector<DimId>& b_dims,
                        const std::map<DimId, Dim>& dim_table,
                        std::vector<DimId>* out_dims) {
  if (a.shape.size() != a_dims.size() || b.shape.size() != b_dims.size())
    throw ShapeMismatch("operand rank does not match dim list");
  for (std::size_t i = 0; i < a_dims.size(); ++i)
    if (a.shape[i] != dim_table.at(a_dims[i]).size)
      throw ShapeMismatch("left operand shape mismatch");
  for (std::size_t i = 0; i < b_dims.size(); ++i)
    if (b.shape[i] != dim_table.at(b_dims[i]).size)
      throw ShapeMismatch("right operand shape mismatch");

  std::set<DimId> a_set(a_dims.begin(), a_dims.end());
  std::set<DimId> b_set(b_dims.begin(), b_dims.end());
  std::vector<DimId> dangling, shared;
  for (DimId d : a_dims)
    (b_set.count(d) ? shared : dangling).push_back(d);
  for (DimId d : b_dims)
    if (!a_set.count(d)) dangling.push_back(d);

  std::vector<std::int64_t> out_shape;
  for (DimId d : dangling) out_shape.push_back(dim_table.at(d).size);
  NdArray out(out_shape.empty() ? std::vector<std::int64_t>{1} : out_shape);
  bool scalar = out_shape.empty();

  // Strides of each operand keyed by dim id.
  auto strides_of = [](const NdArray& x) {
    std::vector<std::int64_t> st(x.shape.size(), 1);
    for (int i = static_cast<int>(x.shape.size()) - 2; i >= 0; --i)
      st[i] = st[i + 1] * x.shape[i + 1];
    return st;
  };
  std::unordered_map<DimId, std::int64_t> a_stride, b_stride;
  auto ast = strides_of(a);
  auto bst = strides_of(b);
  for (std::size_t i = 0; i < a_dims.size(); ++i) a_stride[a_dims[i]] = ast[i];
  for (std::size_t i = 0; i < b_dims.size(); ++i) b_stride[b_dims[i]] = bst[i];

  std::vector<std::int64_t> out_idx(dangling.size(), 0);
  std::vector<std::int64_t> sh_idx(shared.size(), 0);
  std::size_t out_pos = 0;
  do {
    std::int64_t base_a = 0, base_b = 0;
    for (std::size_t i = 0; i < dangling.size(); ++i) {
      DimId d = dangling[i];
      if (a_stride.count(d)) base_a += out_idx[i] * a_stride[d];
      if (b_stride.count(d)) base_b += out_idx[i] * b_stride[d];
    }
    double acc = 0.0;
    std::fill(sh_idx.begin(), sh_idx.end(), 0);
    do {
      std::int64_t oa = base_a, ob = base_b;
      for (std::size_t i = 0; i < shared.size(); ++i) {
        oa += sh_idx[i] * a_stride[shared[i]];
        ob += sh_idx[i] * b_stride[shared[i]];
      }
      acc += a.data[static_cast<std::size_t>(oa)] *
             b.data[static_cast<std::size_t>(ob)];
      // advance shared index
      std::size_t k = shared.size();
      while (k > 0) {
        --k;
        if (++sh_idx[k] < dim_table.at(shared[k]).size) break;
        sh_idx[k] = 0;
        if (k == 0) { k = shared.size() + 1; break; }
      }
      if (shared.empty() || k > shared.size()) break;
    } while (true);
    out.data[out_pos++] = acc;
    // advance output index
    std::size_t k = dangling.size();
    while (k > 0) {
      --k;
      if (++out_idx[k] < dim_table.at(dangling[k]).size) break;
      out_idx[k] = 0;
      if (k == 0) { k = dangling.size() + 1; break; }
    }
    if (dangling.empty() || k > dangling.size()) break;
  } while (true);

  if (out_dims) *out_dims = scalar ? std::vector<DimId>{} : dangling;
  return out;
}

NdArray transpose_to(const NdArray& a, const std::vector<DimId>& from,
                     const std::vector<DimId>& to) {
  if (from == to) return a;
  if (from.size() != to.size() || a.shape.size() != from.size())
    throw ShapeMismatch("transpose_to dim lists must match");
  std::vector<std::size_t> perm(to.size());
  for (std::size_t i = 0; i < to.size(); ++i) {
    auto it = std::find(from.begin(), from.end(), to[i]);
    if (it == from.end()) throw ShapeMismatch("transpose_to dim sets differ");
    perm[i] = static_cast<std::size_t>(it - from.begin());
  }
  std::vector<std::int64_t> out_shape(to.size());
  for (std::size_t i = 0; i < to.size(); ++i) out_shape[i] = a.shape[perm[i]];
  NdArray out(out_shape);

  std::vector<std::int64_t> in_strides(a.shape.size(), 1);
  for (int i = static_cast<int>(a.shape.size()) - 2; i >= 0; --i)
    in_strides[i] = in_strides[i + 1] * a.shape[i + 1];

  std::vector<std::int64_t> idx(out_shape.size(), 0);
  for (std::size_t pos = 0; pos < out.data.size(); ++pos) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
      off += idx[i] * in_strides[perm[i]];
    out.data[pos] = a.data[static_cast<std::size_t>(off)];
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (++idx[k] < out_shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

NdArray squeeze(const NdArray& a) {
  NdArray out = a;
  out.shape.clear();
  for (auto d : a.shape)
    if (d != 1) out.shape.push_back(d);
  if (out.shape.empty()) out.shape.push_back(1);
  return out;
}

NdArray evaluate_numeric(const TensorGraph& g, const ContractionSequence& seq,
                         const std::map<NodeId, NdArray>& values) {
  TensorGraph work = g;
  std::map<NodeId, NdArray> vals;
  for (const auto& [id, node] : g.nodes) {
    auto it = values.find(id);
    if (it == values.end())
      throw ShapeMismatch("missing value for node " + std::to_string(id));
    if (it->second.shape.size() != node.dims.size())
      throw ShapeMismatch("value rank mismatch for node " + std::to_string(id));
    vals[id] = it->second;
  }

  for (const auto& step : seq.steps) {
    if (!work.is_live(step.left) || !work.is_live(step.right))
      throw InvalidSequence("sequence reuses a consumed node");
    std::vector<DimId> a_dims = work.nodes.at(step.left).dims;
    std::vector<DimId> b_dims = work.nodes.at(step.right).dims;
    std::vector<DimId> out_dims;
    NdArray r = contract_arrays(vals.at(step.left), a_dims,
                                vals.at(step.right), b_dims, work.dim_table,
                                &out_dims);
    NodeId id = contract_pair_inplace(work, step.left, step.right);
    // A scalar result gets the synthetic unit dim added by contract_pair.
    if (out_dims.empty()) {
      out_dims = work.nodes.at(id).dims;
      r.shape = {1};
    }
    vals.erase(step.left);
    vals.erase(step.right);
    vals[id] = std::move(r);
  }
  if (work.nodes.size() != g.terminal_node_count())
    throw InvalidSequence("sequence does not reduce the graph");

  // Normalize each surviving node to its block's canonical output order and
  // sum across blocks (identity for single-block graphs).
  std::vector<NodeId> survivors;
  for (const auto& [id, node] : work.nodes) survivors.push_back(id);

  auto canonical_for = [&](NodeId id) -> std::vector<DimId> {
    int blk = work.nodes.at(id).block;
    if (static_cast<std::size_t>(blk) < g.block_output_dims.size())
      return g.block_output_dims[static_cast<std::size_t>(blk)];
    auto dims = work.nodes.at(id).dims;
    std::sort(dims.begin(), dims.end());
    return dims;
  };

  NdArray acc;
  bool first = true;
  for (NodeId id : survivors) {
    NdArray v = transpose_to(vals.at(id), work.nodes.at(id).dims,
                             canonical_for(id));
    if (first) {
      acc = std::move(v);
      first = false;
    } else {
      if (v.data.size() != acc.data.size())
        throw ShapeMismatch("block results disagree in size");
      for (std::size_t i = 0; i < acc.data.size(); ++i)
        acc.data[i] += v.data[i];
    }
  }
  return acc;
}

}  // namespace tencon
