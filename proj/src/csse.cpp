#include "tencon/csse.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>

#include "tencon/training.hpp"

namespace tencon::search {

std::uint64_t count_sequences(int k) {
  std::uint64_t total = 1;
  for (int i = 2; i <= k; ++i)
    total *= static_cast<std::uint64_t>(i) * (i - 1) / 2;
  return total;
}

namespace {

// Bitmask view of the graph: each live tensor is the set of its dims, a
// merge keeps the symmetric difference, and the MAC count is the size
// product over the union. Limited to 64 distinct dims, plenty for every
// shipped format at useful orders.
struct MaskGraph {
  std::vector<std::int64_t> dim_size;  // by bit position
  std::vector<std::uint64_t> mask;     // live tensors
  std::vector<NodeId> id;              // graph node id per live tensor
  std::vector<int> block;
  std::vector<bool> has_input;         // subtree contains the block's input
  NodeId next_id = 0;

  std::int64_t merge_macs(int i, int j) const {
    std::uint64_t u = mask[i] | mask[j];
    std::int64_t p = 1;
    while (u) {
      int b = __builtin_ctzll(u);
      p *= dim_size[b];
      u &= u - 1;
    }
    return p;
  }
};

MaskGraph make_mask_graph(const TensorGraph& g) {
  if (g.dim_table.size() > 64)
    throw GraphError("search supports at most 64 distinct dims");
  MaskGraph mg;
  std::map<DimId, int> bit;
  for (const auto& [d, dim] : g.dim_table) {
    bit[d] = static_cast<int>(mg.dim_size.size());
    mg.dim_size.push_back(dim.size);
  }
  for (const auto& [nid, node] : g.nodes) {
    std::uint64_t m = 0;
    for (DimId d : node.dims) m |= 1ull << bit.at(d);
    mg.mask.push_back(m);
    mg.id.push_back(nid);
    mg.block.push_back(node.block);
    mg.has_input.push_back(node.kind == NodeKind::Input);
  }
  mg.next_id = g.next_node_id;
  return mg;
}

struct Keeper {
  std::vector<Candidate> list;  // sorted ascending by macs
  int capacity;

  std::int64_t worst() const {
    return static_cast<int>(list.size()) < capacity
               ? std::numeric_limits<std::int64_t>::max()
               : list.back().macs;
  }
  void offer(Candidate c) {
    auto it = std::upper_bound(
        list.begin(), list.end(), c,
        [](const Candidate& a, const Candidate& b) { return a.macs < b.macs; });
    list.insert(it, std::move(c));
    if (static_cast<int>(list.size()) > capacity) list.pop_back();
  }
};

}  // namespace

std::vector<Candidate> stage1_search(const TensorGraph& g,
                                     const SearchOptions& opt,
                                     SearchStats* stats) {
  MaskGraph mg = make_mask_graph(g);
  std::size_t terminal = g.terminal_node_count();
  Keeper keep{{}, opt.capacity};
  std::vector<ContractionStep> steps;
  SearchStats local;

  std::function<void(std::int64_t)> dfs = [&](std::int64_t acc) {
    ++local.states_expanded;
    if (mg.mask.size() <= terminal) {
      keep.offer(Candidate{ContractionSequence{steps}, acc});
      return;
    }
    std::size_t n = mg.mask.size();
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (mg.block[i] != mg.block[j]) continue;  // block terms stay apart
        if (opt.space == SearchSpace::XRooted) {
          // Grow a chain from the input: one operand must carry it, and the
          // other must share at least one dim with it.
          bool rooted = (mg.has_input[i] || mg.has_input[j]) &&
                        (mg.mask[i] & mg.mask[j]);
          if (!rooted) continue;
        }
        std::int64_t macs =
            acc + mg.merge_macs(static_cast<int>(i), static_cast<int>(j));
        if (opt.prune && macs >= keep.worst()) {
          ++local.branches_pruned;
          continue;
        }
        // Apply the merge: j is removed, i replaced, a fresh id appended
        // in replay order.
        std::uint64_t mi = mg.mask[i], mj = mg.mask[j];
        NodeId ni = mg.id[i], nj = mg.id[j];
        bool hi = mg.has_input[i], hj = mg.has_input[j];
        NodeId fresh = mg.next_id++;
        steps.push_back({ni, nj, fresh});
        mg.mask[i] = mi ^ mj;
        mg.id[i] = fresh;
        mg.has_input[i] = hi || hj;
        mg.mask.erase(mg.mask.begin() + static_cast<std::ptrdiff_t>(j));
        mg.id.erase(mg.id.begin() + static_cast<std::ptrdiff_t>(j));
        int bj = mg.block[j];
        mg.block.erase(mg.block.begin() + static_cast<std::ptrdiff_t>(j));
        mg.has_input.erase(mg.has_input.begin() +
                           static_cast<std::ptrdiff_t>(j));

        dfs(macs);

        mg.has_input.insert(mg.has_input.begin() +
                                static_cast<std::ptrdiff_t>(j),
                            hj);
        mg.block.insert(mg.block.begin() + static_cast<std::ptrdiff_t>(j), bj);
        mg.id.insert(mg.id.begin() + static_cast<std::ptrdiff_t>(j), nj);
        mg.mask.insert(mg.mask.begin() + static_cast<std::ptrdiff_t>(j), mj);
        mg.mask[i] = mi;
        mg.id[i] = ni;
        mg.has_input[i] = hi;
        mg.next_id = fresh;
        steps.pop_back();
      }
  };
  dfs(0);
  if (stats) *stats = local;
  return keep.list;
}

std::vector<RankedCandidate> stage2_rerank(const TensorGraph& g,
                                           const std::vector<Candidate>& cands,
                                           const hw::HardwareConfig& hw,
                                           EvalMode mode,
                                           const std::string& metric) {
  std::vector<RankedCandidate> ranked;
  for (const Candidate& c : cands) {
    TrainingWorkload w = mode == EvalMode::Training
                             ? expand_training(g, c.seq)
                             : forward_workload(g, c.seq);
    perf::WorkloadEval ev = perf::evaluate_workload(w, hw);
    RankedCandidate rc;
    rc.seq = c.seq;
    rc.macs = c.macs;
    rc.report = ev.total;
    rc.metric = perf::metric_value(ev.total, hw, metric);
    ranked.push_back(std::move(rc));
  }
  auto step_key = [](const ContractionSequence& s) {
    std::vector<int> k;
    for (const auto& st : s.steps) {
      k.push_back(st.left);
      k.push_back(st.right);
    }
    return k;
  };
  // "flops" counts work, so less is better there too; every metric minimizes.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.metric != b.metric) return a.metric < b.metric;
                     if (a.macs != b.macs) return a.macs < b.macs;
                     return step_key(a.seq) < step_key(b.seq);
                   });
  return ranked;
}

RankedCandidate search_best(const TensorGraph& g, const hw::HardwareConfig& hw,
                            EvalMode mode, const std::string& metric,
                            const SearchOptions& opt) {
  auto cands = stage1_search(g, opt);
  if (cands.empty()) throw GraphError("search produced no sequence");
  auto ranked = stage2_rerank(g, cands, hw, mode, metric);
  return ranked.front();
}

ContractionSequence fixed_sequence(const TensorGraph& g, FixedKind kind) {
  ContractionSequence seq;
  TensorGraph work = g;
  std::size_t nblocks = g.block_count();
  for (std::size_t b = 0; b < nblocks; ++b) {
    NodeId input = -1;
    std::vector<std::pair<int, NodeId>> cores;  // (core index, node)
    for (const auto& [nid, node] : g.nodes) {
      if (static_cast<std::size_t>(node.block) != b) continue;
      if (node.kind == NodeKind::Input)
        input = nid;
      else
        cores.push_back({node.core_index, nid});
    }
    if (input < 0 || cores.empty())
      throw InvalidSequence("fixed sequence needs an input and cores");
    std::sort(cores.begin(), cores.end());
    auto merge = [&](NodeId x, NodeId y) {
      NodeId r = contract_pair_inplace(work, x, y);
      seq.steps.push_back({x, y, r});
      return r;
    };
    if (kind == FixedKind::AscendingIndex) {
      NodeId acc = input;
      for (auto& [ci, nid] : cores) acc = merge(acc, nid);
    } else {
      NodeId wacc = cores[0].second;
      for (std::size_t i = 1; i < cores.size(); ++i)
        wacc = merge(wacc, cores[i].second);
      merge(input, wacc);
    }
  }
  return seq;
}

}  // namespace tencon::search
