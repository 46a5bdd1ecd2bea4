#include "tencon/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "tencon/tcu_sim.hpp"

namespace tencon::hw {

const char* to_string(Stationarity s) {
  switch (s) {
    case Stationarity::WS: return "WS";
    case Stationarity::IS: return "IS";
    case Stationarity::OS: return "OS";
  }
  return "?";
}

HardwareConfig preset_fetta() {
  HardwareConfig hw;
  hw.name = "fetta";
  return hw;
}

HardwareConfig preset_tpu_like() {
  HardwareConfig hw;
  hw.name = "tpu-like";
  hw.num_ces = 1;
  hw.ce_rows = 16;
  hw.ce_cols = 16;
  hw.transposable_ce = false;
  hw.flexible_distribution = false;
  hw.flexible_reduction = false;
  hw.dataflow_modes = {Stationarity::WS};
  return hw;
}

HardwareConfig preset_treta_like() {
  HardwareConfig hw;
  hw.name = "treta-like";
  hw.transposable_ce = false;
  hw.flexible_distribution = false;
  hw.flexible_reduction = false;
  hw.dataflow_modes = {Stationarity::WS, Stationarity::OS};
  return hw;
}

HardwareConfig preset_sigma_like() {
  HardwareConfig hw;
  hw.name = "sigma-like";
  hw.transposable_ce = false;
  hw.flexible_distribution = true;
  hw.flexible_reduction = true;
  hw.dataflow_modes = {Stationarity::WS, Stationarity::IS};
  return hw;
}

HardwareConfig hardware_preset(const std::string& name) {
  if (name == "fetta") return preset_fetta();
  if (name == "tpu-like") return preset_tpu_like();
  if (name == "treta-like") return preset_treta_like();
  if (name == "sigma-like") return preset_sigma_like();
  throw GraphError("unknown hardware preset: " + name);
}

std::vector<std::string> hardware_preset_names() {
  return {"fetta", "tpu-like", "treta-like", "sigma-like"};
}

Layout natural_layout(const std::vector<DimId>& dims) { return Layout{dims}; }

Layout layout_with_innermost(const std::vector<DimId>& dims, DimId inner) {
  Layout l;
  for (DimId d : dims)
    if (d != inner) l.dims.push_back(d);
  if (std::find(dims.begin(), dims.end(), inner) != dims.end())
    l.dims.push_back(inner);
  else
    return natural_layout(dims);
  return l;
}

std::map<DimId, std::pair<SpatialAxis, std::int64_t>> Mapping::spatial() const {
  std::map<DimId, std::pair<SpatialAxis, std::int64_t>> s;
  if (row_dim >= 0) s[row_dim] = {SpatialAxis::CeRow, row_extent};
  if (col_dim >= 0) s[col_dim] = {SpatialAxis::CeCol, col_extent};
  if (ce_dim >= 0) s[ce_dim] = {SpatialAxis::CeIndex, ce_extent};
  return s;
}

void PerfReport::finalize(const HardwareConfig& hw) {
  utilization = cycles > 0
                    ? static_cast<double>(macs) /
                          (static_cast<double>(hw.total_macs()) * cycles)
                    : 0.0;
  edp = (cycles / hw.frequency_hz) * energy;
}

void PerfReport::merge(const PerfReport& other) {
  cycles += other.cycles;
  energy += other.energy;
  macs += other.macs;
  for (auto& [k, v] : other.traffic) traffic[k] += v;
  reorder_events += other.reorder_events;
  reorder_dram_bytes += other.reorder_dram_bytes;
}

}  // namespace tencon::hw

namespace tencon::perf {

using hw::HardwareConfig;
using hw::Layout;
using hw::Mapping;
using hw::PerfReport;
using hw::Stationarity;

namespace {

struct OpAxes {
  std::vector<DimId> m, n, k;  // a-dangling, b-dangling, contracted
  std::vector<DimId> a_dims, b_dims, out_dims;
};

OpAxes classify(const ContractionOp& op, const TrainingWorkload& w) {
  OpAxes ax;
  ax.a_dims = w.tensors[op.operand_a].dims;
  ax.b_dims = w.tensors[op.operand_b].dims;
  ax.out_dims = w.tensors[op.result].dims;
  auto in = [](const std::vector<DimId>& v, DimId d) {
    return std::find(v.begin(), v.end(), d) != v.end();
  };
  for (DimId d : ax.a_dims) (in(ax.b_dims, d) ? ax.k : ax.m).push_back(d);
  for (DimId d : ax.b_dims)
    if (!in(ax.a_dims, d)) ax.n.push_back(d);
  return ax;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return b > 0 ? (a + b - 1) / b : a;
}

bool contains(const std::vector<DimId>& v, DimId d) {
  return std::find(v.begin(), v.end(), d) != v.end();
}

}  // namespace

std::vector<Mapping> enumerate_mappings(const ContractionOp& op,
                                        const TrainingWorkload& w,
                                        const HardwareConfig& hw) {
  OpAxes ax = classify(op, w);
  const auto& tab = w.dim_table;

  auto size_of = [&](DimId d) { return d < 0 ? 1 : tab.at(d).size; };
  std::vector<Mapping> out;

  auto push = [&](Stationarity st, bool b_held, DimId row, DimId col) {
    Mapping m;
    m.st = st;
    m.stationary_is_b = b_held;
    m.row_dim = row;
    m.col_dim = col;
    m.row_extent = std::min<std::int64_t>(size_of(row), hw.ce_rows);
    m.col_extent = std::min<std::int64_t>(size_of(col), hw.ce_cols);
    // Default operand layouts: the held operand wants the column-parallel
    // dim contiguous, a streamed operand wants its row-parallel dim
    // contiguous so one memory line feeds one array cycle.
    DimId a_inner, b_inner;
    if (st == Stationarity::OS) {
      a_inner = row;
      b_inner = col;
    } else if (b_held) {
      a_inner = row;
      b_inner = col;
    } else {
      a_inner = col;
      b_inner = row;
    }
    m.layout_a = hw::layout_with_innermost(ax.a_dims, a_inner);
    m.layout_b = hw::layout_with_innermost(ax.b_dims, b_inner);
    m.layout_out = hw::layout_with_innermost(ax.out_dims, col);

    // Inter-CE splits. A contracted-dim split needs the reduction fabric.
    std::vector<std::pair<DimId, std::int64_t>> splits = {{-1, 1}};
    if (hw.num_ces > 1) {
      std::vector<DimId> cands = ax.m;
      cands.insert(cands.end(), ax.n.begin(), ax.n.end());
      if (hw.flexible_reduction)
        cands.insert(cands.end(), ax.k.begin(), ax.k.end());
      for (DimId d : cands) {
        std::int64_t remaining = size_of(d);
        if (d == row) remaining = ceil_div(remaining, m.row_extent);
        if (d == col) remaining = ceil_div(remaining, m.col_extent);
        std::int64_t e = std::min<std::int64_t>(hw.num_ces, remaining);
        if (e >= 2) splits.push_back({d, e});
      }
    }
    for (auto [cd, ce] : splits) {
      Mapping mm = m;
      mm.ce_dim = cd;
      mm.ce_extent = ce;
      out.push_back(mm);
    }
  };

  // Weight-stationary holds a weight operand; input-stationary holds an
  // activation. When an op has no weight operand (gradient ops pairing two
  // activations) either operand may occupy the stationary port.
  auto is_weight = [&](int tid) {
    for (const auto& [node, gid] : w.core_grads) {
      auto it = w.node_tensor.find(node);
      if (it != w.node_tensor.end() && it->second == tid) return true;
    }
    return false;
  };
  bool a_w = is_weight(op.operand_a);
  bool b_w = is_weight(op.operand_b);

  for (Stationarity st : hw.dataflow_modes) {
    if (st == Stationarity::OS) {
      std::vector<DimId> rows = ax.m.empty() ? std::vector<DimId>{-1} : ax.m;
      std::vector<DimId> cols = ax.n.empty() ? std::vector<DimId>{-1} : ax.n;
      for (DimId r : rows)
        for (DimId c : cols) push(st, true, r, c);
    } else {
      std::vector<bool> holds;
      if (a_w != b_w) {
        bool hold_b = (st == Stationarity::WS) == b_w;
        holds = {hold_b};
      } else {
        holds = {true, false};
      }
      for (bool b_held : holds) {
        const std::vector<DimId>& dang = b_held ? ax.n : ax.m;
        std::vector<DimId> rows = ax.k.empty() ? std::vector<DimId>{-1} : ax.k;
        std::vector<DimId> cols = dang.empty() ? std::vector<DimId>{-1} : dang;
        for (DimId r : rows)
          for (DimId c : cols) push(st, b_held, r, c);
      }
    }
  }
  if (out.empty()) throw hw::NoLegalMapping("no dataflow modes enabled");
  return out;
}

PerfReport evaluate_mapping(const ContractionOp& op, const TrainingWorkload& w,
                            const Mapping& m, const HardwareConfig& hw) {
  OpAxes ax = classify(op, w);
  const auto& tab = w.dim_table;
  auto size_of = [&](DimId d) { return d < 0 ? 1 : tab.at(d).size; };

  // Per-CE share of the split dim.
  auto share = [&](DimId d) -> std::int64_t {
    std::int64_t s = size_of(d);
    if (d >= 0 && d == m.ce_dim) s = ceil_div(s, m.ce_extent);
    return s;
  };

  std::int64_t M = 1, N = 1, K = 1;
  for (DimId d : ax.m) M *= size_of(d);
  for (DimId d : ax.n) N *= size_of(d);
  for (DimId d : ax.k) K *= size_of(d);

  std::int64_t r = m.row_extent, c = m.col_extent;
  bool os = m.st == Stationarity::OS;

  std::int64_t tiles = 1, L = 1;
  if (os) {
    tiles *= ceil_div(share(m.row_dim), r) * ceil_div(share(m.col_dim), c);
    for (DimId d : ax.m)
      if (d != m.row_dim) tiles *= share(d);
    for (DimId d : ax.n)
      if (d != m.col_dim) tiles *= share(d);
    for (DimId d : ax.k) L *= share(d);
  } else {
    const std::vector<DimId>& held_dang = m.stationary_is_b ? ax.n : ax.m;
    const std::vector<DimId>& stream_dims = m.stationary_is_b ? ax.m : ax.n;
    tiles *= ceil_div(share(m.row_dim), r) * ceil_div(share(m.col_dim), c);
    for (DimId d : ax.k)
      if (d != m.row_dim) tiles *= share(d);
    for (DimId d : held_dang)
      if (d != m.col_dim) tiles *= share(d);
    for (DimId d : stream_dims) L *= share(d);
  }

  PerfReport rep;
  rep.macs = M * N * K;

  std::int64_t elem_bytes = hw.elem_bytes;
  double compute_cycles = 0;
  if (os) {
    compute_cycles =
        static_cast<double>(tiles) *
        tcu::ce_tile_cycles(Stationarity::OS, r, c, L, false);
  } else {
    // Partial sums accumulate in the on-chip accumulator; a stream longer
    // than the accumulator holds is processed in chunks, each paying the
    // array skew again.
    std::int64_t accum_elems = hw.accum_mem_bytes / elem_bytes;
    std::int64_t chunk = std::max<std::int64_t>(1, accum_elems / std::max<std::int64_t>(1, c));
    std::int64_t subs = ceil_div(L, chunk);
    compute_cycles = r;  // first preload; later preloads are double-buffered
    compute_cycles += static_cast<double>(tiles) * (L + subs * (r + c - 1));
  }

  std::int64_t Ea = 1, Eb = 1, Ec = 1;
  for (DimId d : ax.a_dims) Ea *= size_of(d);
  for (DimId d : ax.b_dims) Eb *= size_of(d);
  for (DimId d : ax.out_dims) Ec *= size_of(d);

  double dram_elems = static_cast<double>(Ea) + Eb + Ec;
  double dram_cycles = dram_elems * elem_bytes / hw.dram_bytes_per_cycle();
  rep.cycles = std::max(compute_cycles, dram_cycles);

  // SRAM traffic per CE times active CEs.
  double a_reads, b_reads, out_writes, accum_reads = 0;
  std::int64_t ces = std::max<std::int64_t>(1, m.ce_extent);
  double t = static_cast<double>(tiles) * ces;
  if (os) {
    a_reads = t * L * r;
    b_reads = t * L * c;
    out_writes = t * r * c;
  } else {
    double held_reads = t * r * c;
    double stream_reads = t * L * r;
    out_writes = t * L * c;
    std::int64_t k_chunks = ceil_div(share(m.row_dim), r);
    for (DimId d : ax.k)
      if (d != m.row_dim) k_chunks *= share(d);
    if (k_chunks > 1) accum_reads = out_writes * (1.0 - 1.0 / k_chunks);
    if (m.stationary_is_b) {
      a_reads = stream_reads;
      b_reads = held_reads;
    } else {
      a_reads = held_reads;
      b_reads = stream_reads;
    }
  }

  // An operand shared by every CE is read once and multicast when the
  // distribution fabric exists; without it each CE fetches its own copy,
  // which the per-CE traffic above already counts.
  if (ces > 1 && hw.flexible_distribution) {
    if (m.ce_dim >= 0 && !contains(ax.a_dims, m.ce_dim)) a_reads /= ces;
    if (m.ce_dim >= 0 && !contains(ax.b_dims, m.ce_dim)) b_reads /= ces;
  }

  rep.traffic["dram"] = dram_elems;
  rep.traffic["sram"] = a_reads + b_reads + out_writes + accum_reads;
  rep.traffic["reg"] = static_cast<double>(rep.macs);
  double noc = 0;
  if (hw.num_ces > 1) {
    noc = (a_reads + b_reads + out_writes) *
          (std::log2(static_cast<double>(hw.num_ces)) + 1.0);
    rep.traffic["noc"] = noc;
  }

  const auto& en = hw.energy;
  rep.energy = en.mac * static_cast<double>(rep.macs) +
               en.reg * static_cast<double>(rep.macs) +
               en.sram_read * (a_reads + b_reads + accum_reads) +
               en.sram_write * (out_writes) +
               en.dram_read * (Ea + Eb) + en.dram_write * Ec + en.noc_hop * noc;
  rep.finalize(hw);
  return rep;
}

PerfReport layout_reorder_cost(std::int64_t elems, const HardwareConfig& hw) {
  PerfReport r;
  r.reorder_events = 1;
  r.reorder_dram_bytes = 2.0 * elems * hw.elem_bytes;
  r.cycles = r.reorder_dram_bytes / hw.dram_bytes_per_cycle();
  r.traffic["dram"] = 2.0 * elems;
  r.energy = (hw.energy.dram_read + hw.energy.dram_write) * elems;
  return r;
}

namespace {

// Size-1 dims carry no layout information: a memory line whose innermost
// axis has extent 1 is the same line under the next axis. Layout state and
// requirements are therefore expressed on non-unit dims only.
DimId effective_inner(const std::vector<DimId>& order,
                      const std::map<DimId, Dim>& tab) {
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (tab.at(*it).size > 1) return *it;
  return -1;
}

// Innermost dims an operand may arrive with, given the mapping and hardware.
// Both operands pass through the distribution fabric (stationary preload and
// streamed feed alike), so a flexible distribution absorbs either; the
// transposable array additionally accepts a held tile in its transposed
// (row-parallel innermost) layout.
std::set<DimId> acceptable_inner(const OpAxes& ax, const Mapping& m,
                                 const HardwareConfig& hw, bool operand_a,
                                 const std::map<DimId, Dim>& tab) {
  const std::vector<DimId>& dims = operand_a ? ax.a_dims : ax.b_dims;
  bool streaming;
  DimId base;
  if (m.st == Stationarity::OS) {
    streaming = true;
    base = operand_a ? m.row_dim : m.col_dim;
  } else if (m.stationary_is_b == !operand_a) {
    streaming = false;  // this operand is held in the PE grid
    base = m.col_dim;
  } else {
    streaming = true;
    base = m.row_dim;
  }
  std::set<DimId> ok;
  auto all = [&] {
    ok.insert(-1);
    for (DimId d : dims) ok.insert(d);
  };
  if (base < 0 || !contains(dims, base) || tab.at(base).size == 1) {
    all();
    return ok;
  }
  ok.insert(base);
  if (hw.flexible_distribution) all();
  if (!streaming && hw.transposable_ce && m.row_dim >= 0 &&
      contains(dims, m.row_dim))
    ok.insert(m.row_dim);
  return ok;
}

DimId required_inner(const OpAxes& ax, const Mapping& m, bool operand_a,
                     const std::map<DimId, Dim>& tab) {
  const Layout& l = operand_a ? m.layout_a : m.layout_b;
  (void)ax;
  return effective_inner(l.dims, tab);
}

struct Candidate {
  Mapping m;
  PerfReport rep;       // op cost including any reorders charged
  int events = 0;
  double cost = 0;      // scalar key used only for sorting/dedup
  double cyc = 0;       // cycle contribution of this op
  double en = 0;        // energy contribution of this op
  std::map<int, DimId> new_inner;  // tensor id -> layout after this op
};

double cand_cost(const PerfReport& r) {
  // Scalar ordering key: latency first, energy as tiebreak. The planner
  // itself minimizes the product of total cycles and total energy.
  return r.cycles * 1e9 + r.energy;
}

// One scheduled op: the chosen engine mapping plus the innermost dim the
// result is written out with. Reorder charges are implied by the layout
// state at replay time, so they are not stored.
struct PlanStep {
  Mapping m;
  DimId out_inner = -1;
};

// Hardware configs reachable by dropping exactly one flexibility feature.
// Used to guarantee that adding a feature never worsens the reported
// optimum even when the exact sweep has to fall back to a beam: any plan
// legal on a reduced config stays legal (and never costs more) on the
// original one.
std::vector<HardwareConfig> reduced_configs(const HardwareConfig& hw) {
  std::vector<HardwareConfig> out;
  auto drop = [&](bool HardwareConfig::*flag) {
    if (hw.*flag) {
      HardwareConfig h = hw;
      h.*flag = false;
      out.push_back(std::move(h));
    }
  };
  drop(&HardwareConfig::transposable_ce);
  drop(&HardwareConfig::flexible_distribution);
  drop(&HardwareConfig::flexible_reduction);
  if (hw.dataflow_modes.size() > 1)
    for (Stationarity s : hw.dataflow_modes) {
      HardwareConfig h = hw;
      h.dataflow_modes.erase(s);
      out.push_back(std::move(h));
    }
  return out;
}

// Recompute the full cost of a fixed plan under a given config. Reorders
// are re-derived from the layout state, so a plan found on a reduced
// config is charged only for the reorders this config actually needs.
WorkloadEval replay_plan(const TrainingWorkload& w, const HardwareConfig& hw,
                         const std::vector<OpAxes>& axes,
                         const std::vector<PlanStep>& plan) {
  WorkloadEval ev;
  std::map<int, DimId> st;
  for (const auto& t : w.tensors)
    st[t.id] = effective_inner(t.dims, w.dim_table);
  for (std::size_t oi = 0; oi < w.ops.size(); ++oi) {
    const auto& op = w.ops[oi];
    const Mapping& m = plan[oi].m;
    PerfReport rep = evaluate_mapping(op, w, m, hw);
    int events = 0;
    for (bool is_a : {true, false}) {
      int tid = is_a ? op.operand_a : op.operand_b;
      auto ok = acceptable_inner(axes[oi], m, hw, is_a, w.dim_table);
      if (!ok.count(st.at(tid))) {
        rep.merge(layout_reorder_cost(w.tensor_elems(tid), hw));
        ++events;
        st[tid] = required_inner(axes[oi], m, is_a, w.dim_table);
      }
    }
    st[op.result] = plan[oi].out_inner;
    rep.finalize(hw);
    ev.total.merge(rep);
    ev.chosen.push_back(m);
    ev.reorders.push_back(events);
  }
  ev.total.finalize(hw);
  return ev;
}

// Cache of plans already computed for reduced configs during one top-level
// evaluation; the reduction lattice reaches the same config along several
// paths. nullopt records a config with no legal plan.
using PlanCache = std::map<std::string, std::optional<std::vector<PlanStep>>>;

std::string config_key(const HardwareConfig& hw) {
  std::string k;
  k += hw.transposable_ce ? 'T' : 't';
  k += hw.flexible_distribution ? 'D' : 'd';
  k += hw.flexible_reduction ? 'R' : 'r';
  for (Stationarity s : hw.dataflow_modes) k += to_string(s)[0];
  return k;
}

WorkloadEval plan_workload(const TrainingWorkload& w, const HardwareConfig& hw,
                           std::vector<PlanStep>& plan_out, PlanCache& cache) {
  // Per-op candidate lists, built against a layout state that maps each
  // tensor id to its current innermost dim. Everything state-independent
  // (the mapping itself, its base cost, the acceptable innermost sets) is
  // precomputed once; the DFS below only applies reorder charges.
  std::vector<OpAxes> axes;
  axes.reserve(w.ops.size());
  for (const auto& op : w.ops) axes.push_back(classify(op, w));

  struct Skeleton {
    Mapping m;
    PerfReport base;
    double base_cost = 0;
    std::set<DimId> ok_a, ok_b;
    DimId tgt_a = -1, tgt_b = -1;
    std::vector<DimId> out_choices;
  };
  std::vector<std::vector<Skeleton>> skels(w.ops.size());
  for (std::size_t oi = 0; oi < w.ops.size(); ++oi) {
    const auto& op = w.ops[oi];
    const auto& ax = axes[oi];
    for (const Mapping& m : enumerate_mappings(op, w, hw)) {
      Skeleton s;
      s.m = m;
      s.base = evaluate_mapping(op, w, m, hw);
      s.base_cost = cand_cost(s.base);
      s.ok_a = acceptable_inner(ax, m, hw, true, w.dim_table);
      s.ok_b = acceptable_inner(ax, m, hw, false, w.dim_table);
      s.tgt_a = required_inner(ax, m, true, w.dim_table);
      s.tgt_b = required_inner(ax, m, false, w.dim_table);
      // Output layout choices: rigid hardware emits column-major psums;
      // a reduction fabric can emit any dim innermost.
      DimId base_out = effective_inner(m.layout_out.dims, w.dim_table);
      s.out_choices.push_back(base_out);
      if (hw.flexible_reduction)
        for (DimId d : ax.out_dims)
          if (d != base_out && w.dim_table.at(d).size > 1)
            s.out_choices.push_back(d);
      skels[oi].push_back(std::move(s));
    }
    std::sort(skels[oi].begin(), skels[oi].end(),
              [](const Skeleton& a, const Skeleton& b) {
                return a.base_cost < b.base_cost;
              });
  }

  // Cheapest possible remaining cycles/energy from op oi onward (taken
  // independently per dimension), used for product-bound pruning.
  std::vector<double> sfx_c(w.ops.size() + 1, 0.0),
      sfx_e(w.ops.size() + 1, 0.0);
  for (std::size_t oi = w.ops.size(); oi-- > 0;) {
    double mc = std::numeric_limits<double>::infinity(), me = mc;
    for (const Skeleton& s : skels[oi]) {
      mc = std::min(mc, static_cast<double>(s.base.cycles));
      me = std::min(me, s.base.energy);
    }
    sfx_c[oi] = sfx_c[oi + 1] + mc;
    sfx_e[oi] = sfx_e[oi + 1] + me;
  }

  // Candidate lists depend only on the two operand layouts, so memoize.
  std::vector<std::map<std::pair<DimId, DimId>, std::vector<Candidate>>> memo(
      w.ops.size());

  auto build_cands = [&](std::size_t oi, const std::map<int, DimId>& state)
      -> const std::vector<Candidate>& {
    const auto& op = w.ops[oi];
    std::pair<DimId, DimId> key{state.at(op.operand_a),
                                state.at(op.operand_b)};
    auto it = memo[oi].find(key);
    if (it != memo[oi].end()) return it->second;
    std::vector<Candidate> cands;
    for (const Skeleton& s : skels[oi]) {
      Candidate c;
      c.m = s.m;
      c.rep = s.base;
      for (bool is_a : {true, false}) {
        int tid = is_a ? op.operand_a : op.operand_b;
        DimId cur = state.at(tid);
        const auto& ok = is_a ? s.ok_a : s.ok_b;
        if (!ok.count(cur)) {
          c.rep.merge(layout_reorder_cost(w.tensor_elems(tid), hw));
          ++c.events;
          c.new_inner[tid] = is_a ? s.tgt_a : s.tgt_b;
        }
      }
      for (DimId oc : s.out_choices) {
        Candidate cc = c;
        cc.new_inner[op.result] = oc;
        cc.rep.finalize(hw);
        cc.cost = cand_cost(cc.rep);
        cc.cyc = static_cast<double>(cc.rep.cycles);
        cc.en = cc.rep.energy;
        cands.push_back(std::move(cc));
      }
    }
    // Candidates with the same resulting state delta are interchangeable
    // for the rest of the schedule, so per delta keep only the (cycles,
    // energy) Pareto frontier; a dominated candidate can never improve the
    // final product.
    std::vector<Candidate> kept;
    std::map<std::vector<std::pair<int, DimId>>, std::vector<std::size_t>>
        frontier;
    for (auto& c : cands) {
      std::vector<std::pair<int, DimId>> key(c.new_inner.begin(),
                                             c.new_inner.end());
      auto& idxs = frontier[key];
      bool dominated = false;
      for (std::size_t i : idxs)
        if (kept[i].cyc <= c.cyc && kept[i].en <= c.en) {
          dominated = true;
          break;
        }
      if (dominated) continue;
      idxs.push_back(kept.size());
      kept.push_back(std::move(c));
    }
    return memo[oi].emplace(key, std::move(kept)).first->second;
  };

  std::map<int, DimId> init;
  for (const auto& t : w.tensors)
    init[t.id] = effective_inner(t.dims, w.dim_table);

  // Only layouts of tensors some later op still reads can influence the
  // remaining schedule, so partial schedules are grouped by that projected
  // state and, within a group, reduced to their (cycles, energy) Pareto
  // frontier. This makes the forward sweep exact for the product objective:
  // a dominated prefix can never finish with a smaller cycle*energy total.
  // A tensor's layout only influences the remaining schedule through which
  // future readers accept it without a reorder. Layouts that every future
  // reader's skeleton accepts or rejects identically are interchangeable,
  // so each level canonicalizes layouts by that acceptance signature and
  // tensors with a single equivalence class are dropped from the state key
  // entirely. Both reductions are exact.
  auto possible_inners = [&](int tid) {
    std::set<DimId> poss(w.tensors[tid].dims.begin(),
                         w.tensors[tid].dims.end());
    poss.insert(effective_inner(w.tensors[tid].dims, w.dim_table));
    return poss;
  };
  std::vector<std::map<int, std::map<DimId, DimId>>> canon(w.ops.size() + 1);
  std::vector<std::set<int>> tracked(w.ops.size() + 1);
  {
    std::map<int, std::set<int>> readers;  // tid -> future op indices
    for (std::size_t oi = w.ops.size(); oi-- > 0;) {
      readers[w.ops[oi].operand_a].insert(int(oi));
      readers[w.ops[oi].operand_b].insert(int(oi));
      for (auto& [tid, ops_reading] : readers) {
        auto poss = possible_inners(tid);
        // Signature of a layout: acceptance bits over every skeleton of
        // every future op that reads this tensor.
        std::map<std::vector<bool>, DimId> rep;
        auto& cmap = canon[oi][tid];
        for (DimId inner : poss) {
          std::vector<bool> sig;
          for (int j : ops_reading) {
            bool as_a = w.ops[j].operand_a == tid;
            bool as_b = w.ops[j].operand_b == tid;
            for (const Skeleton& s : skels[j]) {
              if (as_a) sig.push_back(s.ok_a.count(inner) > 0);
              if (as_b) sig.push_back(s.ok_b.count(inner) > 0);
            }
          }
          cmap[inner] = rep.emplace(std::move(sig), inner).first->second;
        }
        if (rep.size() > 1) tracked[oi].insert(tid);
      }
    }
  }

  struct Step {
    int parent;
    const Candidate* cand;
  };
  std::vector<Step> arena;
  struct Node {
    double c, e;
    int step;
  };
  using State = std::map<int, DimId>;

  auto project = [&](const State& st, std::size_t oi) {
    State out;
    for (int tid : tracked[oi])
      out[tid] = canon[oi].at(tid).at(st.at(tid));
    return out;
  };

  // A quick greedy pass supplies an incumbent product for bound pruning.
  double incumbent = std::numeric_limits<double>::infinity();
  {
    State st = init;
    double gc = 0, ge = 0;
    bool ok = true;
    for (std::size_t oi = 0; oi < w.ops.size() && ok; ++oi) {
      const auto& cands = build_cands(oi, st);
      if (cands.empty()) {
        ok = false;
        break;
      }
      const Candidate* pick = &cands.front();
      for (const auto& c : cands)
        if (c.cyc * c.en < pick->cyc * pick->en) pick = &c;
      for (auto& [tid, inner] : pick->new_inner) st[tid] = inner;
      gc += pick->cyc;
      ge += pick->en;
    }
    if (ok) incumbent = gc * ge;
  }

  // Forward sweep. With beam == 0 the sweep is exact; a positive beam keeps
  // only the most promising nodes per level and is used solely to find a
  // strong achievable incumbent before the exact pass. An exact pass that
  // grows past the node cap gives up and reports the overflow instead.
  constexpr std::size_t kNodeCap = 50000;
  constexpr std::size_t kStepCap = 1000000;
  bool overflow = false;
  auto sweep = [&](double inc, std::size_t beam) -> std::pair<int, double> {
    arena.clear();
    std::map<State, std::vector<Node>> layer;
    layer.emplace(project(init, 0), std::vector<Node>{{0.0, 0.0, -1}});

    for (std::size_t oi = 0; oi < w.ops.size(); ++oi) {
      std::map<State, std::vector<Node>> next;
      for (auto& [pstate, nodes] : layer) {
        if (beam == 0 && arena.size() > kStepCap) {
          overflow = true;
          return {-1, std::numeric_limits<double>::infinity()};
        }
        // Rebuild the full state: projected tensors carry their tracked
        // layout, everything else still has its initial one.
        State st = init;
        for (auto& [tid, inner] : pstate) st[tid] = inner;
        const auto& cands = build_cands(oi, st);
        for (const auto& c : cands) {
          std::vector<Node> grown;
          for (const Node& n : nodes) {
            double nc = n.c + c.cyc, ne = n.e + c.en;
            // Prune only clearly hopeless prefixes: the tolerance keeps
            // paths whose bound ties the incumbent up to rounding from
            // different summation orders.
            if ((nc + sfx_c[oi + 1]) * (ne + sfx_e[oi + 1]) >
                inc * (1.0 + 1e-9))
              continue;
            arena.push_back({n.step, &c});
            grown.push_back({nc, ne, int(arena.size()) - 1});
          }
          if (grown.empty()) continue;
          State nst = st;
          for (auto& [tid, inner] : c.new_inner) nst[tid] = inner;
          auto& bucket = next[project(nst, oi + 1)];
          bucket.insert(bucket.end(), grown.begin(), grown.end());
        }
      }
      // Pareto-reduce each bucket: sort by cycles, keep strictly falling
      // energy.
      std::size_t total = 0;
      for (auto& [pstate, nodes] : next) {
        std::sort(nodes.begin(), nodes.end(),
                  [](const Node& a, const Node& b) {
                    return a.c != b.c ? a.c < b.c : a.e < b.e;
                  });
        std::vector<Node> front;
        for (const Node& n : nodes)
          if (front.empty() || n.e < front.back().e) front.push_back(n);
        nodes = std::move(front);
        total += nodes.size();
      }
      if (beam == 0 && total > kNodeCap) {
        overflow = true;
        return {-1, std::numeric_limits<double>::infinity()};
      }
      if (beam > 0 && total > beam) {
        // Keep the nodes with the lowest optimistic completion product.
        std::vector<double> bounds;
        bounds.reserve(total);
        for (auto& [pstate, nodes] : next)
          for (const Node& n : nodes)
            bounds.push_back((n.c + sfx_c[oi + 1]) * (n.e + sfx_e[oi + 1]));
        std::nth_element(bounds.begin(), bounds.begin() + beam - 1,
                         bounds.end());
        double cut = bounds[beam - 1];
        for (auto& [pstate, nodes] : next) {
          std::vector<Node> keep;
          for (const Node& n : nodes)
            if ((n.c + sfx_c[oi + 1]) * (n.e + sfx_e[oi + 1]) <= cut)
              keep.push_back(n);
          nodes = std::move(keep);
        }
        std::erase_if(next, [](const auto& kv) { return kv.second.empty(); });
      }
      layer = std::move(next);
    }

    int best_step = -1;
    double best_prod = std::numeric_limits<double>::infinity();
    for (const auto& [pstate, nodes] : layer)
      for (const Node& n : nodes)
        if (n.c * n.e < best_prod) {
          best_prod = n.c * n.e;
          best_step = n.step;
        }
    return {best_step, best_prod};
  };

  auto [beam_step, beam_prod] = sweep(incumbent, 64);
  std::vector<Candidate> beam_path;
  if (beam_step >= 0) {
    beam_path.resize(w.ops.size());
    for (int s = beam_step, oi = int(w.ops.size()) - 1; s >= 0;
         s = arena[s].parent, --oi)
      beam_path[oi] = *arena[s].cand;
    incumbent = std::min(incumbent, beam_prod);
  }

  auto [best_step, best_prod] = sweep(incumbent, 0);
  std::vector<Candidate> best_path;
  if (best_step >= 0) {
    best_path.resize(w.ops.size());
    for (int s = best_step, oi = int(w.ops.size()) - 1; s >= 0;
         s = arena[s].parent, --oi)
      best_path[oi] = *arena[s].cand;
  } else if (beam_step >= 0) {
    best_path = std::move(beam_path);
  }
  if (best_path.size() != w.ops.size())
    throw hw::NoLegalMapping("no complete mapping found");

  std::vector<PlanStep> plan;
  plan.reserve(w.ops.size());
  for (std::size_t oi = 0; oi < w.ops.size(); ++oi)
    plan.push_back(
        {best_path[oi].m, best_path[oi].new_inner.at(w.ops[oi].result)});
  WorkloadEval best_ev = replay_plan(w, hw, axes, plan);

  if (overflow) {
    // The exact sweep did not finish, so the beam plan above may be beaten
    // by a plan found on a reduced config. Such plans are always legal here
    // and replaying them on this config can only remove reorder charges.
    // Taking the minimum keeps richer hardware from ever reporting a worse
    // optimum than any of its reductions.
    for (const HardwareConfig& sub : reduced_configs(hw)) {
      std::string key = config_key(sub);
      auto it = cache.find(key);
      if (it == cache.end()) {
        std::vector<PlanStep> sp;
        try {
          plan_workload(w, sub, sp, cache);
          it = cache.emplace(key, std::move(sp)).first;
        } catch (const hw::NoLegalMapping&) {
          it = cache.emplace(key, std::nullopt).first;
        }
      }
      if (!it->second) continue;
      WorkloadEval ev2 = replay_plan(w, hw, axes, *it->second);
      if (static_cast<double>(ev2.total.cycles) * ev2.total.energy <
          static_cast<double>(best_ev.total.cycles) * best_ev.total.energy) {
        best_ev = std::move(ev2);
        plan = *it->second;
      }
    }
  }
  plan_out = std::move(plan);
  return best_ev;
}

}  // namespace

WorkloadEval evaluate_workload(const TrainingWorkload& w,
                               const HardwareConfig& hw) {
  std::vector<PlanStep> plan;
  PlanCache cache;
  return plan_workload(w, hw, plan, cache);
}

double metric_value(const PerfReport& r, const HardwareConfig& hw,
                    const std::string& metric) {
  if (metric == "flops") return static_cast<double>(r.macs);
  if (metric == "latency") return r.cycles / hw.frequency_hz;
  if (metric == "energy") return r.energy;
  if (metric == "edp") return r.edp;
  throw GraphError("unknown metric: " + metric);
}

}  // namespace tencon::perf
