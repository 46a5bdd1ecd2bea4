#include "tencon/tcu_sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "tencon/butterfly.hpp"

namespace tencon::tcu {

using hw::Stationarity;

std::string CeMode::name() const {
  std::string s = hw::to_string(st);
  s += ib_vertical ? "/v" : "/h";
  s += swap_operands ? "/bindA" : "/bindB";
  return s;
}

std::vector<CeMode> all_ce_modes() {
  return {
      {Stationarity::WS, true, false},  {Stationarity::WS, false, false},
      {Stationarity::IS, true, true},   {Stationarity::IS, false, true},
      {Stationarity::OS, true, false},  {Stationarity::OS, true, true},
  };
}

std::string CeTrace::to_json() const {
  std::ostringstream os;
  os << "{\"cycles\":" << cycles << ",\"macs\":" << macs
     << ",\"rows\":" << rows << ",\"cols\":" << cols << ",\"activity\":[";
  for (std::size_t t = 0; t < activity.size(); ++t)
    os << (t ? "," : "") << activity[t];
  os << "]}";
  return os.str();
}

std::int64_t ce_tile_cycles(Stationarity st, std::int64_t rows_used,
                            std::int64_t cols_used, std::int64_t stream_len,
                            bool preload_hidden) {
  if (rows_used <= 0 || cols_used <= 0 || stream_len <= 0) return 0;
  if (st == Stationarity::OS) {
    // Skewed accumulation, then a skewed drain of one finished row per cycle.
    return stream_len + 2 * rows_used + cols_used - 2;
  }
  // Held-operand preload (unless hidden by double buffering), skewed stream,
  // and one writeback cycle after the final MAC leaves the bottom row.
  std::int64_t preload = preload_hidden ? 0 : rows_used;
  return preload + stream_len + rows_used + cols_used - 1;
}

namespace {

// Stationary-operand tile: S[k][c] held in the PE grid (k on rows), streaming
// operand T[t][k], producing out[t][c]. Covers both WS (S = B) and IS (S = A)
// after the caller orients the operands.
NdArray run_held_tile(const NdArray& s, const NdArray& t, int ce_rows,
                      int ce_cols, Stationarity st, CeTrace* trace,
                      bool preload_hidden) {
  std::int64_t K = s.shape[0], C = s.shape[1], L = t.shape[0];
  if (t.shape[1] != K) throw ShapeMismatch("tile operand K mismatch");
  if (K > ce_rows || C > ce_cols)
    throw TileTooLarge("held tile exceeds CE grid");
  NdArray out({L, C});
  std::int64_t preload = preload_hidden ? 0 : K;
  std::int64_t cycles = ce_tile_cycles(st, K, C, L, preload_hidden);
  if (trace) {
    trace->rows = ce_rows;
    trace->cols = ce_cols;
    trace->activity.assign(static_cast<std::size_t>(cycles), 0u);
  }
  for (std::int64_t i = 0; i < L; ++i)
    for (std::int64_t c = 0; c < C; ++c) {
      double acc = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        acc += t.data[i * K + k] * s.data[k * C + c];
        if (trace)
          trace->activity[preload + i + k + c] |= 1u << (k * ce_cols + c);
      }
      out.data[i * C + c] = acc;
    }
  if (trace) {
    trace->cycles = cycles;
    trace->macs = L * K * C;
  }
  return out;
}

// Output-stationary tile: psum[m][n] accumulates in place while A[m][k] and
// B[k][n] stream past; results drain row by row afterwards.
NdArray run_os_tile(const NdArray& a, const NdArray& b, int ce_rows,
                    int ce_cols, CeTrace* trace) {
  std::int64_t M = a.shape[0], K = a.shape[1], N = b.shape[1];
  if (b.shape[0] != K) throw ShapeMismatch("tile operand K mismatch");
  if (M > ce_rows || N > ce_cols)
    throw TileTooLarge("output tile exceeds CE grid");
  NdArray out({M, N});
  std::int64_t cycles = ce_tile_cycles(Stationarity::OS, M, N, K, false);
  if (trace) {
    trace->rows = ce_rows;
    trace->cols = ce_cols;
    trace->activity.assign(static_cast<std::size_t>(cycles), 0u);
  }
  for (std::int64_t m = 0; m < M; ++m)
    for (std::int64_t n = 0; n < N; ++n) {
      double acc = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        acc += a.data[m * K + k] * b.data[k * N + n];
        if (trace) trace->activity[k + m + n] |= 1u << (m * ce_cols + n);
      }
      out.data[m * N + n] = acc;
    }
  if (trace) {
    trace->cycles = cycles;
    trace->macs = M * K * N;
  }
  return out;
}

}  // namespace

NdArray run_ce(const CeMode& mode, const NdArray& a, const NdArray& b,
               int ce_rows, int ce_cols, CeTrace* trace, bool preload_hidden) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw ShapeMismatch("run_ce expects matrices");
  std::int64_t M = a.shape[0], K = a.shape[1], N = b.shape[1];
  if (b.shape[0] != K) throw ShapeMismatch("run_ce K mismatch");
  switch (mode.st) {
    case Stationarity::OS: {
      // Operand binding only swaps which port feeds which physical side;
      // the PE grid then holds the transposed psum tile.
      if (!mode.swap_operands) return run_os_tile(a, b, ce_rows, ce_cols, trace);
      NdArray bt({N, K}), at({K, M});
      for (std::int64_t k = 0; k < K; ++k)
        for (std::int64_t n = 0; n < N; ++n) bt.data[n * K + k] = b.data[k * N + n];
      for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t k = 0; k < K; ++k) at.data[k * M + m] = a.data[m * K + k];
      NdArray outt = run_os_tile(bt, at, ce_rows, ce_cols, trace);
      NdArray out({M, N});
      for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t n = 0; n < N; ++n)
          out.data[m * N + n] = outt.data[n * M + m];
      return out;
    }
    case Stationarity::WS: {
      // Hold B[K,N], stream rows of A.
      return run_held_tile(b, a, ce_rows, ce_cols, Stationarity::WS, trace,
                           preload_hidden);
    }
    case Stationarity::IS: {
      // Hold A viewed as [K,M], stream columns of B; transpose the result
      // stream back to [M,N].
      NdArray s({K, M}), t({N, K});
      for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t k = 0; k < K; ++k) s.data[k * M + m] = a.data[m * K + k];
      for (std::int64_t k = 0; k < K; ++k)
        for (std::int64_t n = 0; n < N; ++n) t.data[n * K + k] = b.data[k * N + n];
      NdArray outt = run_held_tile(s, t, ce_rows, ce_cols, Stationarity::IS,
                                   trace, preload_hidden);
      NdArray out({M, N});
      for (std::int64_t m = 0; m < M; ++m)
        for (std::int64_t n = 0; n < N; ++n)
          out.data[m * N + n] = outt.data[n * M + m];
      return out;
    }
  }
  throw GraphError("unreachable");
}

// ---------------------------------------------------------------------------
// Multi-CE execution.

namespace {

struct AxisSplit {
  std::vector<DimId> dims;       // dims making up this GEMM axis, outer first
  std::vector<std::int64_t> sz;  // size per dim
  std::int64_t total() const {
    std::int64_t p = 1;
    for (auto s : sz) p *= s;
    return p;
  }
};

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Iterate over every index combination of the given per-dim chunk counts.
void for_each_combo(const std::vector<std::int64_t>& counts,
                    const std::function<void(const std::vector<std::int64_t>&)>& f) {
  std::vector<std::int64_t> idx(counts.size(), 0);
  while (true) {
    f(idx);
    std::size_t p = counts.size();
    while (p > 0) {
      --p;
      if (++idx[p] < counts[p]) break;
      idx[p] = 0;
      if (p == 0) return;
    }
    if (counts.empty()) return;
  }
}

std::int64_t next_pow2(std::int64_t v) {
  std::int64_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

TcuResult run_tcu(const TcuOperand& a, const TcuOperand& b,
                  const std::map<DimId, Dim>& dim_table, const hw::Mapping& m,
                  const hw::HardwareConfig& hw) {
  auto in = [&](const std::vector<DimId>& v, DimId d) {
    return std::find(v.begin(), v.end(), d) != v.end();
  };
  std::vector<DimId> k_dims, m_dims, n_dims;
  for (DimId d : a.dims) (in(b.dims, d) ? k_dims : m_dims).push_back(d);
  for (DimId d : b.dims)
    if (!in(a.dims, d)) n_dims.push_back(d);

  // Orient operands to [m..., k...] and [k..., n...].
  std::vector<DimId> a_order = m_dims, b_order = k_dims;
  a_order.insert(a_order.end(), k_dims.begin(), k_dims.end());
  b_order.insert(b_order.end(), n_dims.begin(), n_dims.end());
  NdArray A = transpose_to(a.value, a.dims, a_order);
  NdArray B = transpose_to(b.value, b.dims, b_order);
  std::vector<DimId> out_dims = m_dims;
  out_dims.insert(out_dims.end(), n_dims.begin(), n_dims.end());

  auto size_of = [&](DimId d) { return dim_table.at(d).size; };
  auto axis_of = [&](DimId d) -> char {
    if (d < 0) return '-';
    if (in(k_dims, d)) return 'k';
    if (in(m_dims, d)) return 'm';
    if (in(n_dims, d)) return 'n';
    throw GraphError("mapping dim not part of the contraction");
  };
  char row_ax = axis_of(m.row_dim), col_ax = axis_of(m.col_dim),
       ce_ax = axis_of(m.ce_dim);

  bool os = m.st == Stationarity::OS;
  if (os) {
    if (m.row_dim >= 0 && row_ax != 'm')
      throw GraphError("OS row dim must be an output dim of operand A");
    if (m.col_dim >= 0 && col_ax != 'n')
      throw GraphError("OS col dim must be an output dim of operand B");
  } else {
    bool b_held = m.stationary_is_b;
    if (m.row_dim >= 0 && row_ax != 'k')
      throw GraphError("WS/IS row dim must be a contracted dim");
    if (m.col_dim >= 0 && col_ax != (b_held ? 'n' : 'm'))
      throw GraphError("held-operand col dim must dangle from the held side");
  }
  if (ce_ax == 'k' && !hw.flexible_reduction)
    throw hw::UnroutablePattern(
        "inter-CE contraction split needs a reduction fabric");
  if (m.ce_extent > hw.num_ces || m.row_extent > hw.ce_rows ||
      m.col_extent > hw.ce_cols)
    throw TileTooLarge("mapping extents exceed the array");

  // Chunk counts per dim. Spatial dims tile by their extent; every other dim
  // either streams (handled inside a tile) or iterates one index per tile.
  std::vector<DimId> all_dims = m_dims;
  all_dims.insert(all_dims.end(), n_dims.begin(), n_dims.end());
  all_dims.insert(all_dims.end(), k_dims.begin(), k_dims.end());

  auto chunk = [&](DimId d) -> std::int64_t {
    if (d == m.row_dim) return m.row_extent;
    if (d == m.col_dim) return m.col_extent;
    return 1;
  };
  // Which dims stream through a tile (their whole remaining range per tile).
  auto streams = [&](DimId d) {
    char ax = axis_of(d);
    if (os) return ax == 'k';
    return m.stationary_is_b ? ax == 'm' : ax == 'n';
  };

  std::int64_t ce_used = std::max<std::int64_t>(1, m.ce_extent);
  std::int64_t ce_chunk =
      m.ce_dim < 0 ? 0 : ceil_div(size_of(m.ce_dim), ce_used);

  // Temporal dims per CE: all dims that neither stream nor sit on the CE
  // axis, chunked by their spatial extent (1 for purely temporal dims).
  struct TemporalDim {
    DimId d;
    std::int64_t chunk, count;
  };
  std::vector<TemporalDim> temporal;
  for (DimId d : all_dims) {
    if (streams(d)) continue;
    std::int64_t total = size_of(d);
    if (d == m.ce_dim) total = ce_chunk;  // per-CE share, tiled further below
    std::int64_t c = chunk(d);
    if (d == m.ce_dim && d != m.row_dim && d != m.col_dim) continue;
    temporal.push_back({d, c, ceil_div(total, c)});
  }

  CeMode mode;
  if (os)
    mode = {Stationarity::OS, true, !m.stationary_is_b};
  else if (m.stationary_is_b)
    mode = {Stationarity::WS, true, false};
  else
    mode = {Stationarity::IS, true, true};

  std::map<DimId, std::int64_t> lo, hi;  // active index window per dim
  auto window = [&](DimId d) -> std::pair<std::int64_t, std::int64_t> {
    auto it = lo.find(d);
    if (it == lo.end()) return {0, size_of(d)};
    return {it->second, hi.at(d)};
  };

  // Gather a sub-array of `src` (dims `order`) over the current windows,
  // flattened to [rows, cols] with `row_set` dims forming the rows.
  auto slice2d = [&](const NdArray& src, const std::vector<DimId>& order,
                     const std::vector<DimId>& row_set) {
    std::vector<std::int64_t> base(order.size()), ext(order.size());
    std::int64_t rows = 1, cols = 1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto [l, h] = window(order[i]);
      h = std::min(h, size_of(order[i]));
      base[i] = l;
      ext[i] = std::max<std::int64_t>(0, h - l);
      (in(row_set, order[i]) ? rows : cols) *= ext[i];
    }
    // Reorder so row_set dims are outermost, preserving relative order.
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (in(row_set, order[i])) perm.push_back(i);
    for (std::size_t i = 0; i < order.size(); ++i)
      if (!in(row_set, order[i])) perm.push_back(i);
    NdArray out({rows, cols});
    std::vector<std::int64_t> stride(order.size(), 1);
    for (std::size_t i = order.size(); i-- > 1;)
      stride[i - 1] = stride[i] * src.shape[i];
    std::vector<std::int64_t> idx(order.size(), 0);
    std::int64_t flat = 0, total = rows * cols;
    while (flat < total) {
      std::int64_t off = 0;
      for (std::size_t i = 0; i < order.size(); ++i)
        off += (base[perm[i]] + idx[i]) * stride[perm[i]];
      out.data[flat++] = src.data[off];
      std::size_t p = order.size();
      while (p > 0) {
        --p;
        if (++idx[p] < ext[perm[p]]) break;
        idx[p] = 0;
      }
    }
    return out;
  };

  NdArray C(std::vector<std::int64_t>{});
  {
    std::vector<std::int64_t> cs;
    for (DimId d : out_dims) cs.push_back(size_of(d));
    if (cs.empty()) cs.push_back(1);
    C = NdArray(cs);
  }
  std::vector<std::int64_t> c_stride(out_dims.size(), 1);
  for (std::size_t i = out_dims.size(); i-- > 1;)
    c_stride[i - 1] = c_stride[i] * C.shape[i];

  // Scatter-accumulate a [rows, cols] tile back into C.
  auto scatter = [&](const NdArray& tile, const std::vector<DimId>& row_set,
                     std::vector<double>& dst) {
    std::vector<std::int64_t> base(out_dims.size()), ext(out_dims.size());
    for (std::size_t i = 0; i < out_dims.size(); ++i) {
      auto [l, h] = window(out_dims[i]);
      h = std::min(h, size_of(out_dims[i]));
      base[i] = l;
      ext[i] = std::max<std::int64_t>(0, h - l);
    }
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < out_dims.size(); ++i)
      if (in(row_set, out_dims[i])) perm.push_back(i);
    for (std::size_t i = 0; i < out_dims.size(); ++i)
      if (!in(row_set, out_dims[i])) perm.push_back(i);
    std::vector<std::int64_t> idx(out_dims.size(), 0);
    std::int64_t total = 1;
    for (std::size_t i = 0; i < out_dims.size(); ++i) total *= ext[i];
    for (std::int64_t flat = 0; flat < total; ++flat) {
      std::int64_t off = 0;
      for (std::size_t i = 0; i < out_dims.size(); ++i)
        off += (base[perm[i]] + idx[i]) * c_stride[perm[i]];
      dst[off] += tile.data[flat];
      std::size_t p = out_dims.size();
      while (p > 0) {
        --p;
        if (++idx[p] < ext[perm[p]]) break;
        idx[p] = 0;
      }
    }
  };

  TcuResult res;
  std::int64_t worst_ce_cycles = 0;
  bool k_split = ce_ax == 'k';
  // Per-CE partial results when the contracted axis is split across CEs.
  std::vector<std::vector<double>> partials;
  if (k_split)
    partials.assign(static_cast<std::size_t>(ce_used),
                    std::vector<double>(C.data.size(), 0.0));

  std::vector<std::int64_t> counts;
  for (auto& td : temporal) counts.push_back(td.count);

  for (std::int64_t ce = 0; ce < ce_used; ++ce) {
    lo.clear();
    hi.clear();
    if (m.ce_dim >= 0) {
      lo[m.ce_dim] = ce * ce_chunk;
      hi[m.ce_dim] = std::min(size_of(m.ce_dim), (ce + 1) * ce_chunk);
      if (lo[m.ce_dim] >= hi[m.ce_dim]) continue;
    }
    std::int64_t ce_cycles = 0, tile_no = 0;
    std::int64_t ce_lo = m.ce_dim >= 0 ? lo[m.ce_dim] : 0;
    std::int64_t ce_hi = m.ce_dim >= 0 ? hi[m.ce_dim] : 0;
    for_each_combo(counts, [&](const std::vector<std::int64_t>& idx) {
      // Re-pin the CE window (temporal loop may touch the same dim).
      std::map<DimId, std::int64_t> save_lo = lo, save_hi = hi;
      for (std::size_t i = 0; i < temporal.size(); ++i) {
        const auto& td = temporal[i];
        std::int64_t base = td.d == m.ce_dim ? ce_lo : 0;
        std::int64_t limit = td.d == m.ce_dim ? ce_hi : size_of(td.d);
        lo[td.d] = base + idx[i] * td.chunk;
        hi[td.d] = std::min(limit, lo[td.d] + td.chunk);
      }
      bool empty = false;
      for (auto& [d, l] : lo)
        if (l >= hi.at(d)) empty = true;
      if (!empty) {
        NdArray At = slice2d(A, a_order, m_dims);   // [M_t, K_t]
        NdArray Bt = slice2d(B, b_order, k_dims);   // [K_t, N_t]
        CeTrace tr;
        NdArray Ct = run_ce(mode, At, Bt, hw.ce_rows, hw.ce_cols, &tr,
                            tile_no > 0);
        ce_cycles += tr.cycles;
        res.macs += tr.macs;
        ++tile_no;
        scatter(Ct, m_dims, k_split ? partials[ce] : C.data);
      }
      lo = save_lo;
      hi = save_hi;
    });
    res.tiles += tile_no;
    worst_ce_cycles = std::max(worst_ce_cycles, ce_cycles);
  }

  std::int64_t fabric_cycles = 0;
  if (ce_used > 1) {
    std::int64_t ports = next_pow2(std::min<std::int64_t>(hw.num_ces, 64));
    ports = std::max<std::int64_t>(ports, 2);
    int n = static_cast<int>(ports);
    if (hw.flexible_distribution) {
      // Route and simulate the operand distribution actually needed: the
      // split operand goes unicast, a shared operand is broadcast from its
      // bank.
      fabric::DistributionPattern uni, bcast;
      uni.source.resize(n);
      bcast.source.assign(n, 0);
      for (int i = 0; i < n; ++i) uni.source[i] = i;
      fabric::FabricConfig fc{n, fabric::FabricKind::Distribution};
      for (auto* pat : {&uni, &bcast}) {
        auto cfg = fabric::dist_route(*pat, fc);
        if (!cfg)
          throw hw::UnroutablePattern("distribution pattern not routable");
        std::vector<double> ins(n);
        for (int i = 0; i < n; ++i) ins[i] = i + 1;
        auto outs = fabric::dist_simulate(*cfg, ins);
        for (int i = 0; i < n; ++i)
          if (outs[i] != ins[pat->source[i]])
            throw hw::UnroutablePattern("distribution simulation mismatch");
      }
      fabric_cycles += static_cast<std::int64_t>(std::log2(ports)) + 1;
    }
    if (k_split) {
      // Sum the per-CE partials through the reduction fabric, element by
      // element, with every live CE feeding output port 0's group.
      fabric::ReductionPattern rp;
      rp.groups.resize(1);
      rp.groups[0].dest = 0;
      for (std::int64_t ce = 0; ce < ce_used; ++ce)
        rp.groups[0].inputs.push_back(static_cast<int>(ce));
      fabric::FabricConfig fc{n, fabric::FabricKind::Reduction};
      auto cfg = fabric::red_route(rp, fc);
      if (!cfg) throw hw::UnroutablePattern("reduction pattern not routable");
      for (std::size_t e = 0; e < C.data.size(); ++e) {
        std::vector<double> ins(n, 0.0);
        for (std::int64_t ce = 0; ce < ce_used; ++ce)
          ins[ce] = partials[ce][e];
        auto outs = fabric::red_simulate(*cfg, ins);
        if (outs[0].idle)
          throw hw::UnroutablePattern("reduction produced no value");
        C.data[e] += outs[0].value;
      }
      fabric_cycles += static_cast<std::int64_t>(std::log2(ports)) + 1;
    }
  }

  res.value = std::move(C);
  res.out_dims = out_dims;
  res.cycles = worst_ce_cycles + fabric_cycles;
  return res;
}

}  // namespace tencon::tcu
