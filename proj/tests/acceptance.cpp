// Acceptance checks: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is independent; a thrown exception fails only the
// criterion that raised it.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tencon/butterfly.hpp"
#include "tencon/csse.hpp"
#include "tencon/perf_model.hpp"
#include "tencon/presets.hpp"
#include "tencon/tcu_sim.hpp"
#include "tencon/training.hpp"

using namespace tencon;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(int num, const std::string& what,
               const std::function<std::string()>& body) {
  auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  try {
    detail = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!detail.empty() && detail.rfind("FAIL:", 0) == 0) {
    ok = false;
    detail = detail.substr(5);
  }
  double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("%s criterion %2d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", num,
              what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

FormatSpec toy_spec(Format f) {
  FormatSpec s;
  s.format = f;
  s.batch = 2;
  switch (f) {
    case Format::Dense:
      s.m_dims = {4};
      s.n_dims = {5};
      break;
    case Format::TT:
      s.m_dims = {2, 2};
      s.n_dims = {3, 2};
      s.ranks = {1, 2, 2, 2, 1};
      break;
    case Format::TTM:
      s.m_dims = {2, 3};
      s.n_dims = {3, 2};
      s.ranks = {1, 2, 1};
      break;
    case Format::TR:
      s.m_dims = {2, 2};
      s.n_dims = {2, 2};
      s.ranks = {2, 2, 2, 2, 2};
      break;
    case Format::HT:
      s.m_dims = {2, 2, 2, 2};
      s.n_dims = {2, 2, 2, 2};
      s.ranks = {2, 2, 2, 2, 2, 2};
      break;
    case Format::BT:
      s.m_dims = {2, 2};
      s.n_dims = {2, 2};
      s.ranks = {2, 2};
      s.bt_blocks = 2;
      break;
  }
  return s;
}

std::vector<Format> all_formats() {
  return {Format::Dense, Format::TT,  Format::TTM,
          Format::TR,    Format::HT, Format::BT};
}

// Random layer spec with at most `max_nodes` graph nodes.
FormatSpec random_spec(std::mt19937_64& rng, int max_nodes) {
  std::vector<Format> fmts = {Format::TT, Format::TTM, Format::TR, Format::BT};
  for (;;) {
    FormatSpec s;
    s.format = fmts[rng() % fmts.size()];
    s.batch = 1 + int(rng() % 4);
    int t = 2 + int(rng() % 3);
    auto rnd_dim = [&] { return std::int64_t(1 + rng() % 4); };
    s.m_dims.clear();
    s.n_dims.clear();
    for (int i = 0; i < t; ++i) {
      s.m_dims.push_back(rnd_dim());
      s.n_dims.push_back(rnd_dim());
    }
    switch (s.format) {
      case Format::TT:
        s.ranks.assign(2 * t + 1, std::int64_t(1 + rng() % 3));
        s.ranks.front() = s.ranks.back() = 1;
        break;
      case Format::TTM:
        s.ranks.assign(t + 1, std::int64_t(1 + rng() % 3));
        s.ranks.front() = s.ranks.back() = 1;
        break;
      case Format::TR:
        s.ranks.assign(2 * t + 1, std::int64_t(1 + rng() % 3));
        break;
      case Format::BT:
        s.ranks.assign(t, std::int64_t(1 + rng() % 3));
        s.bt_blocks = 1 + int(rng() % 2);
        break;
      default:
        break;
    }
    auto g = build_format(s);
    if (int(g.nodes.size()) <= max_nodes) return s;
  }
}

std::string fail(const std::string& msg) { return "FAIL:" + msg; }

}  // namespace

// ---------------------------------------------------------------------------

int main() {
  criterion(1, "sequence counting and full enumeration", [] {
    if (search::count_sequences(2) != 1 || search::count_sequences(3) != 3 ||
        search::count_sequences(4) != 18 || search::count_sequences(5) != 180)
      return fail("closed-form counts wrong");
    auto t0 = Clock::now();
    // Graphs with 2, 3, 4 and 5 nodes.
    std::vector<FormatSpec> specs;
    specs.push_back(toy_spec(Format::Dense));
    specs.push_back(toy_spec(Format::TTM));
    {
      FormatSpec s = toy_spec(Format::TTM);
      s.m_dims = {2, 2, 2};
      s.n_dims = {2, 2, 2};
      s.ranks = {1, 2, 2, 1};
      specs.push_back(s);
    }
    specs.push_back(toy_spec(Format::TT));
    for (const auto& s : specs) {
      auto g = build_format(s);
      search::SearchOptions opt;
      opt.prune = false;
      opt.capacity = 1000;
      auto cands = search::stage1_search(g, opt);
      if (cands.size() != search::count_sequences(int(g.nodes.size())))
        return fail("enumeration size mismatch at k=" +
                    std::to_string(g.nodes.size()));
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= 10.0) return fail("took too long");
    return std::string("counts 1/3/18/180 and exhaustive enumeration agree");
  });

  criterion(2, "pruning is lossless on random graphs", [] {
    auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
      auto g = build_format(random_spec(rng, 6));
      search::SearchOptions pr, op;
      pr.prune = true;
      op.prune = false;
      auto a = search::stage1_search(g, pr);
      auto b = search::stage1_search(g, op);
      if (a.size() != b.size()) return fail("list sizes differ");
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].macs != b[i].macs) return fail("retained costs differ");
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= 60.0) return fail("took too long");
    return std::string("50 random graphs: pruned lists identical");
  });

  criterion(3, "search dominates the restricted and fixed baselines", [] {
    bool strict_tr = false;
    for (std::string p : {"table2_dense", "table2_tt", "table2_ttm",
                          "table2_tr", "table2_ht", "table2_bt"}) {
      auto g = build_format(bench::load_workload(p)[0].spec);
      search::SearchOptions full, xr;
      xr.space = search::SearchSpace::XRooted;
      auto bf = search::stage1_search(g, full);
      auto bx = search::stage1_search(g, xr);
      auto asc = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
      auto am = sequence_totals(g, asc).total_macs;
      if (!(bf[0].macs <= bx[0].macs && bx[0].macs <= am))
        return fail("dominance violated on " + p);
      if (p == "table2_tr" && bf[0].macs < bx[0].macs) strict_tr = true;
    }
    if (!strict_tr) return fail("no strict improvement on the ring preset");
    return std::string("best <= restricted <= ascending on all presets, "
                       "strict on the tensor-ring preset");
  });

  criterion(4, "fixed-scheme ordering on the large preset", [] {
    auto g = build_format(bench::load_workload("fig5_tt")[0].spec);
    auto asc = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
    auto rec = search::fixed_sequence(g, search::FixedKind::Reconstruct);
    auto ca = sequence_totals(g, asc);
    auto cr = sequence_totals(g, rec);
    StepCost last{};
    TensorGraph work = g;
    for (const auto& st : rec.steps)
      contract_pair_inplace(work, st.left, st.right, &last);
    if (last.macs != 128LL * 768 * 768)
      return fail("rebuild-path final GEMM is " + std::to_string(last.macs));
    if (!(ca.total_macs < cr.total_macs))
      return fail("fold-through scheme does not beat the rebuild scheme");
    auto best = search::stage1_search(g, {});
    if (!(best[0].macs <= ca.total_macs))
      return fail("searched best worse than the fixed baseline");
    return std::string("fold=" + std::to_string(ca.total_macs) +
                       " < rebuild=" + std::to_string(cr.total_macs) +
                       ", final GEMM 75497472, best <= fold");
  });

  criterion(5, "gradient correctness across formats", [] {
    auto t0 = Clock::now();
    double worst = 0;
    for (Format f : all_formats()) {
      auto g = build_format(toy_spec(f));
      auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
      auto w = expand_training(g, seq);
      double err = gradient_check(g, w, random_values(g, 31 + int(f)));
      worst = std::max(worst, err);
      if (err >= 1e-4) return fail("gradient error " + std::to_string(err));
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= 60.0) return fail("took too long");
    char buf[64];
    std::snprintf(buf, sizeof buf, "max relative error %.2e", worst);
    return std::string(buf);
  });

  criterion(6, "contraction order invariance", [] {
    std::mt19937_64 rng(6);
    for (Format f : all_formats()) {
      auto g = build_format(toy_spec(f));
      search::SearchOptions opt;
      opt.prune = false;
      opt.capacity = 2000;
      auto cands = search::stage1_search(g, opt);
      std::map<NodeId, NdArray> values;
      for (auto& [id, n] : g.nodes) {
        std::vector<std::int64_t> sh;
        for (DimId d : n.dims) sh.push_back(g.dim_size(d));
        values[id] = NdArray::random(sh, rng(), /*integer=*/true);
      }
      auto ref = evaluate_numeric(g, cands[0].seq, values);
      for (int pair = 0; pair < 20; ++pair) {
        const auto& s = cands[rng() % cands.size()].seq;
        auto r = evaluate_numeric(g, s, values);
        if (r.shape != ref.shape) return fail("shape mismatch");
        for (std::int64_t i = 0; i < r.elems(); ++i) {
          double denom = std::max(1.0, std::abs(ref.data[i]));
          if (std::abs(r.data[i] - ref.data[i]) / denom > 1e-6)
            return fail("value deviates beyond 1e-6");
        }
      }
    }
    return std::string("20 random sequence pairs per format agree");
  });

  criterion(7, "six-mode engine equivalence and exact tile cycles", [] {
    std::mt19937_64 rng(7);
    auto modes = tcu::all_ce_modes();
    for (int trial = 0; trial < 100; ++trial) {
      std::int64_t M = 1 + rng() % 4, N = 1 + rng() % 4, K = 1 + rng() % 4;
      auto a = NdArray::random({M, K}, rng(), true);
      auto b = NdArray::random({K, N}, rng(), true);
      NdArray want;
      bool first = true;
      for (const auto& mode : modes) {
        auto got = tcu::run_ce(mode, a, b, 4, 4);
        if (first) {
          want = got;
          first = false;
        } else if (got.data != want.data) {
          return fail("mode results differ");
        }
      }
    }
    for (const auto& mode : modes)
      for (std::int64_t rows = 1; rows <= 4; ++rows)
        for (std::int64_t cols = 1; cols <= 4; ++cols)
          for (std::int64_t L = 1; L <= 16; ++L)
            for (bool hidden : {false, true}) {
              if (mode.st == hw::Stationarity::OS && hidden) continue;
              std::int64_t M, N, K;
              if (mode.st == hw::Stationarity::WS) {
                K = rows; N = cols; M = L;
              } else if (mode.st == hw::Stationarity::IS) {
                K = rows; M = cols; N = L;
              } else {
                K = L;
                if (mode.swap_operands) { N = rows; M = cols; }
                else { M = rows; N = cols; }
              }
              tcu::CeTrace tr;
              tcu::run_ce(mode, NdArray::ones({M, K}), NdArray::ones({K, N}),
                          4, 4, &tr, hidden);
              if (tr.cycles !=
                  tcu::ce_tile_cycles(mode.st, rows, cols, L, hidden))
                return fail("closed form deviates for " + mode.name());
            }
    return std::string("100 random tiles identical; closed form exact to "
                       "stream length 16");
  });

  criterion(8, "butterfly routability and control law", [] {
    using namespace tencon::fabric;
    // Every realizable source map at N=8, by exhausting all control settings.
    const int N = 8;
    FabricConfig cfg{N, FabricKind::Distribution};
    std::vector<bool> realizable(1u << 24, false);
    std::vector<double> in(N);
    for (int i = 0; i < N; ++i) in[i] = i;
    MuxConfig c;
    c.stage_bits.assign(3, std::vector<std::uint8_t>(N));
    for (int transpose = 0; transpose < 2; ++transpose) {
      c.transpose = transpose != 0;
      for (std::uint32_t bits = 0; bits < (1u << 24); ++bits) {
        for (int s = 0; s < 3; ++s)
          for (int w = 0; w < N; ++w)
            c.stage_bits[s][w] = (bits >> (s * 8 + w)) & 1;
        auto out = dist_simulate(c, in);
        std::uint32_t key = 0;
        for (int o = 0; o < N; ++o) key |= std::uint32_t(out[o]) << (3 * o);
        realizable[key] = true;
      }
    }
    auto key_of = [&](const std::vector<int>& src) {
      std::uint32_t k = 0;
      for (int o = 0; o < N; ++o) k |= std::uint32_t(src[o]) << (3 * o);
      return k;
    };
    // All permutations plus random multicasts must agree with dist_route.
    std::vector<int> perm = {0, 1, 2, 3, 4, 5, 6, 7};
    long routable = 0, total = 0;
    do {
      DistributionPattern p{perm};
      bool want = realizable[key_of(perm)];
      auto r = dist_route(p, cfg);
      if (r.has_value() != want) return fail("permutation disagreement");
      if (r) ++routable;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::mt19937_64 rng(8);
    for (int t = 0; t < 60000; ++t) {
      std::vector<int> src(N);
      for (auto& s : src) s = int(rng() % N);
      DistributionPattern p{src};
      auto r = dist_route(p, cfg);
      if (r.has_value() != realizable[key_of(src)])
        return fail("multicast disagreement");
      if (r) {
        auto out = dist_simulate(*r, in);
        for (int o = 0; o < N; ++o)
          if (int(out[o]) != src[o]) return fail("routed config wrong");
      }
    }
    if (routable == 0 || routable == total)
      return fail("permutation routability is degenerate");
    // 200 routable round trips at N=16.
    FabricConfig big{16, FabricKind::Distribution};
    std::vector<double> in16(16);
    for (int i = 0; i < 16; ++i) in16[i] = i;
    for (int t = 0; t < 200; ++t) {
      MuxConfig rc;
      rc.transpose = rng() & 1;
      rc.stage_bits.assign(4, std::vector<std::uint8_t>(16));
      for (auto& st : rc.stage_bits)
        for (auto& bit : st) bit = rng() & 1;
      auto out = dist_simulate(rc, in16);
      DistributionPattern p;
      for (double v : out) p.source.push_back(int(v));
      auto routed = dist_route(p, big);
      if (!routed) return fail("realizable N=16 pattern not routed");
      auto back = dist_simulate(*routed, in16);
      if (back != out) return fail("N=16 round trip mismatch");
    }
    // XOR control law at N=8 for every (bank, sel).
    for (int bank = 0; bank < N; ++bank)
      for (int sel = 0; sel < N; ++sel) {
        auto mc = mux_config_from_signals(control_signals(bank, sel, N), N);
        auto out = dist_simulate(mc, in);
        for (int p = 0; p < N; ++p)
          if (int(out[p]) != (p ^ bank ^ sel))
            return fail("control law mismatch");
      }
    return std::string("route == brute force at N=8 (" +
                       std::to_string(routable) +
                       "/40320 permutations routable), 200 N=16 round "
                       "trips, control law exact");
  });

  criterion(9, "multi-engine unit matches the exact contraction", [] {
    std::mt19937_64 rng(9);
    std::vector<hw::HardwareConfig> hws = {hw::preset_fetta(),
                                           hw::preset_sigma_like()};
    int checked = 0;
    for (std::string p : {"table2_tt", "table2_ttm", "table2_tr", "fig6_ttm",
                          "table2_ht", "table2_bt", "table2_dense"}) {
      auto g = build_format(bench::load_workload(p)[0].spec);
      auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
      auto w = expand_training(g, seq);
      for (const auto& op : w.ops) {
        const auto& cfg = hws[rng() % hws.size()];
        auto maps = perf::enumerate_mappings(op, w, cfg);
        const auto& m = maps[rng() % maps.size()];
        auto dims_of = [&](int tid) { return w.tensors[tid].dims; };
        auto shape_of = [&](int tid) {
          std::vector<std::int64_t> sh;
          for (DimId d : dims_of(tid)) sh.push_back(w.dim_table.at(d).size);
          return sh;
        };
        tcu::TcuOperand a{NdArray::random(shape_of(op.operand_a), rng(), true),
                          dims_of(op.operand_a)};
        tcu::TcuOperand b{NdArray::random(shape_of(op.operand_b), rng(), true),
                          dims_of(op.operand_b)};
        auto res = tcu::run_tcu(a, b, w.dim_table, m, cfg);
        std::vector<DimId> od;
        auto want =
            contract_arrays(a.value, a.dims, b.value, b.dims, w.dim_table, &od);
        auto got = transpose_to(res.value, res.out_dims, od);
        if (got.data != want.data) return fail("numeric mismatch on " + p);
        ++checked;
        if (checked >= 50) break;
      }
      if (checked >= 50) break;
    }
    if (checked < 50) return fail("fewer than 50 mappings checked");
    return std::string("50 random legal mappings exact");
  });

  // Criteria 10 and 11 share the rigid-vs-flexible evaluation of the
  // two-core preset; compute it once.
  struct SharedEval {
    double tpu_fp_util = 0, fet_fp_util = 0;
    double tpu_fp_edp = 0, fet_fp_edp = 0;
    double tpu_tr_edp = 0, fet_tr_edp = 0;
    std::int64_t tpu_tr_events = 0;
    double fet_tr_bytes = 0;
  } sh;
  bool shared_ok = true;
  try {
    auto g = build_format(bench::load_workload("fig6_ttm")[0].spec);
    auto tpu = hw::preset_tpu_like();
    auto fet = hw::preset_fetta();
    auto best = search::search_best(g, tpu, search::EvalMode::Training, "edp");
    auto w = expand_training(g, best.seq);
    auto fw = forward_workload(g, best.seq);
    auto fp_tpu = perf::evaluate_workload(fw, tpu).total;
    auto fp_fet = perf::evaluate_workload(fw, fet).total;
    auto tr_tpu = perf::evaluate_workload(w, tpu).total;
    auto tr_fet = perf::evaluate_workload(w, fet).total;
    sh = {fp_tpu.utilization, fp_fet.utilization, fp_tpu.edp, fp_fet.edp,
          tr_tpu.edp,         tr_fet.edp,         tr_tpu.reorder_events,
          tr_fet.reorder_dram_bytes};
  } catch (...) {
    shared_ok = false;
  }

  criterion(10, "rigid array under-utilization", [&] {
    if (!shared_ok) return fail("shared evaluation failed");
    char buf[128];
    std::snprintf(buf, sizeof buf, "rigid FP util %.3f, flexible %.3f",
                  sh.tpu_fp_util, sh.fet_fp_util);
    if (!(sh.tpu_fp_util < 0.5)) return fail(buf);
    if (!(sh.fet_fp_util > sh.tpu_fp_util)) return fail(buf);
    if (!(sh.fet_fp_edp < sh.tpu_fp_edp)) return fail("flexible EDP not lower");
    if (!(sh.fet_tr_edp < sh.tpu_tr_edp))
      return fail("flexible training EDP not lower");
    return std::string(buf);
  });

  criterion(11, "layout reorder accounting", [&] {
    if (!shared_ok) return fail("shared evaluation failed");
    if (sh.tpu_tr_events != 5)
      return fail("rigid training reorder events = " +
                  std::to_string(sh.tpu_tr_events));
    if (sh.fet_tr_bytes != 0)
      return fail("flexible reorder DRAM traffic nonzero");
    return std::string("rigid training needs 5 reorders; flexible absorbs "
                       "all of them");
  });

  criterion(12, "flexibility flags are monotone in optimal EDP", [] {
    auto base = hw::preset_tpu_like();
    for (const auto& p : bench::workload_preset_names()) {
      if (p == "fig5_tt") continue;  // large preset checked via criterion 13
      auto layer = bench::load_workload(p)[0];
      auto g = build_format(layer.spec);
      auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
      auto w = layer.mode == search::EvalMode::Training
                   ? expand_training(g, seq)
                   : forward_workload(g, seq);
      auto mk = [&](int bits) {
        auto h = base;
        h.transposable_ce = bits & 1;
        h.flexible_distribution = bits & 2;
        h.flexible_reduction = bits & 4;
        if (bits & 8) {
          h.dataflow_modes.insert(hw::Stationarity::IS);
          h.dataflow_modes.insert(hw::Stationarity::OS);
        }
        return h;
      };
      std::vector<double> edp(16);
      for (int bits = 0; bits < 16; ++bits)
        edp[bits] = perf::evaluate_workload(w, mk(bits)).total.edp;
      for (int bits = 0; bits < 16; ++bits)
        for (int f = 0; f < 4; ++f)
          if (!(bits & (1 << f)) && edp[bits | (1 << f)] > edp[bits] + 1e-9)
            return fail("flag " + std::to_string(f) + " hurt preset " + p);
    }
    return std::string("all single-flag enables kept or improved EDP over "
                       "the 16-node lattice");
  });

  criterion(13, "hardware-aware reranking never loses to the flop count", [] {
    auto fet = hw::preset_fetta();
    bool strict = false;
    for (const auto& p : bench::workload_preset_names()) {
      auto layer = bench::load_workload(p)[0];
      auto g = build_format(layer.spec);
      auto mode = layer.mode;
      auto by_model = search::search_best(g, fet, mode, "edp");
      auto by_flops = search::search_best(g, fet, mode, "flops");
      auto eval = [&](const ContractionSequence& s) {
        auto w = mode == search::EvalMode::Training ? expand_training(g, s)
                                                    : forward_workload(g, s);
        return perf::evaluate_workload(w, fet).total.edp;
      };
      double em = eval(by_model.seq), ef = eval(by_flops.seq);
      if (em > ef + 1e-9) return fail("model choice lost on " + p);
      if (em < ef - 1e-9) strict = true;
    }
    return std::string(strict ? "model choice <= flop choice on every "
                                "preset, strictly better on at least one"
                              : "model choice <= flop choice on every preset");
  });

  std::printf("%s\n", g_failures ? "ACCEPTANCE: FAIL" : "ACCEPTANCE: PASS");
  return g_failures ? 1 : 0;
}
