#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "tencon/csse.hpp"
#include "tencon/perf_model.hpp"
#include "tencon/presets.hpp"
#include "tencon/training.hpp"

using namespace tencon;
using hw::HardwareConfig;
using hw::Stationarity;

namespace {

TrainingWorkload dense_forward() {
  FormatSpec s;
  s.format = Format::Dense;
  s.batch = 16;
  s.m_dims = {32};
  s.n_dims = {32};
  auto g = build_format(s);
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  return forward_workload(g, seq);
}

TrainingWorkload ttm_training() {
  auto layers = bench::load_workload("fig6_ttm");
  auto g = build_format(layers[0].spec);
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  return expand_training(g, seq);
}

}  // namespace

TEST_CASE("built-in presets") {
  auto names = hw::hardware_preset_names();
  for (const char* n : {"fetta", "tpu-like", "treta-like", "sigma-like"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());

  auto fet = hw::hardware_preset("fetta");
  CHECK(fet.num_ces == 16);
  CHECK(fet.ce_rows == 4);
  CHECK(fet.transposable_ce);
  CHECK(fet.flexible_distribution);
  CHECK(fet.flexible_reduction);
  CHECK(fet.dataflow_modes.size() == 3);

  auto tpu = hw::hardware_preset("tpu-like");
  CHECK(tpu.num_ces == 1);
  CHECK(tpu.ce_rows == 16);
  CHECK_FALSE(tpu.transposable_ce);
  CHECK(tpu.dataflow_modes == std::set<Stationarity>{Stationarity::WS});

  auto treta = hw::hardware_preset("treta-like");
  CHECK(treta.dataflow_modes ==
        std::set<Stationarity>{Stationarity::WS, Stationarity::OS});
  CHECK_FALSE(treta.flexible_distribution);

  auto sigma = hw::hardware_preset("sigma-like");
  CHECK(sigma.flexible_distribution);
  CHECK(sigma.flexible_reduction);
  CHECK_FALSE(sigma.transposable_ce);

  // All presets expose the same MAC budget.
  for (const auto& n : names) CHECK(hw::hardware_preset(n).total_macs() == 256);

  CHECK_THROWS(hw::hardware_preset("nonsense"));
}

TEST_CASE("mapping enumeration respects the hardware flags") {
  auto w = ttm_training();
  auto tpu = hw::preset_tpu_like();
  auto fet = hw::preset_fetta();

  auto in_k = [&](const ContractionOp& op, DimId d) {
    if (d < 0) return false;
    const auto& bd = w.tensors[op.operand_b].dims;
    const auto& ad = w.tensors[op.operand_a].dims;
    return std::count(ad.begin(), ad.end(), d) &&
           std::count(bd.begin(), bd.end(), d);
  };

  bool saw_k_split_fet = false;
  for (const auto& op : w.ops) {
    for (const auto& m : perf::enumerate_mappings(op, w, tpu)) {
      CHECK(m.st == Stationarity::WS);
      CHECK_FALSE(in_k(op, m.ce_dim));  // no reduction fabric: no k-splits
      CHECK(m.row_extent <= tpu.ce_rows);
      CHECK(m.col_extent <= tpu.ce_cols);
    }
    for (const auto& m : perf::enumerate_mappings(op, w, fet))
      if (in_k(op, m.ce_dim)) saw_k_split_fet = true;
  }
  CHECK(saw_k_split_fet);  // the reduction fabric unlocks contracted splits

  // Forward ops hold the weight on a weight-stationary array.
  for (const auto& op : w.ops) {
    if (op.phase != Phase::FP) continue;
    for (const auto& m : perf::enumerate_mappings(op, w, tpu))
      CHECK(m.stationary_is_b);  // operand b is the core in forward ops
  }
  // Weight-gradient ops pair two activations: both bindings are legal.
  bool saw_a = false, saw_b = false;
  for (const auto& op : w.ops) {
    if (op.phase != Phase::WG) continue;
    for (const auto& m : perf::enumerate_mappings(op, w, tpu))
      (m.stationary_is_b ? saw_b : saw_a) = true;
  }
  CHECK(saw_a);
  CHECK(saw_b);
}

TEST_CASE("single GEMM needs no reorders and picks the best mapping") {
  auto w = dense_forward();
  auto fet = hw::preset_fetta();
  auto ev = perf::evaluate_workload(w, fet);
  CHECK(ev.total.reorder_events == 0);
  CHECK(ev.total.reorder_dram_bytes == 0);

  double best = 1e300;
  for (const auto& m : perf::enumerate_mappings(w.ops[0], w, fet)) {
    auto r = perf::evaluate_mapping(w.ops[0], w, m, fet);
    best = std::min(best, r.cycles * r.energy);
  }
  CHECK(ev.total.cycles * ev.total.energy == doctest::Approx(best));
}

TEST_CASE("reorder cost is a DRAM round trip") {
  auto tpu = hw::preset_tpu_like();
  auto r = perf::layout_reorder_cost(256, tpu);  // a 16x16 tile
  CHECK(r.reorder_events == 1);
  CHECK(r.reorder_dram_bytes == 2.0 * 256 * tpu.elem_bytes);
  CHECK(r.traffic.at("dram") == 512);
  CHECK(r.energy > 0);
}

TEST_CASE("mapping evaluation obeys roofline bounds") {
  auto w = ttm_training();
  auto fet = hw::preset_fetta();
  for (const auto& op : w.ops) {
    for (const auto& m : perf::enumerate_mappings(op, w, fet)) {
      auto r = perf::evaluate_mapping(op, w, m, fet);
      CHECK(r.utilization <= 1.0 + 1e-12);
      CHECK(r.cycles >= double(r.macs) / fet.total_macs() - 1e-9);
      CHECK(r.cycles >= r.traffic.at("dram") * fet.elem_bytes /
                            fet.dram_bytes_per_cycle() -
                        1e-9);
      CHECK(r.edp == doctest::Approx(r.cycles / fet.frequency_hz * r.energy));
    }
  }
}

TEST_CASE("flexibility never hurts on the workload model") {
  auto w = ttm_training();
  auto tpu = hw::preset_tpu_like();
  auto rigid = perf::evaluate_workload(w, tpu).total;

  auto trans = tpu;
  trans.transposable_ce = true;
  CHECK(perf::evaluate_workload(w, trans).total.edp <= rigid.edp + 1e-9);

  auto fet = hw::preset_fetta();
  CHECK(perf::evaluate_workload(w, fet).total.edp <= rigid.edp + 1e-9);
}

TEST_CASE("metric selector") {
  hw::PerfReport r;
  r.macs = 100;
  r.cycles = 2e9;
  r.energy = 50;
  auto fet = hw::preset_fetta();
  r.finalize(fet);
  CHECK(perf::metric_value(r, fet, "flops") == 100);
  CHECK(perf::metric_value(r, fet, "latency") == doctest::Approx(2.0));
  CHECK(perf::metric_value(r, fet, "energy") == 50);
  CHECK(perf::metric_value(r, fet, "edp") == doctest::Approx(100.0));
  CHECK_THROWS(perf::metric_value(r, fet, "bogus"));
}

TEST_CASE("hardware JSON accepts a base preset plus overrides") {
  auto h = bench::parse_hardware_json(
      R"({"base": "tpu-like", "transposable_ce": true, "elem_bytes": 4})");
  CHECK(h.num_ces == 1);
  CHECK(h.transposable_ce);
  CHECK(h.elem_bytes == 4);
  CHECK_THROWS_AS(bench::parse_hardware_json("{nope"), bench::ParseError);
}

TEST_CASE("workload presets parse and the directory override works") {
  for (const auto& name : bench::workload_preset_names()) {
    auto layers = bench::load_workload(name);
    REQUIRE_FALSE(layers.empty());
    auto g = build_format(layers[0].spec);
    CHECK(g.nodes.size() >= 2);
  }

  // A custom directory supplied through the environment wins.
  std::string dir = "/tmp/tencon_preset_test";
  if (std::system(("mkdir -p " + dir).c_str()) != 0)
    FAIL("could not create temp preset dir");
  {
    std::ofstream f(dir + "/minimal.json");
    f << R"({"layers":[{"name":"minimal","format":"dense","mode":"inference",
             "batch":2,"m_dims":[4],"n_dims":[4]}]})";
  }
  setenv("TENCON_PRESET_DIR", dir.c_str(), 1);
  CHECK(bench::preset_dir() == dir);
  auto layers = bench::load_workload("minimal");
  CHECK(layers[0].spec.batch == 2);
  CHECK(layers[0].mode == search::EvalMode::Inference);
  unsetenv("TENCON_PRESET_DIR");
  CHECK_THROWS_AS(bench::load_workload("minimal"), bench::ParseError);
}
