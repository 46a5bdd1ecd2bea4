// Command-line front end: contraction-sequence search, hardware evaluation,
// report comparison, and the self-check suite.
//
// Exit codes: 0 success, 1 bad command line, 2 input parse error,
// 3 evaluation error.

#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tencon/csse.hpp"
#include "tencon/perf_model.hpp"
#include "tencon/presets.hpp"
#include "tencon/training.hpp"
#include "tencon/validate.hpp"

using nlohmann::ordered_json;
using namespace tencon;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitEval = 3;

struct MismatchedLayers : GraphError { using GraphError::GraphError; };

ordered_json seq_json(const ContractionSequence& seq) {
  ordered_json a = ordered_json::array();
  for (const auto& s : seq.steps)
    a.push_back(ordered_json::array({s.left, s.right, s.result}));
  return a;
}

ordered_json cost_json(const SequenceCost& c) {
  ordered_json j;
  j["total_macs"] = c.total_macs;
  j["total_access_elems"] = c.total_access_elems;
  j["arithmetic_intensity"] = c.arithmetic_intensity;
  j["peak_live_elems"] = c.peak_live_elems;
  j["block_sum_adds"] = c.block_sum_adds;
  return j;
}

ordered_json perf_json(const hw::PerfReport& r) {
  ordered_json j;
  j["cycles"] = r.cycles;
  j["energy"] = r.energy;
  j["edp"] = r.edp;
  j["utilization"] = r.utilization;
  j["macs"] = r.macs;
  j["reorder_events"] = r.reorder_events;
  j["reorder_dram_bytes"] = r.reorder_dram_bytes;
  ordered_json t;
  for (const auto& [k, v] : r.traffic) t[k] = v;
  j["traffic"] = t;
  return j;
}

std::int64_t param_count(const TensorGraph& g) {
  std::int64_t p = 0;
  for (const auto& [id, n] : g.nodes)
    if (n.kind == NodeKind::WeightCore || n.kind == NodeKind::TransferCore)
      p += g.node_elems(id);
  return p;
}

struct RunFlags {
  std::string workload, hardware = "fetta", metric = "edp", mode, out;
  int candidates = 64;
  bool no_prune = false;
  bool fixed_only = false;  // `evaluate`: skip the search, score the baseline
};

ordered_json evaluate_entry(const TensorGraph& g, const ContractionSequence& seq,
                            const hw::HardwareConfig& cfg,
                            search::EvalMode mode, const std::string& metric) {
  ordered_json j;
  j["sequence"] = seq_json(seq);
  j["cost"] = cost_json(sequence_totals(g, seq));
  TrainingWorkload w = mode == search::EvalMode::Training
                           ? expand_training(g, seq)
                           : forward_workload(g, seq);
  auto ev = perf::evaluate_workload(w, cfg);
  j["perf"] = perf_json(ev.total);
  j["metric"] = perf::metric_value(ev.total, cfg, metric);
  return j;
}

ordered_json run_layer(const bench::LayerSpec& layer,
                       const hw::HardwareConfig& cfg, const RunFlags& fl) {
  search::EvalMode mode = layer.mode;
  if (fl.mode == "training") mode = search::EvalMode::Training;
  if (fl.mode == "inference") mode = search::EvalMode::Inference;

  TensorGraph g = build_format(layer.spec);
  ordered_json lj;
  lj["name"] = layer.name;
  lj["mode"] = mode == search::EvalMode::Training ? "training" : "inference";
  lj["params"] = param_count(g);

  search::SearchOptions opt;
  opt.capacity = fl.candidates;
  opt.prune = !fl.no_prune;

  ContractionSequence best_seq;
  if (fl.fixed_only) {
    best_seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  } else {
    auto cands = search::stage1_search(g, opt);
    auto ranked = search::stage2_rerank(g, cands, cfg, mode, fl.metric);
    best_seq = ranked.front().seq;
  }
  lj["best"] = evaluate_entry(g, best_seq, cfg, mode, fl.metric);

  ordered_json bj;
  for (auto [kind, name] :
       {std::pair{search::FixedKind::AscendingIndex, "fixed_ascending"},
        std::pair{search::FixedKind::Reconstruct, "fixed_reconstruct"}}) {
    auto seq = search::fixed_sequence(g, kind);
    bj[name] = evaluate_entry(g, seq, cfg, mode, fl.metric);
  }
  {
    search::SearchOptions ropt = opt;
    ropt.space = search::SearchSpace::XRooted;
    auto cands = search::stage1_search(g, ropt);
    if (!cands.empty()) {
      auto ranked = search::stage2_rerank(g, cands, cfg, mode, fl.metric);
      bj["restricted"] = evaluate_entry(g, ranked.front().seq, cfg, mode,
                                        fl.metric);
    }
  }
  lj["baselines"] = bj;
  return lj;
}

ordered_json run_workload_file(const RunFlags& fl) {
  auto layers = bench::load_workload(fl.workload);
  hw::HardwareConfig cfg = bench::load_hardware(fl.hardware);
  ordered_json rep;
  rep["hardware"] = cfg.name;
  rep["metric"] = fl.metric;
  rep["layers"] = ordered_json::array();
  std::vector<std::future<ordered_json>> futs;
  futs.reserve(layers.size());
  for (const auto& l : layers)
    futs.push_back(std::async(std::launch::async,
                              [&, l] { return run_layer(l, cfg, fl); }));
  for (auto& f : futs) rep["layers"].push_back(f.get());
  return rep;
}

void emit(const ordered_json& j, const std::string& out) {
  std::string text = j.dump(2);
  text += "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream o(out);
    if (!o) throw GraphError("cannot write: " + out);
    o << text;
  }
}

ordered_json load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bench::ParseError("cannot open report: " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw bench::ParseError(std::string("report JSON: ") + e.what());
  }
}

int run_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<ordered_json> reps;
  for (const auto& p : paths) reps.push_back(load_report(p));
  const ordered_json& base = reps.front();
  auto layer_names = [](const ordered_json& r) {
    std::vector<std::string> v;
    for (const auto& l : r.at("layers")) v.push_back(l.at("name"));
    return v;
  };
  auto names = layer_names(base);
  for (const auto& r : reps)
    if (layer_names(r) != names)
      throw MismatchedLayers("reports do not share layer names");

  auto field = [](const ordered_json& l, const char* grp, const char* key) {
    return l.at("best").at(grp).at(key).get<double>();
  };
  std::ostringstream csv;
  csv << "layer,report,flops_ratio,access_ratio,arith_intensity,"
         "latency_ratio,energy_ratio,params_ratio\n";
  ordered_json plot;
  plot["series"] = ordered_json::array();
  std::map<std::string, std::vector<double>> series;
  for (std::size_t li = 0; li < names.size(); ++li) {
    const auto& bl = base.at("layers")[li];
    for (std::size_t ri = 0; ri < reps.size(); ++ri) {
      const auto& l = reps[ri].at("layers")[li];
      double flops = field(bl, "cost", "total_macs") /
                     field(l, "cost", "total_macs");
      double access = field(bl, "cost", "total_access_elems") /
                      field(l, "cost", "total_access_elems");
      double ai = field(l, "cost", "arithmetic_intensity");
      double lat = field(bl, "perf", "cycles") / field(l, "perf", "cycles");
      double en = field(bl, "perf", "energy") / field(l, "perf", "energy");
      double pr = bl.at("params").get<double>() / l.at("params").get<double>();
      csv << names[li] << "," << reps[ri].at("hardware").get<std::string>()
          << "#" << ri << "," << flops << "," << access << "," << ai << ","
          << lat << "," << en << "," << pr << "\n";
      std::string tag = "report" + std::to_string(ri);
      series[tag + ":flops_ratio"].push_back(flops);
      series[tag + ":access_ratio"].push_back(access);
      series[tag + ":arith_intensity"].push_back(ai);
      series[tag + ":latency_ratio"].push_back(lat);
      series[tag + ":energy_ratio"].push_back(en);
      series[tag + ":params_ratio"].push_back(pr);
    }
  }
  ordered_json xs = ordered_json::array();
  for (const auto& n : names) xs.push_back(n);
  for (const auto& [k, v] : series) {
    ordered_json s;
    s["name"] = k;
    s["x"] = xs;
    s["y"] = v;
    plot["series"].push_back(s);
  }
  if (out.empty() || out == "-") {
    std::cout << csv.str();
  } else {
    std::ofstream c(out + ".csv");
    if (!c) throw GraphError("cannot write: " + out + ".csv");
    c << csv.str();
    emit(plot, out + "_plot.json");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tensor-contraction sequence search and accelerator model"};
  app.require_subcommand(1);

  RunFlags fl;
  std::vector<std::string> compare_paths;
  std::string report_in, report_out;
  std::uint64_t seed = 1;
  std::string inject;

  auto add_run_flags = [&](CLI::App* c, bool with_search) {
    c->add_option("--workload", fl.workload, "workload preset name or JSON path")
        ->required();
    c->add_option("--hardware", fl.hardware,
                  "hardware preset name or JSON path");
    c->add_option("--metric", fl.metric, "flops|latency|energy|edp")
        ->check(CLI::IsMember({"flops", "latency", "energy", "edp"}));
    c->add_option("--mode", fl.mode, "override layer mode: inference|training")
        ->check(CLI::IsMember({"inference", "training"}));
    c->add_option("--out", fl.out, "output path (default stdout)");
    if (with_search) {
      c->add_option("--candidates", fl.candidates,
                    "stage-1 survivors handed to stage 2");
      c->add_flag("--no-prune", fl.no_prune, "disable stage-1 pruning");
    }
  };

  CLI::App* search_cmd = app.add_subcommand("search", "two-stage sequence search");
  add_run_flags(search_cmd, true);
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "score the fixed baseline sequence");
  add_run_flags(eval_cmd, false);

  CLI::App* cmp_cmd = app.add_subcommand("compare", "ratio tables across reports");
  cmp_cmd->add_option("reports", compare_paths, "report JSON files")
      ->required()
      ->expected(-1);
  std::string cmp_out;
  cmp_cmd->add_option("--out", cmp_out, "prefix for .csv and _plot.json");

  CLI::App* val_cmd = app.add_subcommand("validate", "run the oracle suites");
  val_cmd->add_option("--seed", seed, "base RNG seed");
  val_cmd->add_option("--inject-fault", inject,
                      "test hook: force the named property to fail");

  CLI::App* rep_cmd =
      app.add_subcommand("report", "round-trip and summarize a report file");
  rep_cmd->add_option("--in", report_in, "report JSON")->required();
  rep_cmd->add_option("--out", report_out, "re-serialized copy");

  CLI11_PARSE(app, argc, argv);

  try {
    if (search_cmd->parsed() || eval_cmd->parsed()) {
      fl.fixed_only = eval_cmd->parsed();
      emit(run_workload_file(fl), fl.out);
      return 0;
    }
    if (cmp_cmd->parsed()) return run_compare(compare_paths, cmp_out);
    if (val_cmd->parsed()) {
      validate::Options opt;
      opt.seed = seed;
      opt.inject_fault = inject;
      bool all = true;
      for (const auto& r : validate::run_all(opt)) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail
                  << "\n";
        all = all && r.pass;
      }
      return all ? 0 : kExitEval;
    }
    if (rep_cmd->parsed()) {
      ordered_json j = load_report(report_in);
      if (!report_out.empty()) emit(j, report_out);
      std::cout << "layers: " << j.at("layers").size()
                << ", hardware: " << j.value("hardware", std::string("?"))
                << "\n";
      return 0;
    }
  } catch (const bench::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const GraphError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return kExitEval;
  }
  return 1;
}
