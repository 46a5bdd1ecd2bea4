#include "tencon/presets.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifndef TENCON_DEFAULT_PRESET_DIR
#define TENCON_DEFAULT_PRESET_DIR "presets"
#endif

namespace tencon::bench {

using nlohmann::ordered_json;

std::string preset_dir() {
  if (const char* env = std::getenv("TENCON_PRESET_DIR"); env && *env)
    return env;
  return TENCON_DEFAULT_PRESET_DIR;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Format parse_format(const std::string& s) {
  if (s == "dense") return Format::Dense;
  if (s == "tt") return Format::TT;
  if (s == "ttm") return Format::TTM;
  if (s == "tr") return Format::TR;
  if (s == "ht") return Format::HT;
  if (s == "bt") return Format::BT;
  throw ParseError("unknown format: " + s);
}

std::vector<std::int64_t> int_list(const ordered_json& j, const char* key) {
  std::vector<std::int64_t> v;
  if (!j.contains(key)) return v;
  for (const auto& e : j.at(key)) v.push_back(e.get<std::int64_t>());
  return v;
}

}  // namespace

std::vector<LayerSpec> parse_workload_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("workload JSON: ") + e.what());
  }
  std::vector<LayerSpec> layers;
  if (!j.contains("layers"))
    throw ParseError("workload JSON: missing \"layers\"");
  for (const auto& lj : j.at("layers")) {
    try {
      LayerSpec l;
      l.name = lj.at("name").get<std::string>();
      l.spec.format = parse_format(lj.at("format").get<std::string>());
      l.spec.batch = lj.value("batch", std::int64_t{1});
      l.spec.m_dims = int_list(lj, "m_dims");
      l.spec.n_dims = int_list(lj, "n_dims");
      l.spec.ranks = int_list(lj, "ranks");
      l.spec.bt_blocks = lj.value("bt_blocks", 1);
      std::string mode = lj.value("mode", std::string("training"));
      if (mode == "training")
        l.mode = search::EvalMode::Training;
      else if (mode == "inference")
        l.mode = search::EvalMode::Inference;
      else
        throw ParseError("unknown mode: " + mode);
      l.comment = lj.value("comment", std::string());
      layers.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("workload layer: ") + e.what());
    }
  }
  return layers;
}

std::vector<LayerSpec> load_workload(const std::string& name_or_path) {
  std::string path = name_or_path;
  {
    std::ifstream probe(path);
    if (!probe) path = preset_dir() + "/" + name_or_path + ".json";
  }
  return parse_workload_json(read_file(path));
}

hw::HardwareConfig parse_hardware_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("hardware JSON: ") + e.what());
  }
  // Start from a named base so partial files stay consistent.
  hw::HardwareConfig c = j.contains("base")
                             ? hw::hardware_preset(j.at("base").get<std::string>())
                             : hw::HardwareConfig{};
  try {
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("num_ces")) c.num_ces = j.at("num_ces").get<int>();
    if (j.contains("ce_rows")) c.ce_rows = j.at("ce_rows").get<int>();
    if (j.contains("ce_cols")) c.ce_cols = j.at("ce_cols").get<int>();
    if (j.contains("frequency_hz"))
      c.frequency_hz = j.at("frequency_hz").get<double>();
    if (j.contains("unified_mem_bytes"))
      c.unified_mem_bytes = j.at("unified_mem_bytes").get<std::int64_t>();
    if (j.contains("mem_banks")) c.mem_banks = j.at("mem_banks").get<int>();
    if (j.contains("bank_row_elems"))
      c.bank_row_elems = j.at("bank_row_elems").get<int>();
    if (j.contains("accum_mem_bytes"))
      c.accum_mem_bytes = j.at("accum_mem_bytes").get<std::int64_t>();
    if (j.contains("dram_bw_bytes_per_s"))
      c.dram_bw_bytes_per_s = j.at("dram_bw_bytes_per_s").get<double>();
    if (j.contains("elem_bytes")) c.elem_bytes = j.at("elem_bytes").get<int>();
    if (j.contains("transposable_ce"))
      c.transposable_ce = j.at("transposable_ce").get<bool>();
    if (j.contains("flexible_distribution"))
      c.flexible_distribution = j.at("flexible_distribution").get<bool>();
    if (j.contains("flexible_reduction"))
      c.flexible_reduction = j.at("flexible_reduction").get<bool>();
    if (j.contains("dataflow_modes")) {
      c.dataflow_modes.clear();
      for (const auto& m : j.at("dataflow_modes")) {
        std::string s = m.get<std::string>();
        if (s == "WS") c.dataflow_modes.insert(hw::Stationarity::WS);
        else if (s == "IS") c.dataflow_modes.insert(hw::Stationarity::IS);
        else if (s == "OS") c.dataflow_modes.insert(hw::Stationarity::OS);
        else throw ParseError("unknown dataflow mode: " + s);
      }
    }
    if (j.contains("energy")) {
      const auto& ej = j.at("energy");
      auto f = [&](const char* k, double& dst) {
        if (ej.contains(k)) dst = ej.at(k).get<double>();
      };
      f("mac", c.energy.mac);
      f("reg", c.energy.reg);
      f("sram_read", c.energy.sram_read);
      f("sram_write", c.energy.sram_write);
      f("dram_read", c.energy.dram_read);
      f("dram_write", c.energy.dram_write);
      f("noc_hop", c.energy.noc_hop);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("hardware JSON: ") + e.what());
  }
  return c;
}

hw::HardwareConfig load_hardware(const std::string& name_or_path) {
  for (const auto& n : hw::hardware_preset_names())
    if (n == name_or_path) return hw::hardware_preset(n);
  std::string path = name_or_path;
  {
    std::ifstream probe(path);
    if (!probe) path = preset_dir() + "/" + name_or_path + ".json";
  }
  return parse_hardware_json(read_file(path));
}

std::vector<std::string> workload_preset_names() {
  return {"fig5_tt",   "fig6_ttm",  "table2_dense", "table2_tt",
          "table2_ttm", "table2_tr", "table2_ht",    "table2_bt"};
}

}  // namespace tencon::bench
