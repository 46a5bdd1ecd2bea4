#include "tencon/butterfly.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace tencon::fabric {

int FabricConfig::log_ports() const {
  if (ports < 2 || (ports & (ports - 1)) != 0)
    throw GraphError("fabric ports must be a power of two >= 2");
  int k = 0;
  while ((1 << k) < ports) ++k;
  return k;
}

int transpose_perm(int w, int ports) {
  int k = 0;
  while ((1 << k) < ports) ++k;
  int lo_bits = k / 2;
  int hi_bits = k - lo_bits;
  int lo = w & ((1 << lo_bits) - 1);
  int hi = w >> lo_bits;
  return (lo << hi_bits) | hi;
}

std::vector<double> dist_simulate(const MuxConfig& c,
                                   const std::vector<double>& in) {
  int n = static_cast<int>(in.size());
  std::vector<double> cur(in.size());
  for (int w = 0; w < n; ++w)
    cur[static_cast<std::size_t>(w)] =
        in[static_cast<std::size_t>(c.transpose ? transpose_perm(w, n) : w)];
  for (std::size_t s = 0; s < c.stage_bits.size(); ++s) {
    std::vector<double> next(cur.size());
    for (int w = 0; w < n; ++w) {
      int src = c.stage_bits[s][static_cast<std::size_t>(w)]
                    ? (w ^ (1 << s))
                    : w;
      next[static_cast<std::size_t>(w)] = cur[static_cast<std::size_t>(src)];
    }
    cur.swap(next);
  }
  return cur;
}

std::optional<MuxConfig> dist_route(const DistributionPattern& p,
                                    const FabricConfig& cfg) {
  int n = cfg.ports;
  int k = cfg.log_ports();
  if (static_cast<int>(p.source.size()) != n)
    throw GraphError("pattern size does not match fabric ports");
  for (int s : p.source)
    if (s < 0 || s >= n) throw GraphError("pattern source out of range");

  // Paths through a butterfly are unique, so routing is a conflict check:
  // walk each (source, output) pair stage by stage and demand one value per
  // wire. Try without the transpose layer first.
  std::vector<int> tperm_inv(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w)
    tperm_inv[static_cast<std::size_t>(transpose_perm(w, n))] = w;

  for (int tEnable = 0; tEnable <= 1; ++tEnable) {
    MuxConfig mc;
    mc.transpose = tEnable != 0;
    mc.stage_bits.assign(static_cast<std::size_t>(k),
                         std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
    // demand[level][wire] = source carried, or -1
    std::vector<std::vector<int>> demand(
        static_cast<std::size_t>(k + 1),
        std::vector<int>(static_cast<std::size_t>(n), -1));
    bool ok = true;
    for (int o = 0; o < n && ok; ++o) {
      int src = p.source[static_cast<std::size_t>(o)];
      int w = tEnable ? tperm_inv[static_cast<std::size_t>(src)] : src;
      if (demand[0][static_cast<std::size_t>(w)] != -1 &&
          demand[0][static_cast<std::size_t>(w)] != src) { ok = false; break; }
      demand[0][static_cast<std::size_t>(w)] = src;
      for (int s = 0; s < k; ++s) {
        int next_w = (w & ~(1 << s)) | (o & (1 << s));
        bool cross = next_w != w;
        auto& bit = mc.stage_bits[static_cast<std::size_t>(s)]
                                 [static_cast<std::size_t>(next_w)];
        int& d = demand[static_cast<std::size_t>(s + 1)]
                       [static_cast<std::size_t>(next_w)];
        if (d != -1 && d != src) { ok = false; break; }
        d = src;
        bit = cross ? 1 : 0;
        w = next_w;
      }
    }
    if (ok) return mc;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reduction network.

std::vector<RedValue> red_simulate(const SwitchConfig& c,
                                   const std::vector<double>& in) {
  int n = static_cast<int>(in.size());
  std::vector<RedValue> cur(in.size());
  for (int w = 0; w < n; ++w)
    cur[static_cast<std::size_t>(w)] = RedValue{false, in[static_cast<std::size_t>(w)]};

  auto add = [](const RedValue& a, const RedValue& b) {
    // Idle slots act as the additive identity; the marker survives only when
    // both inputs are idle.
    if (a.idle && b.idle) return RedValue{true, 0};
    return RedValue{false, (a.idle ? 0 : a.value) + (b.idle ? 0 : b.value)};
  };

  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    std::vector<RedValue> next(cur.size());
    int sw = 0;
    for (int lo = 0; lo < n; ++lo) {
      if (lo & (1 << s)) continue;
      int hi = lo | (1 << s);
      const RedValue& a = cur[static_cast<std::size_t>(lo)];
      const RedValue& b = cur[static_cast<std::size_t>(hi)];
      switch (c.stages[s][static_cast<std::size_t>(sw)]) {
        case SwitchMode::Pass:
          next[static_cast<std::size_t>(lo)] = a;
          next[static_cast<std::size_t>(hi)] = b;
          break;
        case SwitchMode::Swap:
          next[static_cast<std::size_t>(lo)] = b;
          next[static_cast<std::size_t>(hi)] = a;
          break;
        case SwitchMode::AddLeft:
          next[static_cast<std::size_t>(lo)] = add(a, b);
          next[static_cast<std::size_t>(hi)] = RedValue{true, 0};
          break;
        case SwitchMode::AddRight:
          next[static_cast<std::size_t>(hi)] = add(a, b);
          next[static_cast<std::size_t>(lo)] = RedValue{true, 0};
          break;
      }
      ++sw;
    }
    cur.swap(next);
  }
  if (c.transpose) {
    std::vector<RedValue> out(cur.size());
    for (int o = 0; o < n; ++o)
      out[static_cast<std::size_t>(o)] =
          cur[static_cast<std::size_t>(transpose_perm(o, n))];
    return out;
  }
  return cur;
}

std::optional<SwitchConfig> red_route(const ReductionPattern& p,
                                      const FabricConfig& cfg) {
  int n = cfg.ports;
  int k = cfg.log_ports();
  {
    std::set<int> seen_in, seen_dest;
    for (const auto& g : p.groups) {
      if (g.inputs.empty()) throw GraphError("empty reduction group");
      if (!seen_dest.insert(g.dest).second)
        throw GraphError("duplicate reduction destination");
      if (g.dest < 0 || g.dest >= n) throw GraphError("dest out of range");
      for (int i : g.inputs) {
        if (i < 0 || i >= n) throw GraphError("input out of range");
        if (!seen_in.insert(i).second)
          throw GraphError("reduction groups must be disjoint");
      }
    }
  }

  // Each input's path is unique (bit s is settled at stage s), so members of
  // a group merge at forced wires. Routing reduces to propagating demanded
  // input-sets backward and checking one set per wire.
  using Mask = std::uint64_t;
  for (int tEnable = 0; tEnable <= 1; ++tEnable) {
    // demand[level][wire]: bitmask of inputs carried, 0 = idle/free.
    std::vector<std::vector<Mask>> demand(
        static_cast<std::size_t>(k + 1),
        std::vector<Mask>(static_cast<std::size_t>(n), 0));
    bool ok = true;
    for (const auto& g : p.groups) {
      Mask m = 0;
      for (int i : g.inputs) m |= Mask{1} << i;
      int wire = tEnable ? transpose_perm(g.dest, n) : g.dest;
      if (demand[static_cast<std::size_t>(k)][static_cast<std::size_t>(wire)]) {
        ok = false;
        break;
      }
      demand[static_cast<std::size_t>(k)][static_cast<std::size_t>(wire)] = m;
    }
    for (int s = k - 1; s >= 0 && ok; --s) {
      for (int w = 0; w < n && ok; ++w) {
        Mask m = demand[static_cast<std::size_t>(s + 1)][static_cast<std::size_t>(w)];
        if (!m) continue;
        Mask lo_part = 0, hi_part = 0;
        for (int i = 0; i < n; ++i)
          if (m >> i & 1) {
            if (i & (1 << s))
              hi_part |= Mask{1} << i;
            else
              lo_part |= Mask{1} << i;
          }
        int lo_wire = w & ~(1 << s);
        int hi_wire = w | (1 << s);
        auto place = [&](int wire, Mask part) {
          if (!part) return true;
          Mask& slot = demand[static_cast<std::size_t>(s)][static_cast<std::size_t>(wire)];
          if (slot && slot != part) return false;
          slot = part;
          return true;
        };
        ok = place(lo_wire, lo_part) && place(hi_wire, hi_part);
      }
    }
    if (ok) {
      for (int w = 0; w < n && ok; ++w) {
        Mask m = demand[0][static_cast<std::size_t>(w)];
        if (m && m != (Mask{1} << w)) ok = false;
      }
    }
    if (!ok) continue;

    // Forward pass: derive switch modes from the wire assignment.
    SwitchConfig sc;
    sc.transpose = tEnable != 0;
    sc.stages.assign(static_cast<std::size_t>(k), {});
    for (int s = 0; s < k; ++s) {
      auto& modes = sc.stages[static_cast<std::size_t>(s)];
      for (int lo = 0; lo < n; ++lo) {
        if (lo & (1 << s)) continue;
        int hi = lo | (1 << s);
        Mask in_lo = demand[static_cast<std::size_t>(s)][static_cast<std::size_t>(lo)];
        Mask in_hi = demand[static_cast<std::size_t>(s)][static_cast<std::size_t>(hi)];
        Mask out_lo = demand[static_cast<std::size_t>(s + 1)][static_cast<std::size_t>(lo)];
        Mask out_hi = demand[static_cast<std::size_t>(s + 1)][static_cast<std::size_t>(hi)];
        SwitchMode mode = SwitchMode::Pass;
        Mask both = in_lo | in_hi;
        if (in_lo && in_hi && out_lo == both && !out_hi)
          mode = SwitchMode::AddLeft;
        else if (in_lo && in_hi && out_hi == both && !out_lo)
          mode = SwitchMode::AddRight;
        else if (out_lo == in_lo && out_hi == in_hi)
          mode = SwitchMode::Pass;
        else if (out_lo == in_hi && out_hi == in_lo)
          mode = SwitchMode::Swap;
        else if (!in_hi && out_hi == in_lo && !out_lo)
          mode = SwitchMode::Swap;
        else if (!in_lo && out_lo == in_hi && !out_hi)
          mode = SwitchMode::Swap;
        modes.push_back(mode);
      }
    }
    return sc;
  }
  return std::nullopt;
}

std::vector<std::uint8_t> control_signals(int bank_index, int sel_vec,
                                          int ports) {
  FabricConfig cfg{ports, FabricKind::Distribution};
  int k = cfg.log_ports();
  if (bank_index < 0 || bank_index >= ports)
    throw GraphError("bank index out of range");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s)
    bits[static_cast<std::size_t>(s)] =
        static_cast<std::uint8_t>(((bank_index >> s) ^ (sel_vec >> s)) & 1);
  return bits;
}

MuxConfig mux_config_from_signals(const std::vector<std::uint8_t>& bits,
                                  int ports) {
  MuxConfig mc;
  mc.transpose = false;
  for (std::uint8_t b : bits)
    mc.stage_bits.emplace_back(static_cast<std::size_t>(ports), b);
  return mc;
}

int mux_count(const FabricConfig& cfg) {
  return cfg.ports * (cfg.log_ports() + 1);
}

int adder_switch_count(const FabricConfig& cfg) {
  return (cfg.ports / 2) * cfg.log_ports();
}

}  // namespace tencon::fabric
