#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tencon/tensor_graph.hpp"  // GraphError

namespace tencon::fabric {

enum class FabricKind { Distribution, Reduction };

struct FabricConfig {
  int ports = 16;  // power of two, >= 2
  FabricKind kind = FabricKind::Distribution;

  int log_ports() const;
  /// Butterfly levels plus the transpose layer.
  int stages() const { return log_ports() + 1; }
};

/// Fixed transpose-layer permutation: the corner-turn that swaps the low and
/// high halves of the port index bits (a row-major <-> column-major flip for
/// square port grids). Returns the source port feeding wire `w`.
int transpose_perm(int w, int ports);

/// Per-stage mux controls for the distribution network. stage_bits[s][w] == 1
/// means output wire w of butterfly stage s takes the diagonal input
/// (w XOR 2^s) instead of the vertical one.
struct MuxConfig {
  bool transpose = false;
  std::vector<std::vector<std::uint8_t>> stage_bits;
};

enum class SwitchMode : std::uint8_t { Pass, Swap, AddLeft, AddRight };

/// Per-stage adder-switch modes for the reduction network. stages[s] holds
/// N/2 modes; switch k of stage s pairs wires (w, w | 2^s) where w is the
/// k-th index with bit s clear.
struct SwitchConfig {
  bool transpose = false;
  std::vector<std::vector<SwitchMode>> stages;
};

/// Multicast-capable source assignment: source[o] feeds output port o.
struct DistributionPattern {
  std::vector<int> source;
};

/// Disjoint input groups, each summed into a distinct destination port.
struct ReductionPattern {
  struct Group {
    std::vector<int> inputs;
    int dest = 0;
  };
  std::vector<Group> groups;
};

/// Route a distribution pattern; std::nullopt when the blocking butterfly
/// cannot realize it (with or without the transpose layer).
std::optional<MuxConfig> dist_route(const DistributionPattern& p,
                                    const FabricConfig& cfg);

std::vector<double> dist_simulate(const MuxConfig& c,
                                  const std::vector<double>& inputs);

/// Value slot of the reduction network; Add modes leave an explicit idle
/// marker on the unused output so accidental consumption shows up in tests.
struct RedValue {
  bool idle = true;
  double value = 0;
};

std::optional<SwitchConfig> red_route(const ReductionPattern& p,
                                      const FabricConfig& cfg);

std::vector<RedValue> red_simulate(const SwitchConfig& c,
                                   const std::vector<double>& inputs);

/// XOR control law: stage s bit = bank_index bit s XOR sel_vec bit s.
/// Broadcast over a stage, these bits route bank `bank_index` to port
/// `sel_vec` (and every port p to p XOR bank_index XOR sel_vec).
std::vector<std::uint8_t> control_signals(int bank_index, int sel_vec,
                                          int ports);

MuxConfig mux_config_from_signals(const std::vector<std::uint8_t>& bits,
                                  int ports);

/// Hardware cost accounting.
int mux_count(const FabricConfig& cfg);          // N * (log2(N) + 1)
int adder_switch_count(const FabricConfig& cfg); // (N/2) * log2(N)

}  // namespace tencon::fabric
