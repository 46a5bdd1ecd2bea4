#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tencon::validate {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Options {
  std::uint64_t seed = 1;
  /// Test hook: name a property to sabotage deliberately, so harnesses can
  /// verify that failures are detected and reported. Empty disables it.
  std::string inject_fault;
};

/// Run the oracle suites: gradient checks for every format, sequence-order
/// invariance, six-mode CE equivalence, fabric routing round trips, and the
/// TCU-vs-reference numeric oracle.
std::vector<PropertyResult> run_all(const Options& opt = {});

}  // namespace tencon::validate
