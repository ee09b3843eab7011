#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace speclab {

struct TheoremCheck {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct TheoryReport {
  std::vector<TheoremCheck> checks;
  std::string failing_instance_json;  // empty when everything passed

  bool all_passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }
};

/// Runs the exact-theory invariant suite on `instances` random instances:
/// the Pareto identity, the linear acceptance law, lossless exactness, the
/// min-kernel law of accepted tokens, factorized-vs-brute expected
/// acceptance length, and position decay of the acceptance tails.
/// `inject_bug` perturbs the ensemble weight inside the first two checks;
/// it exists so the suite can be negative-tested.
TheoryReport run_theory_checks(int instances, std::uint64_t seed, int workers,
                               bool inject_bug = false);

}  // namespace speclab
