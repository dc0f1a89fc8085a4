#pragma once

#include <string>
#include <vector>

namespace urdmu {

struct PropertyResult {
  std::string group;
  bool passed = false;
  std::string detail;  // measured value on success, failure reason otherwise
};

// Gradient, closed-form, oracle-equivalence, and invariant checks over every
// module. Runs in a few seconds and touches no files outside the system
// temp directory.
std::vector<PropertyResult> run_selftest();

}  // namespace urdmu
