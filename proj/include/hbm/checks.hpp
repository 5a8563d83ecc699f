#pragma once

// Quick invariant suite behind `hbm check`.

#include <string>
#include <vector>

namespace hbm {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckOutcome> run_invariant_checks();

}  // namespace hbm
