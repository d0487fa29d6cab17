#pragma once

#include <string>
#include <vector>

#include "cnp/gradcheck.hpp"

namespace cnp {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  int seeds = 0;
};

struct GradSuiteResult {
  std::vector<GradSuiteEntry> entries;
  double max_rel_error = 0.0;
};

/// 64-bit central-difference checks of every differentiable op on randomized
/// small tensors, plus the full training loss of L=1..3 pyramids w.r.t. all
/// parameters. Probe points are screened so no max-pool window is within
/// tie distance and no PReLU input sits on the kink; this keeps central
/// differences valid at the chosen epsilon.
GradSuiteResult run_gradient_suite(int seeds_per_op = 20, bool include_models = true);

}  // namespace cnp
