#pragma once

#include <string>
#include <vector>

#include "scg/config.hpp"

namespace scg {

struct TermCheck {
  std::string term;
  GradCheckResult result;
};

struct GradcheckReport {
  std::vector<TermCheck> terms;
  double max_rel_error = 0;
  double seconds = 0;
  bool passed = false;
};

/// Central differences in extended precision on a small random instance built from
/// `gc`, for L_recon, L_equ, L_sym (delta* held at its current value, which
/// is what the stop-gradient analytic gradient differentiates) and their
/// weighted sum under `obj`.
GradcheckReport run_gradcheck(const GradcheckConfig& gc, const ObjectiveConfig& obj,
                              ConstraintVariant variant = ConstraintVariant::per_module_transrot);

} // namespace scg
