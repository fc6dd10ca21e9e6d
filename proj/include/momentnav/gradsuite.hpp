#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "momentnav/json.hpp"
#include "momentnav/mathcore.hpp"

namespace momentnav {

struct GradSuiteCase {
  std::size_t index = 0;
  std::string kind;  // fc, gru, cosine, triplet, policy, value, query, objective/<mode>
  std::string detail;
  GradcheckReport report;
};

struct GradSuiteReport {
  std::vector<GradSuiteCase> cases;
  double max_rel_error = 0.0;
  double max_rel_error_fixed_floor = 0.0;
  std::size_t worst_case = 0;
  double seconds = 0.0;

  bool passed(double tol = 1e-4) const { return !cases.empty() && max_rel_error < tol; }
};

/// Central differences (h = step) over `n_configs` randomly drawn layer,
/// loss and full-objective configurations, cycling through the kinds.
GradSuiteReport run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed, double step = 1e-6);

json to_json_value(const GradSuiteReport& r);

}  // namespace momentnav
