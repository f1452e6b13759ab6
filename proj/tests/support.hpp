#pragma once

#include <string>

#include "pillarfss/config.hpp"
#include "pillarfss/solver.hpp"

namespace testing {

inline std::string config_path(const std::string& name) {
  return std::string(PILLARFSS_CONFIG_DIR) + "/" + name;
}

inline const pillarfss::RunConfig& default_config() {
  static const pillarfss::RunConfig cfg = pillarfss::load_config(config_path("default.yaml"));
  return cfg;
}

inline const pillarfss::SheetProblem& default_problem() {
  static const pillarfss::SheetProblem problem = pillarfss::make_problem(default_config());
  return problem;
}

inline Eigen::Vector3d field_of(const pillarfss::FieldSolution& s) {
  return {s.e_inplane.x(), s.e_inplane.y(), s.e_z};
}

}  // namespace testing
