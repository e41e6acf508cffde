#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "distlq/distlq.hpp"

namespace testing_support {

inline std::string scenario_path(const std::string& name) {
  return std::string(DISTLQ_SCENARIO_DIR) + "/" + name;
}

inline distlq::LQScenario load_lq(const std::string& name) {
  return distlq::lq_scenario_from_json(distlq::read_json_file(scenario_path(name)));
}

inline distlq::UGVScenario load_fleet(const std::string& name) {
  return distlq::ugv_scenario_from_json(distlq::read_json_file(scenario_path(name)));
}

inline distlq::Matrix random_matrix(std::mt19937& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  distlq::Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = d(rng);
  return M;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("distlq_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
