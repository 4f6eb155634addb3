#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "visurf/policy.hpp"
#include "visurf/rng.hpp"

namespace test_util {

// Fresh scratch directory per test case; contents from earlier runs are
// discarded so reruns stay clean.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "visurf_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void randomize(visurf::TabularPolicy& policy, visurf::Rng& rng, double scale = 1.0) {
  for (double& v : policy.theta().data()) v = scale * (2.0 * rng.next_double() - 1.0);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace test_util
