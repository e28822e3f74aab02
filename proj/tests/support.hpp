#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace test_support {

using dtnlqr::Mat;
using dtnlqr::Vec;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline double rel_diff(const Mat& a, const Mat& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline std::string scenario(const std::string& name) {
  return std::string(DTNLQR_SCENARIO_DIR) + "/" + name + ".json";
}

inline dtnlqr::ModelSpec single_class(double ls, double ld, double N) {
  dtnlqr::ModelSpec m;
  m.lambda_s = vec({ls});
  m.lambda_d = vec({ld});
  m.N = vec({N});
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dtnlqr_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace test_support
