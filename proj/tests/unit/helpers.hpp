#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazeid/common.hpp"
#include "gazeid/model.hpp"
#include "gazeid/signal.hpp"

namespace testing_helpers {

// Random-walk gaze on both eyes; visual = optical + offset.
inline gazeid::GazeRecording random_recording(std::size_t samples, std::uint64_t seed,
                                              const std::string& user = "u0",
                                              gazeid::TaskLabel task = {}) {
  gazeid::Rng rng(seed);
  gazeid::GazeRecording r;
  r.user_id = user;
  r.task = task;
  r.sample_rate = gazeid::kDefaultSampleRate;
  double ox = 0.0, oy = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    r.timestamps.push_back(static_cast<double>(i) / r.sample_rate);
    ox += rng.normal(0.0, 0.5);
    oy += rng.normal(0.0, 0.5);
    for (auto* eye : {&r.left, &r.right}) {
      const double jx = rng.normal(0.0, 0.05), jy = rng.normal(0.0, 0.05);
      eye->optical_x.push_back(ox + jx);
      eye->optical_y.push_back(oy + jy);
      eye->visual_x.push_back(1.02 * (ox + jx) + 5.0);
      eye->visual_y.push_back(0.98 * (oy + jy) + 1.5);
    }
  }
  return r;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  gazeid::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

inline Eigen::MatrixXd random_matrix(long rows, long cols, std::uint64_t seed, double sd = 1.0) {
  gazeid::Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (long j = 0; j < cols; ++j)
    for (long i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, sd);
  return m;
}

inline gazeid::Embedding embedding(const std::string& user, const Eigen::VectorXd& v) {
  return {user, "centroid", v};
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("gazeid_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing_helpers
