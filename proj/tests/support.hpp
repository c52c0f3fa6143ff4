#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "latte/data.hpp"
#include "latte/io.hpp"
#include "latte/rng.hpp"
#include "latte/tensor.hpp"

namespace latte::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("latte-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline Metadata numeric_metadata(int features, TaskType type = TaskType::classification) {
  Metadata m;
  m.task_description = "Synthetic task";
  for (int j = 0; j < features; ++j)
    m.features.push_back({"f" + std::to_string(j), "feature number " + std::to_string(j), FeatureKind::numerical});
  m.task_type = type;
  if (type == TaskType::classification) m.class_names = {"neg", "pos"};
  m.label_column = "y";
  m.validate();
  return m;
}

}  // namespace latte::testing
