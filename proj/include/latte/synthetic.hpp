#pragma once

#include <cstdint>
#include <filesystem>

#include "latte/data.hpp"
#include "latte/knowledge.hpp"

namespace latte {

struct GeneratedDataset {
  std::filesystem::path data;
  std::filesystem::path metadata;
};

/// Two Gaussian blobs over two numerical features whose means lie
/// `separation` standard deviations apart.
struct BlobSpec {
  int labeled_per_class = 64;
  int unlabeled = 400;
  int test = 200;
  double separation = 3.0;
  std::uint64_t seed = 7;
};

/// Two numerical features with identical distributions; only the first
/// decides the label, so a model must tell the columns apart by name.
struct IdentitySpec {
  int labeled_per_class = 64;
  int unlabeled = 400;
  int test = 400;
  std::uint64_t seed = 11;
};

/// Linear target plus Gaussian noise whose standard deviation is exactly
/// `noise` in the min-max normalized target space of the labeled rows.
struct RegressionSpec {
  int labeled = 128;
  int unlabeled = 400;
  int test = 200;
  int features = 4;
  double noise = 0.05;
  std::uint64_t seed = 13;
};

/// Each writer produces <dir>/<stem>.csv and <dir>/<stem>.json with a
/// "split" column marking test rows; unlabeled rows have an empty label.
GeneratedDataset write_blob_dataset(const std::filesystem::path& dir, const BlobSpec& spec,
                                    const std::string& stem = "blobs");
GeneratedDataset write_identity_dataset(const std::filesystem::path& dir, const IdentitySpec& spec,
                                        const std::string& stem = "identity");
GeneratedDataset write_regression_dataset(const std::filesystem::path& dir, const RegressionSpec& spec,
                                          const std::string& stem = "linear");

/// Raw-scale noise standard deviation used by write_regression_dataset.
double regression_noise_scale(const RegressionSpec& spec);

/// Stub knowledge vector for the metadata, written as a knowledge file.
KnowledgeVector write_stub_knowledge(const std::filesystem::path& path, const Metadata& metadata, int dim = 64,
                                     int layer = kDefaultLayer, std::uint64_t seed = 0);

}  // namespace latte
