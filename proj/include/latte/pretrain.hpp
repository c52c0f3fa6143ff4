#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "latte/model.hpp"
#include "latte/nn/parameters.hpp"

namespace latte {

struct CorruptionSpec {
  double keep_prob = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Bernoulli(keep_prob) 0/1 mask, a pure function of (seed, draw_index).
Vector corruption_mask(Index dim, const CorruptionSpec& spec, std::uint64_t draw_index);
Vector corrupt_representation(const Vector& h_cls, const CorruptionSpec& spec, std::uint64_t draw_index);

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;
};

struct ClusterAssignment {
  Matrix centroids;  // k x D
  std::vector<Index> labels;
  double inertia = 0.0;
  /// Objective after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;

  Index k() const { return centroids.rows(); }
  /// One-hot pseudo-labels, rows x k.
  Matrix one_hot() const;
  std::vector<Index> cluster_sizes() const;
};

/// k-means++ seeding followed by Lloyd iterations on the rows of `reps`.
ClusterAssignment cluster_pseudo_labels(const Matrix& reps, Index k, std::uint64_t seed, KMeansOptions options = {});

struct MetaTask {
  Index ways = 0;
  Index shots = 0;
  /// Row indices into the clustered set, grouped by pseudo-class.
  std::vector<Index> rows;
  /// Cluster id of each row (an index into the k-wide pseudo head).
  std::vector<Index> labels;
};

MetaTask build_meta_task(const ClusterAssignment& assignment, Index ways, Index shots, std::uint64_t seed);

struct PretrainConfig {
  Index clusters = 4;
  Index ways = 4;
  Index shots = 5;
  int tasks_per_epoch = 50;
  int epochs = 20;
  double learning_rate = 1e-4;
  double kl_weight = 1.0;
  CorruptionSpec corruption;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

struct MetaLosses {
  double meta = 0.0;
  double kl = 0.0;
  double pseudo = 0.0;
};

/// One optimizer update on a meta-task. `batch` holds the task rows in task
/// order and `masks` their CLS corruption masks (rows x D). Returns the
/// losses measured before the update.
MetaLosses meta_step(LatteModel& model, nn::Adam& optimizer, const FeatureBatch& batch, const MetaTask& task,
                     const Matrix& masks, const Vector& h_M, double kl_weight, Rng& dropout_rng);

/// Loss evaluation without an update (eval mode, same corruption).
MetaLosses meta_losses(const LatteModel& model, const FeatureBatch& batch, const MetaTask& task, const Matrix& masks,
                       const Vector& h_M, double kl_weight);

struct LossRecord {
  int epoch = 0;
  int task_index = 0;
  double meta = 0.0;
  double kl = 0.0;
  double pseudo = 0.0;
};

struct PretrainResult {
  std::vector<LossRecord> curve;
  /// Meta-task shape actually used per epoch, after any shrinking.
  std::vector<std::pair<Index, Index>> task_shapes;
};

/// Encodes all rows (eval mode) and returns their CLS vectors.
Matrix encode_cls(const LatteModel& model, const FeatureBatch& rows);

/// Stage I over the unlabeled rows; attaches the k-wide pseudo head if absent.
PretrainResult run_pretraining(LatteModel& model, const FeatureBatch& unlabeled, const Vector& h_M,
                               const PretrainConfig& config);

/// CSV rows epoch,task_index,l_meta,l_kl,l_pseudo appended to `path`.
void append_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& records);

}  // namespace latte
