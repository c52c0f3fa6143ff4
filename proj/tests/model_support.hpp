#pragma once

#include "latte/experiment.hpp"
#include "latte/model.hpp"
#include "latte/synthetic.hpp"
#include "support.hpp"

namespace latte::testing {

inline ModelConfig small_model_config(Index input_dim = 6, Index knowledge_dim = 5) {
  ModelConfig c;
  c.encoder.model_dim = 16;
  c.encoder.ffn_dim = 24;
  c.encoder.heads = 4;
  c.encoder.layers = 1;
  c.adapter.ffn_dim = 12;
  c.adapter.layers = 1;
  c.input_dim = input_dim;
  c.knowledge_dim = knowledge_dim;
  c.head_hidden = 8;
  return c;
}

/// Rows drawn around `clusters` well separated centers.
inline FeatureBatch clustered_batch(Index rows, Index features, Index dim, int clusters, Rng& rng) {
  FeatureBatch b{Matrix(rows * features, dim), rows, features};
  std::vector<Matrix> centers;
  for (int c = 0; c < clusters; ++c) centers.push_back(random_matrix(features, dim, rng, 2.0));
  for (Index r = 0; r < rows; ++r)
    b.inputs.middleRows(r * features, features) =
        centers[static_cast<std::size_t>(r % clusters)] + random_matrix(features, dim, rng, 0.2);
  return b;
}

inline ModelSettings small_settings() {
  ModelSettings s;
  const auto c = small_model_config();
  s.encoder = c.encoder;
  s.adapter = c.adapter;
  s.head_hidden = c.head_hidden;
  s.pretrain.epochs = 1;
  s.pretrain.tasks_per_epoch = 5;
  s.finetune.epochs = 30;
  s.finetune.learning_rate = 1e-3;
  return s;
}

/// Small blob table (64 labeled, 40 unlabeled, 40 test) loaded from disk.
inline TabularDataset small_blob_dataset(const TempDir& dir, std::uint64_t seed = 7) {
  BlobSpec spec;
  spec.labeled_per_class = 32;
  spec.unlabeled = 40;
  spec.test = 40;
  spec.seed = seed;
  const auto files = write_blob_dataset(dir.path(), spec);
  return load_dataset(files.data, files.metadata);
}

inline KnowledgeVector small_knowledge(const Metadata& metadata) { return stub_knowledge_vector(metadata, 5, 30, 0); }

}  // namespace latte::testing
