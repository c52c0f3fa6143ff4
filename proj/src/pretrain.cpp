#include "latte/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "latte/error.hpp"

namespace latte {

namespace {

double squared_distance(const Matrix& a, Index i, const Matrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

/// Assigns every row to its nearest centroid (lowest index on ties) and
/// returns the objective.
double assign(const Matrix& reps, const Matrix& centroids, std::vector<Index>& labels) {
  double total = 0.0;
  for (Index i = 0; i < reps.rows(); ++i) {
    Index best = 0;
    double best_d = squared_distance(reps, i, centroids, 0);
    for (Index c = 1; c < centroids.rows(); ++c) {
      const double d = squared_distance(reps, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    total += best_d;
  }
  return total;
}

Matrix seed_centroids(const Matrix& reps, Index k, Rng& rng) {
  const Index n = reps.rows();
  Matrix centroids(k, reps.cols());
  centroids.row(0) = reps.row(static_cast<Index>(rng.index(static_cast<std::uint64_t>(n))));
  Vector nearest(n);
  for (Index i = 0; i < n; ++i) nearest[i] = squared_distance(reps, i, centroids, 0);
  for (Index c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = reps.row(pick);
    for (Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(reps, i, centroids, c));
  }
  return centroids;
}

void check_losses(const MetaLosses& l, const MetaTask& task) {
  if (std::isfinite(l.meta) && std::isfinite(l.kl) && std::isfinite(l.pseudo)) return;
  std::ostringstream msg;
  msg << "non-finite meta loss (meta=" << l.meta << ", kl=" << l.kl << ", pseudo=" << l.pseudo << ") on task rows [";
  for (std::size_t i = 0; i < task.rows.size(); ++i)
    msg << (i ? " " : "") << task.rows[i] << ":" << task.labels[i];
  msg << "]";
  throw NumericalError(msg.str());
}

struct MetaGraph {
  nn::Var meta;
  MetaLosses losses;
};

MetaGraph meta_graph(const LatteModel& model, nn::Tape& tape, const FeatureBatch& batch, const MetaTask& task,
                     const Matrix& masks, const Vector& h_M, double kl_weight, const nn::ForwardContext& ctx) {
  if (static_cast<Index>(task.rows.size()) != batch.rows || task.labels.size() != task.rows.size())
    throw ContractViolation("meta-task rows do not match the feature batch");
  auto pass = model.forward(tape, batch, h_M, ctx, kPseudoHead, &masks);
  nn::Var pseudo = nn::mean(nn::nll_rows(pass.output, task.labels));
  nn::Var kl = nn::mean(pass.adapter.kl);
  nn::Var meta = nn::add(nn::scale(kl, kl_weight), pseudo);
  MetaGraph g{meta, {meta.value()(0, 0), kl.value()(0, 0), pseudo.value()(0, 0)}};
  return g;
}

}  // namespace

void CorruptionSpec::validate() const {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("corruption keep_prob must lie in (0, 1]");
}

Vector corruption_mask(Index dim, const CorruptionSpec& spec, std::uint64_t draw_index) {
  spec.validate();
  Vector mask(dim);
  if (spec.keep_prob == 1.0) {
    mask.setOnes();
    return mask;
  }
  Rng rng(mix_seed({spec.seed, draw_index}));
  for (Index i = 0; i < dim; ++i) mask[i] = rng.bernoulli(spec.keep_prob) ? 1.0 : 0.0;
  return mask;
}

Vector corrupt_representation(const Vector& h_cls, const CorruptionSpec& spec, std::uint64_t draw_index) {
  if (spec.keep_prob == 1.0) {
    spec.validate();
    return h_cls;
  }
  return h_cls.cwiseProduct(corruption_mask(h_cls.size(), spec, draw_index));
}

Matrix ClusterAssignment::one_hot() const {
  Matrix out = Matrix::Zero(static_cast<Index>(labels.size()), k());
  for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<Index>(i), labels[i]) = 1.0;
  return out;
}

std::vector<Index> ClusterAssignment::cluster_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(k()), 0);
  for (auto l : labels) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

ClusterAssignment cluster_pseudo_labels(const Matrix& reps, Index k, std::uint64_t seed, KMeansOptions options) {
  if (k < 2) throw ContractViolation("clustering needs k >= 2");
  if (reps.rows() < k)
    throw ContractViolation("clustering " + std::to_string(reps.rows()) + " points into " + std::to_string(k) +
                            " clusters");
  Rng rng(seed);
  ClusterAssignment out;
  out.centroids = seed_centroids(reps, k, rng);
  out.labels.assign(static_cast<std::size_t>(reps.rows()), 0);

  for (int it = 0; it < options.max_iterations; ++it) {
    out.objective_history.push_back(assign(reps, out.centroids, out.labels));
    out.iterations = it + 1;

    Matrix next = Matrix::Zero(k, reps.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < reps.rows(); ++i) {
      const auto c = out.labels[static_cast<std::size_t>(i)];
      next.row(c) += reps.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(reps.rows()), false);
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Index far = -1;
      double far_d = -1.0;
      for (Index i = 0; i < reps.rows(); ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double d = squared_distance(reps, i, out.centroids, out.labels[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      taken[static_cast<std::size_t>(far)] = true;
      next.row(c) = reps.row(far);
    }
    const double moved = (next - out.centroids).rowwise().norm().maxCoeff();
    out.centroids = std::move(next);
    if (moved <= options.tolerance) break;
  }
  out.inertia = assign(reps, out.centroids, out.labels);
  out.objective_history.push_back(out.inertia);
  return out;
}

MetaTask build_meta_task(const ClusterAssignment& assignment, Index ways, Index shots, std::uint64_t seed) {
  if (ways < 1 || shots < 1) throw TaskConstructionError("meta-task needs positive ways and shots");
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(assignment.k()));
  for (std::size_t i = 0; i < assignment.labels.size(); ++i)
    members[static_cast<std::size_t>(assignment.labels[i])].push_back(static_cast<Index>(i));
  std::vector<Index> eligible;
  for (Index c = 0; c < assignment.k(); ++c)
    if (static_cast<Index>(members[static_cast<std::size_t>(c)].size()) >= shots) eligible.push_back(c);
  if (static_cast<Index>(eligible.size()) < ways)
    throw TaskConstructionError(std::to_string(eligible.size()) + " clusters hold at least " + std::to_string(shots) +
                                " members; the task needs " + std::to_string(ways));

  Rng rng(seed);
  rng.shuffle(eligible);
  MetaTask task;
  task.ways = ways;
  task.shots = shots;
  for (Index w = 0; w < ways; ++w) {
    const Index c = eligible[static_cast<std::size_t>(w)];
    auto pool = members[static_cast<std::size_t>(c)];
    rng.shuffle(pool);
    for (Index s = 0; s < shots; ++s) {
      task.rows.push_back(pool[static_cast<std::size_t>(s)]);
      task.labels.push_back(c);
    }
  }
  return task;
}

void PretrainConfig::validate() const {
  if (clusters < 2) throw ConfigError("pretraining needs at least 2 clusters");
  if (ways < 1 || ways > clusters) throw ConfigError("pretraining ways must lie in [1, clusters]");
  if (shots < 1) throw ConfigError("pretraining shots must be positive");
  if (tasks_per_epoch < 0 || epochs < 0) throw ConfigError("pretraining epochs and tasks must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("pretraining learning rate must be positive");
  if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be non-negative");
  corruption.validate();
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"clusters", c.clusters},
       {"ways", c.ways},
       {"shots", c.shots},
       {"tasks_per_epoch", c.tasks_per_epoch},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"kl_weight", c.kl_weight},
       {"keep_prob", c.corruption.keep_prob},
       {"corruption_seed", c.corruption.seed},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c = PretrainConfig{};
  c.clusters = j.value("clusters", c.clusters);
  c.ways = j.value("ways", c.ways);
  c.shots = j.value("shots", c.shots);
  c.tasks_per_epoch = j.value("tasks_per_epoch", c.tasks_per_epoch);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.corruption.keep_prob = j.value("keep_prob", c.corruption.keep_prob);
  c.corruption.seed = j.value("corruption_seed", c.corruption.seed);
  c.seed = j.value("seed", c.seed);
}

MetaLosses meta_step(LatteModel& model, nn::Adam& optimizer, const FeatureBatch& batch, const MetaTask& task,
                     const Matrix& masks, const Vector& h_M, double kl_weight, Rng& dropout_rng) {
  nn::Tape tape;
  nn::ForwardContext ctx{true, model.config().encoder.dropout, &dropout_rng};
  auto g = meta_graph(model, tape, batch, task, masks, h_M, kl_weight, ctx);
  check_losses(g.losses, task);
  model.parameters().zero_grad();
  tape.backward(g.meta);
  optimizer.step(model.parameters());
  return g.losses;
}

MetaLosses meta_losses(const LatteModel& model, const FeatureBatch& batch, const MetaTask& task, const Matrix& masks,
                       const Vector& h_M, double kl_weight) {
  nn::Tape tape;
  return meta_graph(model, tape, batch, task, masks, h_M, kl_weight, {}).losses;
}

Matrix encode_cls(const LatteModel& model, const FeatureBatch& rows) {
  constexpr Index kChunk = 256;
  Matrix out(rows.rows, model.config().encoder.model_dim);
  for (Index begin = 0; begin < rows.rows; begin += kChunk) {
    const Index count = std::min(kChunk, rows.rows - begin);
    FeatureBatch chunk;
    chunk.rows = count;
    chunk.features = rows.features;
    chunk.inputs = rows.inputs.middleRows(begin * rows.features, count * rows.features);
    nn::Tape tape;
    out.middleRows(begin, count) = model.encoder().forward(tape, chunk, {}).cls().value();
  }
  return out;
}

PretrainResult run_pretraining(LatteModel& model, const FeatureBatch& unlabeled, const Vector& h_M,
                               const PretrainConfig& config) {
  config.validate();
  if (model.has_head(kPseudoHead)) {
    if (model.heads().find(kPseudoHead)->second != config.clusters)
      throw ConfigError("existing pseudo head width differs from the cluster count");
  } else {
    model.attach_head(std::string(kPseudoHead), config.clusters);
  }
  PretrainResult result;
  if (config.epochs == 0 || config.tasks_per_epoch == 0) return result;
  if (unlabeled.rows < config.clusters)
    throw ContractViolation("pretraining needs at least " + std::to_string(config.clusters) + " unlabeled rows, got " +
                            std::to_string(unlabeled.rows));

  nn::Adam optimizer({config.learning_rate});
  Rng dropout_rng(stream_seed(config.seed, "dropout"));
  const std::uint64_t cluster_seed = stream_seed(config.seed, "cluster");
  const std::uint64_t task_seed = stream_seed(config.seed, "task");
  const Index dim = model.config().encoder.model_dim;
  const auto n_rows = static_cast<std::uint64_t>(unlabeled.rows);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Matrix masks(unlabeled.rows, dim);
    for (Index i = 0; i < unlabeled.rows; ++i)
      masks.row(i) =
          corruption_mask(dim, config.corruption, static_cast<std::uint64_t>(epoch) * n_rows + static_cast<std::uint64_t>(i))
              .transpose();
    const Matrix corrupted = encode_cls(model, unlabeled).cwiseProduct(masks);
    const auto assignment =
        cluster_pseudo_labels(corrupted, config.clusters, mix_seed({cluster_seed, static_cast<std::uint64_t>(epoch)}));

    const auto sizes = assignment.cluster_sizes();
    auto eligible = [&](Index shots) {
      return static_cast<Index>(std::count_if(sizes.begin(), sizes.end(), [&](Index s) { return s >= shots; }));
    };
    Index shots = config.shots;
    while (shots > 1 && eligible(shots) < std::min<Index>(config.ways, 2)) --shots;
    const Index ways = std::min(config.ways, eligible(shots));
    result.task_shapes.emplace_back(ways, shots);

    for (int t = 0; t < config.tasks_per_epoch; ++t) {
      const auto task = build_meta_task(
          assignment, ways, shots,
          mix_seed({task_seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(t)}));
      const FeatureBatch batch = unlabeled.select(std::span<const Index>(task.rows));
      Matrix task_masks(batch.rows, dim);
      for (Index r = 0; r < batch.rows; ++r) task_masks.row(r) = masks.row(task.rows[static_cast<std::size_t>(r)]);
      const auto losses = meta_step(model, optimizer, batch, task, task_masks, h_M, config.kl_weight, dropout_rng);
      result.curve.push_back({epoch, t, losses.meta, losses.kl, losses.pseudo});
    }
  }
  return result;
}

void append_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& records) {
  const bool fresh = !std::filesystem::exists(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << "epoch,task_index,l_meta,l_kl,l_pseudo\n";
  char line[160];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g\n", r.epoch, r.task_index, r.meta, r.kl, r.pseudo);
    out << line;
  }
}

}  // namespace latte
