#include "latte/finetune.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "latte/error.hpp"

namespace latte {

void FinetuneConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("fine-tuning learning rate must be positive");
  if (epochs < 0) throw ConfigError("fine-tuning epochs must be non-negative");
  if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be non-negative");
  if (patience < 1) throw ConfigError("early-stop patience must be positive");
  if (!(prob_floor > 0.0 && prob_floor < 1.0)) throw ConfigError("probability floor must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const FinetuneConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},         {"kl_weight", c.kl_weight},
       {"patience", c.patience},           {"min_delta", c.min_delta},   {"prob_floor", c.prob_floor},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, FinetuneConfig& c) {
  c = FinetuneConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.patience = j.value("patience", c.patience);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.prob_floor = j.value("prob_floor", c.prob_floor);
  c.seed = j.value("seed", c.seed);
}

double supervised_loss(const Vector& prediction, double label, TaskType type) {
  if (type == TaskType::regression) {
    if (prediction.size() != 1) throw ContractViolation("regression prediction must be a scalar");
    const double d = label - prediction[0];
    return d * d;
  }
  const double rounded = std::round(label);
  if (rounded != label || rounded < 0 || rounded >= static_cast<double>(prediction.size()))
    throw ContractViolation("class label does not index the probability vector");
  return -std::log(std::max(prediction[static_cast<Index>(rounded)], 1e-12));
}

Index head_width(const Metadata& metadata) {
  return metadata.is_classification() ? static_cast<Index>(metadata.num_classes()) : 1;
}

std::vector<double> training_targets(const Metadata& metadata, const NormStats& norm_stats,
                                     std::span<const Sample> rows) {
  std::vector<double> targets;
  targets.reserve(rows.size());
  for (const auto& s : rows) {
    if (!s.label) throw ContractViolation("training row has no label");
    targets.push_back(metadata.is_classification() ? static_cast<double>(s.class_index())
                                                   : norm_stats.normalize_target(*s.label));
  }
  return targets;
}

FinetuneResult finetune(LatteModel& model, const FeatureBatch& labeled, const std::vector<double>& targets,
                        TaskType type, const Vector& h_M, const FinetuneConfig& config) {
  config.validate();
  if (labeled.rows < 1) throw ContractViolation("fine-tuning needs at least one labeled row");
  if (static_cast<Index>(targets.size()) != labeled.rows)
    throw ContractViolation("fine-tuning targets do not match the labeled rows");
  if (!model.has_head(kTrueHead)) throw ContractViolation("attach the task head before fine-tuning");

  std::vector<Index> classes;
  Matrix regression_targets;
  if (type == TaskType::classification) {
    for (double t : targets) classes.push_back(static_cast<Index>(t));
  } else {
    regression_targets = Eigen::Map<const Matrix>(targets.data(), labeled.rows, 1);
  }

  FinetuneResult result;
  nn::Adam optimizer({config.learning_rate});
  Rng dropout_rng(stream_seed(config.seed, "dropout"));
  nn::ForwardContext ctx{true, model.config().encoder.dropout, &dropout_rng};
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Tape tape;
    auto pass = model.forward(tape, labeled, h_M, ctx, kTrueHead);
    nn::Var truth = type == TaskType::classification
                        ? nn::mean(nn::nll_rows(pass.output, classes, config.prob_floor))
                        : nn::mean(nn::squared_error_rows(pass.output, regression_targets));
    nn::Var kl = nn::mean(pass.adapter.kl);
    nn::Var loss = nn::add(nn::scale(kl, config.kl_weight), truth);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite fine-tuning loss at epoch " << epoch << " (kl=" << kl.value()(0, 0)
          << ", true=" << truth.value()(0, 0) << ", rows=" << labeled.rows << ")";
      throw NumericalError(msg.str());
    }
    model.parameters().zero_grad();
    tape.backward(loss);
    optimizer.step(model.parameters());
    result.losses.push_back(value);
    result.epochs_run = epoch + 1;
    if (value < best - config.min_delta) {
      best = value;
      stale = 0;
    } else if (++stale >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

Predictions predict(const LatteModel& model, const FeatureBatch& rows, const Vector& h_M, TaskType type,
                    const NormStats& norm_stats) {
  Predictions out;
  out.type = type;
  nn::Tape tape;
  const Matrix raw = model.forward(tape, rows, h_M, {}, kTrueHead).output.value();
  if (type == TaskType::classification) {
    out.probabilities = nn::softmax(raw);
  } else {
    if (raw.cols() != 1) throw ShapeError("regression head must have one output");
    out.normalized = raw.col(0);
    out.values.resize(out.normalized.size());
    for (Index i = 0; i < out.normalized.size(); ++i) out.values[i] = norm_stats.denormalize_target(out.normalized[i]);
  }
  return out;
}

nn::Checkpoint finetune_checkpoint(const nn::Checkpoint& start, const TabularDataset& dataset,
                                   const FewShotSplit& split, const FinetuneConfig& config, FinetuneResult* result) {
  if (split.labeled_indices.empty()) throw ContractViolation("few-shot split is empty");
  auto context = TaskContext::read(start);
  LatteModel model = LatteModel::restore(start, false);
  model.attach_head(std::string(kTrueHead), head_width(context.metadata));

  std::vector<Sample> rows;
  for (auto i : split.labeled_indices) {
    if (i >= dataset.labeled.size()) throw ContractViolation("few-shot index outside the labeled pool");
    rows.push_back(dataset.labeled[i]);
  }
  const Featurizer featurize(context);
  const auto batch = featurize(rows);
  const auto targets = training_targets(context.metadata, context.norm_stats, rows);
  auto fit = finetune(model, batch, targets, context.metadata.task_type, context.knowledge.vector, config);
  if (result != nullptr) *result = fit;

  nn::Checkpoint out;
  out.manifest = start.manifest;
  out.manifest["stage"] = "finetune";
  out.manifest["few_shot"] = split;
  out.manifest["finetune"] = config;
  out.manifest["prob_floor"] = config.prob_floor;
  model.store(out);
  context.write(out);
  return out;
}

Predictions predict(const nn::Checkpoint& checkpoint, std::span<const Sample> rows) {
  const auto context = TaskContext::read(checkpoint);
  const LatteModel model = LatteModel::restore(checkpoint, true);
  const auto n = context.metadata.features.size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].values.size() != n)
      throw ContractViolation("row " + std::to_string(r) + " has " + std::to_string(rows[r].values.size()) +
                              " values, the checkpoint schema has " + std::to_string(n));
  const Featurizer featurize(context);
  return predict(model, featurize(rows), context.knowledge.vector, context.metadata.task_type, context.norm_stats);
}

}  // namespace latte
