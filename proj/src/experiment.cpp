#include "latte/experiment.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "latte/baseline.hpp"
#include "latte/error.hpp"
#include "latte/metrics.hpp"

namespace latte {

std::string Variant::name() const {
  std::string out;
  auto add = [&](bool on, const char* part) {
    if (on) return;
    if (!out.empty()) out += '+';
    out += part;
  };
  add(sate, "no-sate");
  add(llm, "no-llm");
  add(meta, "no-meta");
  return out.empty() ? "full" : out;
}

Variant Variant::parse(std::string_view text) {
  Variant v;
  std::string token;
  auto flush = [&] {
    if (token.empty() || token == "full") {
    } else if (token == "no-sate" || token == "sate-off") {
      v.sate = false;
    } else if (token == "no-llm" || token == "llm-off") {
      v.llm = false;
    } else if (token == "no-meta" || token == "meta-off") {
      v.meta = false;
    } else {
      throw ConfigError("unknown variant part '" + token + "'");
    }
    token.clear();
  };
  for (char c : text) {
    if (c == '+' || c == ',') {
      flush();
    } else if (c != ' ') {
      token += c;
    }
  }
  flush();
  return v;
}

void to_json(nlohmann::json& j, const ModelSettings& s) {
  j = {{"encoder", s.encoder},
       {"adapter", s.adapter},
       {"head_hidden", s.head_hidden},
       {"pretrain", s.pretrain},
       {"finetune", s.finetune}};
}

void from_json(const nlohmann::json& j, ModelSettings& s) {
  s = ModelSettings{};
  if (j.contains("encoder")) s.encoder = j["encoder"].get<EncoderConfig>();
  if (j.contains("adapter")) s.adapter = j["adapter"].get<AdapterConfig>();
  s.head_hidden = j.value("head_hidden", s.head_hidden);
  if (j.contains("pretrain")) s.pretrain = j["pretrain"].get<PretrainConfig>();
  if (j.contains("finetune")) s.finetune = j["finetune"].get<FinetuneConfig>();
}

TaskContext make_task_context(const TabularDataset& dataset, const KnowledgeVector& knowledge,
                              const EmbeddingSpec& embedding, const Variant& variant) {
  TaskContext ctx;
  ctx.metadata = dataset.metadata;
  ctx.norm_stats = dataset.norm_stats;
  ctx.embedding = embedding;
  if (!variant.sate) ctx.vocabulary = ValueVocabulary::build(dataset);
  ctx.knowledge = knowledge;
  return ctx;
}

ModelConfig make_model_config(const ModelSettings& settings, const TaskContext& context, const Variant& variant) {
  ModelConfig c;
  c.encoder = settings.encoder;
  c.encoder.semantic = variant.sate;
  c.adapter = settings.adapter;
  if (!variant.llm) c.adapter.eta = 0.0;
  c.input_dim = Featurizer(context).input_dim();
  c.knowledge_dim = context.knowledge.dim();
  c.head_hidden = settings.head_hidden;
  return c;
}

std::vector<Sample> pretraining_rows(const TabularDataset& dataset) {
  std::vector<Sample> rows = dataset.unlabeled.empty() ? dataset.labeled : dataset.unlabeled;
  for (auto& s : rows) s.label.reset();
  return rows;
}

std::uint64_t few_shot_seed(std::uint64_t seed, int shot) {
  return mix_seed({stream_seed(seed, "few-shot"), static_cast<std::uint64_t>(shot)});
}

nn::Checkpoint starting_checkpoint(const TabularDataset& dataset, const TaskContext& context,
                                   const ModelSettings& settings, const Variant& variant, std::uint64_t seed,
                                   std::vector<LossRecord>* curve) {
  LatteModel model(make_model_config(settings, context, variant), seed);
  nn::Checkpoint ckpt;
  ckpt.manifest["variant"] = variant.name();
  ckpt.manifest["eta"] = model.config().adapter.eta;
  ckpt.manifest["tau"] = model.config().adapter.tau;
  if (variant.meta) {
    PretrainConfig pc = settings.pretrain;
    pc.seed = seed;
    pc.corruption.seed = stream_seed(seed, "mask");
    if (!variant.llm) pc.kl_weight = 0.0;
    const Featurizer featurize(context);
    const auto rows = pretraining_rows(dataset);
    auto result = run_pretraining(model, featurize(rows), context.knowledge.vector, pc);
    if (curve != nullptr) *curve = std::move(result.curve);
    ckpt.manifest["stage"] = "pretrain";
    ckpt.manifest["pretrain"] = pc;
  } else {
    ckpt.manifest["stage"] = "init";
  }
  model.store(ckpt);
  context.write(ckpt);
  return ckpt;
}

MetricResult score_checkpoint(const nn::Checkpoint& checkpoint, const TabularDataset& dataset) {
  if (dataset.test.empty()) throw DataError("dataset has no test rows");
  const auto preds = predict(checkpoint, dataset.test);
  MetricResult r;
  if (dataset.metadata.is_classification()) {
    std::vector<Index> truth;
    for (const auto& s : dataset.test) truth.push_back(static_cast<Index>(s.class_index()));
    r.metric = "auc";
    r.value = auc_multiclass(preds.probabilities, truth);
  } else {
    std::vector<double> truth;
    for (const auto& s : dataset.test) truth.push_back(dataset.norm_stats.normalize_target(*s.label));
    r.metric = "mse";
    r.value = mse(std::span<const double>(preds.normalized.data(), static_cast<std::size_t>(preds.normalized.size())),
                  truth);
  }
  return r;
}

namespace {

std::string cell_stem(const std::string& dataset, const std::string& variant, int shot, std::uint64_t seed) {
  std::ostringstream s;
  s << dataset << "_" << variant << "_shot" << shot << "_seed" << seed;
  return s.str();
}

}  // namespace

ExperimentReport run_experiment(const TabularDataset& dataset, const KnowledgeVector& knowledge,
                                const ExperimentConfig& config, const LlmCallCounter& counter) {
  ExperimentReport report;
  const std::string metric = dataset.metadata.is_classification() ? "auc" : "mse";
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (const auto& variant : config.variants) {
    const auto context = make_task_context(dataset, knowledge, config.embedding, variant);
    std::map<std::uint64_t, nn::Checkpoint> starts;
    for (int shot : config.shots) {
      for (auto seed : config.seeds) {
        MetricResult r{config.dataset_name, variant.name(), shot, seed, metric, nan, {}};
        try {
          auto it = starts.find(seed);
          if (it == starts.end()) {
            std::vector<LossRecord> curve;
            it = starts.emplace(seed, starting_checkpoint(dataset, context, config.settings, variant, seed, &curve))
                     .first;
            if (config.artifact_dir && !curve.empty()) {
              const auto path = *config.artifact_dir / ("loss_" + config.dataset_name + "_" + variant.name() + "_seed" +
                                                        std::to_string(seed) + ".csv");
              std::filesystem::remove(path);
              append_loss_curve(path, curve);
            }
          }
          const auto split = sample_few_shot(dataset, shot, few_shot_seed(seed, shot));
          FinetuneConfig fc = config.settings.finetune;
          fc.seed = mix_seed({seed, static_cast<std::uint64_t>(shot)});
          if (!variant.llm) fc.kl_weight = 0.0;
          auto tuned = finetune_checkpoint(it->second, dataset, split, fc);
          tuned.manifest["dataset"] = config.dataset_name;
          tuned.manifest["seed"] = seed;
          if (config.artifact_dir)
            tuned.save(*config.artifact_dir / ("model_" + cell_stem(config.dataset_name, variant.name(), shot, seed) +
                                               ".ckpt"));
          r.value = score_checkpoint(tuned, dataset).value;
        } catch (const Error& e) {
          r.error = e.what();
        }
        report.results.push_back(r);
      }
    }
  }

  if (config.baseline) {
    for (int shot : config.shots) {
      for (auto seed : config.seeds) {
        MetricResult r{config.dataset_name, dataset.metadata.is_classification() ? "logreg" : "ridge", shot, seed,
                       metric, nan, {}};
        try {
          const auto split = sample_few_shot(dataset, shot, few_shot_seed(seed, shot));
          std::vector<Sample> train;
          for (auto i : split.labeled_indices) train.push_back(dataset.labeled[i]);
          r.value = dataset.metadata.is_classification() ? logistic_baseline(dataset, train, dataset.test)
                                                         : linear_baseline(dataset, train, dataset.test);
        } catch (const Error& e) {
          r.error = e.what();
        }
        report.results.push_back(r);
      }
    }
  }
  report.llm_calls = counter.snapshot();
  return report;
}

}  // namespace latte
