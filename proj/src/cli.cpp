#include "latte/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "latte/config.hpp"
#include "latte/error.hpp"
#include "latte/experiment.hpp"
#include "latte/hash.hpp"
#include "latte/io.hpp"
#include "latte/metrics.hpp"
#include "latte/report.hpp"
#include "latte/synthetic.hpp"

namespace latte::cli {

namespace {

/// Failure to obtain the task knowledge vector; maps to exit code 2.
class KnowledgeFailure : public Error {
 public:
  using Error::Error;
};

class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir) : path_(dir / ".latte.lock") {
    std::filesystem::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw IoError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  }
  ~OutputLock() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct CommonOptions {
  std::string config;
  std::string output_dir;
  std::string seeds;
  std::string shots;
  std::vector<std::string> variants;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--output-dir", o.output_dir, "directory for artifacts and reports");
  cmd->add_option("--seeds", o.seeds, "comma-separated seeds, overrides the config");
  cmd->add_option("--shots", o.shots, "comma-separated shots, overrides the config");
  cmd->add_option("--variant", o.variants, "ablation variant such as full or no-llm+no-meta (repeatable)");
}

RunConfig resolve_config(const CommonOptions& o) {
  auto cfg = RunConfig::load(o.config);
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (!o.shots.empty()) cfg.shots = parse_int_list(o.shots);
  if (!o.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : o.variants) cfg.variants.push_back(Variant::parse(v));
  }
  cfg.validate();
  return cfg;
}

nlohmann::json provenance(const KnowledgeVector& k) {
  nlohmann::json j = k;
  j.erase("vector");
  return j;
}

std::string file_hash(const std::filesystem::path& p) {
  return std::filesystem::exists(p) ? git_blob_hash_file(p) : std::string{};
}

void stamp(nn::Checkpoint& ckpt, const RunConfig& cfg, const std::string& command) {
  ckpt.manifest["command"] = command;
  ckpt.manifest["config"] = cfg.to_json();
  ckpt.manifest["config_hash"] = cfg.hash();
  ckpt.manifest["inputs"] = {{"data", file_hash(cfg.dataset.data)},
                             {"metadata", file_hash(cfg.dataset.metadata)},
                             {"knowledge", file_hash(cfg.knowledge.file)}};
}

KnowledgeVector fetch_knowledge(const RunConfig& cfg, const Metadata& metadata, LlmCallCounter& counter) {
  try {
    auto k = extract_task_knowledge(cfg.knowledge.source(), metadata, cfg.knowledge.layer, counter);
    write_knowledge_file(cfg.knowledge.file, k);
    return k;
  } catch (const MissingArtifactError& e) {
    throw KnowledgeFailure(std::string(e.what()) + "; set LATTE_HIDDEN_STATES_URL or knowledge.url to extract it");
  } catch (const Error& e) {
    throw KnowledgeFailure(e.what());
  }
}

/// Reads the stored vector; extracts it first when allowed and an endpoint is configured.
KnowledgeVector obtain_knowledge(const RunConfig& cfg, const Metadata& metadata, LlmCallCounter& counter,
                                 bool allow_extract, std::ostream& err) {
  if (std::filesystem::exists(cfg.knowledge.file)) {
    auto k = read_knowledge_file(cfg.knowledge.file);
    if (!k.prompt_hash.empty() && k.prompt_hash != prompt_hash(render_knowledge_prompt(metadata)))
      err << "warning: " << cfg.knowledge.file.string() << " was extracted from a different metadata prompt\n";
    return k;
  }
  if (allow_extract && cfg.knowledge.source().kind == KnowledgeSource::Kind::http)
    return fetch_knowledge(cfg, metadata, counter);
  throw MissingArtifactError("knowledge vector file " + cfg.knowledge.file.string() +
                             " does not exist; run extract-knowledge first");
}

std::filesystem::path pretrain_path(const RunConfig& cfg, const Variant& v, std::uint64_t seed) {
  return cfg.output_dir / ("pretrain_" + v.name() + "_seed" + std::to_string(seed) + ".ckpt");
}

std::filesystem::path finetune_path(const RunConfig& cfg, const Variant& v, int shot, std::uint64_t seed) {
  return cfg.output_dir /
         ("finetune_" + v.name() + "_shot" + std::to_string(shot) + "_seed" + std::to_string(seed) + ".ckpt");
}

int cmd_extract_knowledge(const CommonOptions& o, std::ostream& out) {
  const auto cfg = resolve_config(o);
  OutputLock lock(cfg.output_dir);
  const auto metadata = load_metadata(cfg.dataset.metadata);
  const auto hash = prompt_hash(render_knowledge_prompt(metadata));
  const auto source = cfg.knowledge.source();
  if (std::filesystem::exists(cfg.knowledge.file)) {
    const auto k = read_knowledge_file(cfg.knowledge.file);
    const bool current = k.prompt_hash == hash && k.layer == cfg.knowledge.layer;
    if (current || source.kind == KnowledgeSource::Kind::file) {
      out << (current ? "up to date: " : "using stored vector: ") << cfg.knowledge.file.string() << "\n"
          << provenance(k).dump(2) << "\n";
      add_to_call_ledger(cfg.output_dir, {});
      return kOk;
    }
  }
  LlmCallCounter counter;
  KnowledgeVector k;
  try {
    k = fetch_knowledge(cfg, metadata, counter);
  } catch (...) {
    add_to_call_ledger(cfg.output_dir, counter.snapshot());
    throw;
  }
  add_to_call_ledger(cfg.output_dir, counter.snapshot());
  out << "wrote " << cfg.knowledge.file.string() << "\n" << provenance(k).dump(2) << "\n";
  return kOk;
}

int cmd_pretrain(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  OutputLock lock(cfg.output_dir);
  const auto dataset = cfg.load_dataset();
  LlmCallCounter counter;
  const auto knowledge = obtain_knowledge(cfg, dataset.metadata, counter, false, err);
  for (const auto& variant : cfg.variants) {
    if (!variant.meta) {
      out << "variant " << variant.name() << " skips Stage I\n";
      continue;
    }
    const auto context = make_task_context(dataset, knowledge, cfg.embedding, variant);
    for (auto seed : cfg.seeds) {
      std::vector<LossRecord> curve;
      auto ckpt = starting_checkpoint(dataset, context, cfg.settings, variant, seed, &curve);
      stamp(ckpt, cfg, "pretrain");
      const auto path = pretrain_path(cfg, variant, seed);
      ckpt.save(path);
      const auto loss_path =
          cfg.output_dir / ("loss_" + variant.name() + "_seed" + std::to_string(seed) + ".csv");
      std::filesystem::remove(loss_path);
      append_loss_curve(loss_path, curve);
      out << "wrote " << path.string() << " (" << curve.size() << " meta-steps)\n";
    }
  }
  add_to_call_ledger(cfg.output_dir, counter.snapshot());
  return kOk;
}

int cmd_finetune(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  OutputLock lock(cfg.output_dir);
  const auto dataset = cfg.load_dataset();
  LlmCallCounter counter;
  const auto knowledge = obtain_knowledge(cfg, dataset.metadata, counter, false, err);
  for (const auto& variant : cfg.variants) {
    const auto context = make_task_context(dataset, knowledge, cfg.embedding, variant);
    for (auto seed : cfg.seeds) {
      nn::Checkpoint start;
      if (variant.meta) {
        const auto path = pretrain_path(cfg, variant, seed);
        if (!std::filesystem::exists(path))
          throw MissingArtifactError("pretrained checkpoint " + path.string() + " does not exist; run pretrain first");
        start = nn::Checkpoint::load(path);
      } else {
        start = starting_checkpoint(dataset, context, cfg.settings, variant, seed);
      }
      for (int shot : cfg.shots) {
        const auto split = sample_few_shot(dataset, shot, few_shot_seed(seed, shot));
        for (const auto& w : split.warnings) err << "warning: " << w << "\n";
        FinetuneConfig fc = cfg.settings.finetune;
        fc.seed = mix_seed({seed, static_cast<std::uint64_t>(shot)});
        if (!variant.llm) fc.kl_weight = 0.0;
        FinetuneResult fit;
        auto tuned = finetune_checkpoint(start, dataset, split, fc, &fit);
        tuned.manifest["dataset"] = cfg.dataset.name;
        stamp(tuned, cfg, "finetune");
        const auto path = finetune_path(cfg, variant, shot, seed);
        tuned.save(path);
        out << "wrote " << path.string() << " (" << fit.epochs_run << " epochs, final loss "
            << (fit.losses.empty() ? 0.0 : fit.losses.back()) << ")\n";
      }
    }
  }
  add_to_call_ledger(cfg.output_dir, counter.snapshot());
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, bool from_checkpoints, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  OutputLock lock(cfg.output_dir);
  const auto dataset = cfg.load_dataset();
  LlmCallCounter counter;
  ExperimentReport report;
  if (from_checkpoints) {
    for (const auto& variant : cfg.variants)
      for (int shot : cfg.shots)
        for (auto seed : cfg.seeds) {
          const auto path = finetune_path(cfg, variant, shot, seed);
          if (!std::filesystem::exists(path))
            throw MissingArtifactError("fine-tuned checkpoint " + path.string() + " does not exist; run finetune first");
          auto r = score_checkpoint(nn::Checkpoint::load(path), dataset);
          r.dataset = cfg.dataset.name;
          r.variant = variant.name();
          r.shot = shot;
          r.seed = seed;
          report.results.push_back(r);
        }
  } else {
    const auto knowledge = obtain_knowledge(cfg, dataset.metadata, counter, true, err);
    auto experiment = cfg.experiment();
    experiment.artifact_dir = cfg.output_dir / "artifacts";
    report = run_experiment(dataset, knowledge, experiment, counter);
  }
  report.llm_calls = add_to_call_ledger(cfg.output_dir, counter.snapshot());
  const auto paths = default_report_paths(cfg.output_dir);
  emit_report(report, paths, parse_references(cfg.references));
  for (const auto& r : report.results)
    if (!r.error.empty())
      err << "cell " << r.variant << " shot " << r.shot << " seed " << r.seed << " failed: " << r.error << "\n";
  out << read_file(paths.aggregate);
  out << "llm calls: " << nlohmann::json(report.llm_calls).dump() << "\n";
  return kOk;
}

int cmd_report(const CommonOptions& o, std::ostream& out) {
  std::filesystem::path dir = o.output_dir;
  ReferenceTable refs;
  if (!o.config.empty()) {
    const auto cfg = RunConfig::load(o.config);
    if (dir.empty()) dir = cfg.output_dir;
    refs = parse_references(cfg.references);
  }
  if (dir.empty()) throw ConfigError("report needs --output-dir or --config");
  const auto paths = default_report_paths(dir);
  regenerate_aggregate(paths, refs);
  out << read_file(paths.aggregate);
  return kOk;
}

int cmd_synth(const std::string& kind, const std::string& dir_text, bool stub_knowledge, std::ostream& out) {
  const std::filesystem::path dir = dir_text;
  GeneratedDataset files;
  std::vector<int> shots{4, 8, 16};
  if (kind == "blobs") {
    files = write_blob_dataset(dir, {});
  } else if (kind == "identity") {
    files = write_identity_dataset(dir, {});
    shots = {4};
  } else if (kind == "regression") {
    files = write_regression_dataset(dir, {});
    shots = {16};
  } else {
    throw ConfigError("unknown synthetic dataset kind '" + kind + "' (blobs, identity, regression)");
  }
  const auto metadata = load_metadata(files.metadata);
  if (stub_knowledge) write_stub_knowledge(dir / "knowledge.json", metadata);
  const nlohmann::json config = {
      {"dataset", {{"name", kind}, {"data", files.data.filename().string()}, {"metadata", files.metadata.filename().string()}}},
      {"knowledge", {{"file", "knowledge.json"}, {"layer", kDefaultLayer}}},
      {"eval", {{"shots", shots}, {"seeds", {0, 1, 2}}, {"variants", {"full"}}}},
      {"output_dir", "out"}};
  write_file_atomic(dir / "config.json", config.dump(2) + "\n");
  out << "wrote " << files.data.string() << ", " << files.metadata.string() << " and " << (dir / "config.json").string()
      << "\n";
  return kOk;
}

}  // namespace

LlmCallSummary read_call_ledger(const std::filesystem::path& output_dir) {
  const auto path = output_dir / "llm_calls.json";
  if (!std::filesystem::exists(path)) return {};
  try {
    return nlohmann::json::parse(read_file(path)).get<LlmCallSummary>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("LLM call ledger " + path.string() + ": " + e.what());
  }
}

LlmCallSummary add_to_call_ledger(const std::filesystem::path& output_dir, const LlmCallSummary& delta) {
  auto total = read_call_ledger(output_dir);
  total.preprocessing += delta.preprocessing;
  total.training += delta.training;
  total.inference += delta.inference;
  write_file_atomic(output_dir / "llm_calls.json", nlohmann::json(total).dump(2) + "\n");
  return total;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot tabular learning with latent language-model knowledge"};
  app.name("latte");
  app.require_subcommand(1);
  CommonOptions opts;
  bool from_checkpoints = false;
  std::string synth_kind = "blobs";
  std::string synth_dir;
  bool synth_stub = false;

  auto* extract = app.add_subcommand("extract-knowledge", "extract and store the task knowledge vector");
  add_common(extract, opts);
  auto* pretrain = app.add_subcommand("pretrain", "Stage I meta-pretraining on unlabeled rows");
  add_common(pretrain, opts);
  auto* finetune = app.add_subcommand("finetune", "Stage II fine-tuning on few-shot splits");
  add_common(finetune, opts);
  auto* evaluate = app.add_subcommand("evaluate", "run the shot/seed sweep and write reports");
  add_common(evaluate, opts);
  evaluate->add_flag("--from-checkpoints", from_checkpoints, "score existing fine-tuned checkpoints");
  auto* report = app.add_subcommand("report", "rebuild the aggregate table from raw results");
  add_common(report, opts, false);
  auto* synth = app.add_subcommand("synth", "write a bundled synthetic dataset and config");
  synth->add_option("--kind", synth_kind, "blobs, identity or regression");
  synth->add_option("--output-dir", synth_dir, "target directory")->required();
  synth->add_flag("--stub-knowledge", synth_stub, "also write a stub knowledge vector");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (extract->parsed()) return cmd_extract_knowledge(opts, out);
    if (pretrain->parsed()) return cmd_pretrain(opts, out, err);
    if (finetune->parsed()) return cmd_finetune(opts, out, err);
    if (evaluate->parsed()) return cmd_evaluate(opts, from_checkpoints, out, err);
    if (report->parsed()) return cmd_report(opts, out);
    if (synth->parsed()) return cmd_synth(synth_kind, synth_dir, synth_stub, out);
  } catch (const KnowledgeFailure& e) {
    err << "error: " << e.what() << "\n";
    return kKnowledgeSource;
  } catch (const TransportError& e) {
    err << "error: " << e.what() << "\n";
    return kKnowledgeSource;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace latte::cli
