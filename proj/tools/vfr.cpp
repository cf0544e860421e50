// vfr command-line driver: discover, classify, evaluate, run-all.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vfr/vfr.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k_aug;
  std::optional<std::size_t> m_contexts;
  std::optional<double> retention_ratio;
  std::optional<std::size_t> k_override;
  std::optional<std::size_t> repeat_runs;
  std::optional<std::size_t> images_per_class;
  bool no_ccg = false;
  bool no_cnr = false;
  std::string meta_category;
  std::string names_file;
  std::string prompt_pack;
  std::string cache_dir;
};

void add_config_flags(CLI::App* cmd, Overrides& o, bool full) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
  if (!full) return;
  cmd->add_option("--mode", o.mode, "vocabulary_free | zero_shot | few_shot");
  cmd->add_option("--alpha", o.alpha, "Text/visual mixing weight");
  cmd->add_option("--k-aug", o.k_aug, "Augmented views per support image");
  cmd->add_option("--m-contexts", o.m_contexts, "Context sentences per class");
  cmd->add_option("--retention-ratio", o.retention_ratio, "Fraction of candidates kept");
  cmd->add_option("--top-k", o.k_override, "Absolute number of candidates kept");
  cmd->add_option("--images-per-class", o.images_per_class, "Train images sampled per label");
  cmd->add_flag("--no-ccg", o.no_ccg, "Disable contextual grounding");
  cmd->add_flag("--no-cnr", o.no_cnr, "Disable candidate refinement");
  cmd->add_option("--meta-category", o.meta_category, "Meta-category for zero/few-shot");
  cmd->add_option("--names", o.names_file, "Known class names, one per line")->check(CLI::ExistingFile);
  cmd->add_option("--prompt-pack", o.prompt_pack, "Prompt pack (JSON)")->check(CLI::ExistingFile);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  vfr::require(in.good(), vfr::ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    line = vfr::text::trim(line);
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

vfr::RunConfig resolve_config(const Overrides& o) {
  return vfr::run_stage("config", [&] {
    vfr::RunConfig c = o.config.empty() ? vfr::RunConfig{} : vfr::RunConfig::load(o.config);
    if (!o.config.empty() && c.prompt_pack && fs::path(*c.prompt_pack).is_relative()) {
      c.prompt_pack = (fs::path(o.config).parent_path() / *c.prompt_pack).string();
    }
    if (!o.mode.empty()) c.mode = vfr::run_mode_from_string(o.mode);
    if (o.seed) c.seed = *o.seed;
    if (o.alpha) c.alpha = *o.alpha;
    if (o.k_aug) c.k_aug = *o.k_aug;
    if (o.m_contexts) c.m_contexts = *o.m_contexts;
    if (o.retention_ratio) c.retention_ratio = *o.retention_ratio;
    if (o.k_override) c.k_override = *o.k_override;
    if (o.repeat_runs) c.repeat_runs = *o.repeat_runs;
    if (o.images_per_class) c.images_per_class_limit = *o.images_per_class;
    if (o.no_ccg) c.ccg_enabled = false;
    if (o.no_cnr) c.cnr_enabled = false;
    if (!o.meta_category.empty()) c.meta_category = o.meta_category;
    if (!o.names_file.empty()) c.known_names = read_lines(o.names_file);
    if (!o.prompt_pack.empty()) c.prompt_pack = o.prompt_pack;
    if (!o.cache_dir.empty()) c.cache_dir = o.cache_dir;
    c.validate();
    return c;
  });
}

vfr::PromptPack load_pack(const vfr::RunConfig& c) {
  return vfr::run_stage("config", [&] {
    return c.prompt_pack ? vfr::PromptPack::load(*c.prompt_pack) : vfr::PromptPack{};
  });
}

vfr::DatasetManifest load_manifest(const std::string& path) {
  return vfr::run_stage("manifest", [&] { return vfr::DatasetManifest::load(path); });
}

void print_metrics(const vfr::MetricsReport& m) {
  std::printf("cACC %.4f  sACC %.4f  (n=%zu)", m.cacc, m.sacc, m.n_images);
  if (m.filtration) std::printf("  filtration tp=%zu fn=%zu", m.filtration->tp, m.filtration->fn);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vocabulary-free image classification pipeline"};
  app.require_subcommand(1);

  Overrides o;
  std::string manifest_path, out_dir = "vfr_out", classifier_path, predictions_path, artifacts_dir;

  auto* discover = app.add_subcommand("discover", "Discover and ground class names, build the classifier");
  discover->add_option("--manifest", manifest_path, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
  discover->add_option("--out-dir", out_dir, "Artifact directory");
  add_config_flags(discover, o, true);

  auto* classify = app.add_subcommand("classify", "Classify the test split with a classifier artifact");
  classify->add_option("--manifest", manifest_path, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
  classify->add_option("--classifier", classifier_path, "classifier.json")->required()->check(CLI::ExistingFile);
  classify->add_option("--out-dir", out_dir, "Artifact directory");
  add_config_flags(classify, o, false);

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against manifest labels");
  evaluate->add_option("--predictions", predictions_path, "predictions.jsonl")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--manifest", manifest_path, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--artifacts-dir", artifacts_dir,
                       "Directory holding vocabulary/refinement/classifier artifacts (default: predictions dir)");
  evaluate->add_option("--out-dir", out_dir, "Where metrics are written (default: predictions dir)");
  add_config_flags(evaluate, o, false);

  auto* run_all = app.add_subcommand("run-all", "Full pipeline: build, classify, evaluate");
  run_all->add_option("--manifest", manifest_path, "Dataset manifest (JSONL)")->required()->check(CLI::ExistingFile);
  run_all->add_option("--out-dir", out_dir, "Artifact directory");
  run_all->add_option("--repeat-runs", o.repeat_runs, "Independent seeded runs");
  add_config_flags(run_all, o, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const vfr::RunConfig cfg = resolve_config(o);

    if (*discover) {
      const std::string started = vfr::artifacts::timestamp_now();
      vfr::ProviderSet providers(cfg);
      vfr::RunContext ctx{cfg, vfr::run_stage("manifest", [&] {
                            return vfr::prepare_manifest(vfr::DatasetManifest::load(manifest_path), cfg);
                          }),
                          load_pack(cfg), providers};
      const auto run = vfr::build_and_persist(ctx, out_dir);
      vfr::write_run_manifest(ctx, out_dir, "discover", started);
      std::printf("%zu classes -> %s\n", run.classifier.classes.size(),
                  (fs::path(out_dir) / vfr::artifacts::kClassifier).c_str());
    } else if (*classify) {
      vfr::ProviderSet providers(cfg);
      vfr::RunContext ctx{cfg, load_manifest(manifest_path), vfr::PromptPack{}, providers};
      const auto clf = vfr::run_stage("classify", [&] {
        return vfr::load_classifier(classifier_path, providers.image().fingerprint());
      });
      const auto outcome = vfr::classify_test_split(ctx, clf);
      vfr::write_predictions(out_dir, outcome);
      std::printf("%zu predictions, %zu errors -> %s\n", outcome.predictions.size(), outcome.errors,
                  (fs::path(out_dir) / vfr::artifacts::kPredictions).c_str());
    } else if (*evaluate) {
      const fs::path pred_dir = fs::path(predictions_path).parent_path();
      const fs::path adir = artifacts_dir.empty() ? pred_dir : fs::path(artifacts_dir);
      const fs::path odir = evaluate->count("--out-dir") ? fs::path(out_dir) : pred_dir;
      vfr::ProviderSet providers(cfg);
      const auto manifest = load_manifest(manifest_path);
      const auto preds = vfr::run_stage("evaluate", [&] {
        return vfr::predictions_from_records(vfr::artifacts::read_jsonl(predictions_path));
      });
      const auto vocab = vfr::run_stage("evaluate", [&] { return vfr::load_vocabulary_artifacts(adir); });
      const auto eval = vfr::evaluate_predictions(preds, manifest, providers.semantic(), vocab);
      nlohmann::json header{{"schema_version", vfr::artifacts::kSchemaVersion},
                            {"seed", cfg.seed},
                            {"config_hash", cfg.hash()}};
      if (fs::exists(adir / vfr::artifacts::kClassifier)) {
        const auto clf = vfr::artifacts::read_json(adir / vfr::artifacts::kClassifier);
        header["seed"] = clf.at("seed");
        header["config_hash"] = clf.at("config_hash");
      }
      vfr::write_evaluation(odir, header, eval);
      print_metrics(eval.metrics);
    } else {
      const auto manifest = load_manifest(manifest_path);
      const auto runs = vfr::run_all(cfg, manifest, load_pack(cfg), out_dir);
      for (const auto& r : runs) {
        std::printf("seed %llu: ", static_cast<unsigned long long>(r.seed));
        if (r.metrics) {
          print_metrics(*r.metrics);
        } else {
          std::printf("no labelled test split, metrics skipped\n");
        }
      }
    }
  } catch (const vfr::StageError& e) {
    std::fprintf(stderr, "vfr: %s\n", e.what());
    return 2;
  } catch (const vfr::Error& e) {
    std::fprintf(stderr, "vfr: [stage=io] %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vfr: [stage=internal] %s\n", e.what());
    return 3;
  }
  return 0;
}
