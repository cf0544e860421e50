#pragma once

// End-to-end orchestration of the three run modes and the artifact set they
// persist. Stage failures escape as StageError carrying the stage tag.

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/classifier.hpp"
#include "vfr/discovery.hpp"
#include "vfr/evaluation.hpp"
#include "vfr/grounding.hpp"
#include "vfr/refinement.hpp"
#include "vfr/runner/artifacts.hpp"
#include "vfr/runner/config.hpp"
#include "vfr/runner/manifest.hpp"
#include "vfr/runner/providers.hpp"

namespace vfr {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

struct RunContext {
  RunConfig config;
  DatasetManifest manifest;
  PromptPack pack;
  ProviderSet& providers;
  std::vector<nlohmann::json> stage_log{};

  void log_stage(const std::string& stage) {
    stage_log.push_back({{"stage", stage}, {"provider_calls", providers.call_counts()}});
  }

  nlohmann::json run_header() const {
    return {{"schema_version", artifacts::kSchemaVersion},
            {"seed", config.seed},
            {"config_hash", config.hash()}};
  }
};

struct DiscoverOutputs {
  MetaCategory meta;
  AttributeTable attributes;
  std::vector<std::string> train_images;  // manifest paths, attribute row order
  std::vector<std::string> candidates;
  std::vector<ContextSet> contexts;
  std::vector<ScoredCandidate> refined;         // scored with the filtration embedder
  std::vector<EmbeddingVector> train_embeddings;  // raw, filtration image embedder
};

inline std::vector<ContextSet> build_contexts(RunContext& ctx, const std::vector<std::string>& names,
                                              const MetaCategory& g) {
  std::vector<ContextSet> out(names.size());
  if (!ctx.config.ccg_enabled) {
    for (std::size_t i = 0; i < names.size(); ++i) out[i] = ContextSet{names[i], {}, 0};
    return out;
  }
  const GroundingOptions opts = ctx.config.grounding();
  parallel_for(names.size(), ctx.config.max_parallel_requests, [&](std::size_t i) {
    out[i] = generate_contexts(names[i], g, ctx.providers.chat(), opts, ctx.pack);
  });
  return out;
}

inline std::vector<GroundedClass> ground_all(RunContext& ctx, const std::vector<ContextSet>& contexts,
                                             const MetaCategory& g, TextEmbedder& embedder) {
  std::vector<std::optional<GroundedClass>> slots(contexts.size());
  parallel_for(contexts.size(), ctx.config.max_parallel_requests, [&](std::size_t i) {
    slots[i] = ground_with(contexts[i], g, embedder, ctx.config.renormalize_prototypes);
  });
  std::vector<GroundedClass> out;
  for (auto& s : slots) out.push_back(*std::move(s));
  return out;
}

/// Discovery -> grounding -> refinement for the vocabulary-free mode.
inline DiscoverOutputs run_discovery(RunContext& ctx) {
  DiscoverOutputs out;
  const auto train = ctx.manifest.images(Split::Train);
  for (const auto& t : train) out.train_images.push_back(t.label);
  const DiscoveryOptions dopts{ctx.config.max_parallel_requests};

  run_stage("discovery", [&] {
    require(!train.empty(), ErrorCode::EmptyTrainSet, "manifest has no train entries");
    auto d = discover(train, ctx.providers.vqa(), ctx.providers.chat(), ctx.pack, dopts);
    out.meta = d.meta;
    out.attributes = std::move(d.attributes);
    out.candidates = std::move(d.candidates.names);
  });
  ctx.log_stage("discovery");

  std::vector<GroundedClass> grounded;
  run_stage("grounding", [&] {
    out.contexts = build_contexts(ctx, out.candidates, out.meta);
    grounded = ground_all(ctx, out.contexts, out.meta, ctx.providers.filter_text());
  });
  ctx.log_stage("grounding");

  run_stage("refinement", [&] {
    out.train_embeddings =
        embed_images(train, ctx.providers.filter_image(), ctx.config.max_parallel_requests);
    out.refined = filter_top_k(score_candidates(std::move(grounded), out.train_embeddings),
                               ctx.config.refinement());
  });
  ctx.log_stage("refinement");
  return out;
}

inline nlohmann::json vocabulary_json(const RunContext& ctx, const MetaCategory& meta,
                                      const std::vector<std::string>& candidates,
                                      const std::string& source,
                                      const DiscoverOutputs* discovered = nullptr) {
  nlohmann::json j = ctx.run_header();
  j["mode"] = to_string(ctx.config.mode);
  j["source"] = source;
  j["meta_category"] = {{"name", meta.name}, {"support_count", meta.support_count}};
  j["candidates"] = candidates;
  j["candidate_count"] = candidates.size();
  if (discovered) {
    nlohmann::json attrs = nlohmann::json::array();
    for (std::size_t i = 0; i < discovered->attributes.per_image.size(); ++i) {
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& p : discovered->attributes.per_image[i]) {
        pairs.push_back({{"key", p.key}, {"value", p.value}});
      }
      attrs.push_back({{"image", discovered->train_images.at(i)}, {"attributes", pairs}});
    }
    j["attributes"] = attrs;
    j["attribute_answers_dropped"] = discovered->attributes.dropped;
  }
  return j;
}

inline void write_contexts(const std::filesystem::path& out_dir, const std::vector<ContextSet>& contexts) {
  std::vector<nlohmann::json> records;
  for (const auto& c : contexts) records.push_back(context_record(c));
  artifacts::write_atomic(out_dir / artifacts::kContexts, artifacts::jsonl_text(records));
}

inline void write_discovery_artifacts(const RunContext& ctx, const std::filesystem::path& out_dir,
                                      const DiscoverOutputs& d) {
  artifacts::write_atomic(out_dir / artifacts::kVocabulary,
                          artifacts::json_text(vocabulary_json(ctx, d.meta, d.candidates, "discovered", &d)));
  write_contexts(out_dir, d.contexts);
  artifacts::write_atomic(out_dir / artifacts::kRefinement,
                          artifacts::json_text(refinement_report(d.refined)));
}

/// Coupled classifier over the retained candidates, grounded under the
/// inference embedder.
inline CoupledClassifier build_from_discovery(RunContext& ctx, const DiscoverOutputs& d) {
  return run_stage("classifier", [&] {
    std::vector<GroundedClass> retained;
    std::vector<ContextSet> retained_contexts;
    for (std::size_t i = 0; i < d.refined.size(); ++i) {
      if (!d.refined[i].retained) continue;
      retained.push_back(d.refined[i].grounded);
      retained_contexts.push_back(d.refined[i].grounded.context);
    }
    precondition(!retained.empty(), "refinement retained no classes");
    const auto train = ctx.manifest.images(Split::Train);
    std::vector<EmbeddingVector> train_embeddings;
    if (ctx.providers.filter_shared()) {
      train_embeddings = d.train_embeddings;
    } else {
      retained = ground_all(ctx, retained_contexts, d.meta, ctx.providers.text());
      train_embeddings = embed_images(train, ctx.providers.image(), ctx.config.max_parallel_requests);
    }
    const auto assignment = pseudo_label(train, train_embeddings, retained);
    return assemble(retained, assignment, ctx.providers.image(), ctx.config.classifier(),
                    RunMode::VocabularyFree);
  });
}

inline MetaCategory configured_meta(const RunContext& ctx) {
  require(ctx.config.meta_category.has_value() && !ctx.config.meta_category->empty(),
          ErrorCode::InvalidConfig, "zero_shot mode needs meta_category in the config");
  return MetaCategory(*ctx.config.meta_category, 0);
}

struct AssembledRun {
  CoupledClassifier classifier;
  nlohmann::json vocabulary;
  std::optional<DiscoverOutputs> discovered;
  std::vector<ContextSet> contexts;
};

inline AssembledRun assemble_zero_shot(RunContext& ctx) {
  AssembledRun run;
  MetaCategory g;
  std::vector<std::string> names;
  run_stage("grounding", [&] {
    g = configured_meta(ctx);
    names = dedupe_names(ctx.config.known_names);
    precondition(!names.empty(), "zero_shot mode needs known_names");
    run.contexts = build_contexts(ctx, names, g);
  });
  ctx.log_stage("grounding");
  run.classifier = run_stage("classifier", [&] {
    const auto grounded = ground_all(ctx, run.contexts, g, ctx.providers.text());
    return build_zero_shot(grounded, ctx.providers.image().fingerprint(), ctx.config.classifier());
  });
  run.vocabulary = vocabulary_json(ctx, g, names, "given");
  return run;
}

inline AssembledRun assemble_few_shot(RunContext& ctx) {
  AssembledRun run;
  MetaCategory g;
  std::vector<std::pair<ImageRef, std::string>> support;
  std::vector<std::string> labels;
  run_stage("discovery", [&] {
    for (const auto* e : ctx.manifest.split(Split::Train)) {
      precondition(e->gt_label.has_value(),
                   "few_shot mode needs a gt_label on every train entry ('" + e->image_path + "')");
      support.emplace_back(ctx.manifest.image_ref(*e), *e->gt_label);
    }
    require(!support.empty(), ErrorCode::EmptyTrainSet, "few_shot mode needs labelled train entries");
    std::set<std::string> unique;
    for (const auto& [_, label] : support) unique.insert(label);
    labels.assign(unique.begin(), unique.end());
    if (ctx.config.meta_category && !ctx.config.meta_category->empty()) {
      g = MetaCategory(*ctx.config.meta_category, 0);
    } else {
      std::vector<ImageRef> images;
      for (const auto& [image, _] : support) images.push_back(image);
      g = infer_meta_category(images, ctx.providers.vqa(), ctx.providers.chat(), ctx.pack,
                              {ctx.config.max_parallel_requests});
    }
  });
  ctx.log_stage("discovery");
  run_stage("grounding", [&] { run.contexts = build_contexts(ctx, labels, g); });
  ctx.log_stage("grounding");
  run.classifier = run_stage("classifier", [&] {
    const auto grounded = ground_all(ctx, run.contexts, g, ctx.providers.text());
    return build_few_shot(support, grounded, ctx.providers.image(), ctx.config.classifier());
  });
  run.vocabulary = vocabulary_json(ctx, g, labels, "labels");
  return run;
}

inline nlohmann::json classifier_artifact(const RunContext& ctx, const CoupledClassifier& clf) {
  nlohmann::json j = classifier_to_json(clf);
  j.update(ctx.run_header());
  return j;
}

inline CoupledClassifier load_classifier(const std::filesystem::path& path,
                                         const ProviderFingerprint& expected_embedder) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(artifacts::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ClassifierArtifactCorrupt, path.string() + ": " + e.what());
  }
  CoupledClassifier clf = classifier_from_json(j);
  require(clf.embedder == expected_embedder, ErrorCode::FingerprintMismatch,
          "classifier was built with embedder " + to_json(clf.embedder).dump() +
              " but classification uses " + to_json(expected_embedder).dump());
  return clf;
}

struct ClassifyOutcome {
  std::vector<Prediction> predictions;
  std::vector<nlohmann::json> records;  // predictions and per-image errors, input order
  std::size_t errors = 0;
};

/// One record per test entry; unreadable images become error records.
inline ClassifyOutcome classify_test_split(RunContext& ctx, const CoupledClassifier& clf) {
  return run_stage("classify", [&] {
    const auto test = ctx.manifest.images(Split::Test);
    precondition(!test.empty(), "manifest has no test entries");
    std::vector<std::optional<Prediction>> preds(test.size());
    std::vector<std::optional<std::string>> errors(test.size());
    parallel_for(test.size(), ctx.config.max_parallel_requests, [&](std::size_t i) {
      try {
        preds[i] = classify(test[i], clf, ctx.providers.image());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ImageUnreadable) throw;
        errors[i] = e.what();
      }
    });
    ClassifyOutcome out;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (preds[i]) {
        out.records.push_back(prediction_to_json(*preds[i]));
        out.predictions.push_back(*std::move(preds[i]));
      } else {
        ++out.errors;
        out.records.push_back({{"image", test[i].label},
                               {"error", std::string(to_string(ErrorCode::ImageUnreadable))},
                               {"message", *errors[i]}});
      }
    }
    return out;
  });
}

inline std::vector<Prediction> predictions_from_records(const std::vector<nlohmann::json>& records) {
  std::vector<Prediction> out;
  for (const auto& r : records) {
    if (r.contains("error")) continue;
    out.push_back({r.at("image").get<std::string>(), r.at("predicted").get<std::string>(),
                   r.at("similarity").get<double>(), r.at("runner_up_margin").get<double>()});
  }
  return out;
}

struct VocabularyArtifacts {
  std::vector<std::string> candidates;
  std::vector<std::string> retained;
};

/// Reads vocabulary + refinement artifacts when both exist in `dir`.
inline std::optional<VocabularyArtifacts> load_vocabulary_artifacts(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / artifacts::kVocabulary) ||
      !std::filesystem::exists(dir / artifacts::kRefinement)) {
    return std::nullopt;
  }
  VocabularyArtifacts v;
  v.candidates = artifacts::read_json(dir / artifacts::kVocabulary)
                     .at("candidates")
                     .get<std::vector<std::string>>();
  for (const auto& r : artifacts::read_json(dir / artifacts::kRefinement)) {
    if (r.at("retained").get<bool>()) v.retained.push_back(r.at("class").get<std::string>());
  }
  return v;
}

struct EvaluationOutcome {
  MetricsReport metrics;
  std::string per_image_csv;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

inline EvaluationOutcome evaluate_predictions(const std::vector<Prediction>& predictions,
                                              const DatasetManifest& manifest, TextEmbedder& semantic,
                                              const std::optional<VocabularyArtifacts>& vocab) {
  return run_stage("evaluate", [&] {
    std::vector<std::string> preds, gts, missing;
    for (const auto& p : predictions) {
      const auto* e = manifest.find(p.image);
      if (!e || !e->gt_label) {
        missing.push_back(p.image);
        continue;
      }
      preds.push_back(p.predicted_name);
      gts.push_back(*e->gt_label);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw Error(ErrorCode::MissingGroundTruth, "no gt_label for: " + list);
    }
    std::vector<double> per_image;
    EvaluationOutcome out;
    out.metrics = evaluate(preds, gts, semantic, &per_image);
    if (vocab) {
      const auto labels = manifest.gt_label_set();
      out.metrics.filtration = filtration_sensitivity(vocab->candidates, vocab->retained, labels);
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "image,predicted,gt,sem_similarity\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
      csv << csv_field(predictions[i].image) << ',' << csv_field(preds[i]) << ',' << csv_field(gts[i])
          << ',' << per_image[i] << '\n';
    }
    out.per_image_csv = csv.str();
    return out;
  });
}

inline nlohmann::json metrics_artifact(const nlohmann::json& header, const MetricsReport& m) {
  nlohmann::json j = metrics_to_json(m);
  j.update(header);
  return j;
}

struct RunSummary {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> metrics;
};

/// Artifact file names (sorted) mapped to their SHA-256.
inline nlohmann::json artifact_digests(const std::filesystem::path& dir) {
  nlohmann::json j = nlohmann::json::object();
  for (const char* name : {artifacts::kVocabulary, artifacts::kContexts, artifacts::kRefinement,
                           artifacts::kClassifier, artifacts::kPredictions, artifacts::kMetrics,
                           artifacts::kPerImage}) {
    if (std::filesystem::exists(dir / name)) j[name] = sha256_hex(artifacts::read_file(dir / name));
  }
  return j;
}

/// Builds the classifier for the configured mode and persists vocabulary,
/// contexts, refinement (vocabulary-free only) and classifier artifacts.
inline AssembledRun build_and_persist(RunContext& ctx, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  AssembledRun run;
  switch (ctx.config.mode) {
    case RunMode::VocabularyFree: {
      auto d = run_discovery(ctx);
      write_discovery_artifacts(ctx, out_dir, d);
      run.classifier = build_from_discovery(ctx, d);
      run.discovered = std::move(d);
      break;
    }
    case RunMode::ZeroShot:
      run = assemble_zero_shot(ctx);
      break;
    case RunMode::FewShot:
      run = assemble_few_shot(ctx);
      break;
  }
  ctx.log_stage("classifier");
  if (!run.discovered) {
    artifacts::write_atomic(out_dir / artifacts::kVocabulary, artifacts::json_text(run.vocabulary));
    write_contexts(out_dir, run.contexts);
  }
  artifacts::write_atomic(out_dir / artifacts::kClassifier,
                          artifacts::json_text(classifier_artifact(ctx, run.classifier)));
  return run;
}

inline void write_run_manifest(const RunContext& ctx, const std::filesystem::path& out_dir,
                               const std::string& command, const std::string& started,
                               std::optional<std::size_t> classify_errors = std::nullopt) {
  nlohmann::json manifest = ctx.run_header();
  manifest["tool"] = "vfr";
  manifest["command"] = command;
  manifest["mode"] = to_string(ctx.config.mode);
  manifest["config"] = ctx.config.to_json();
  manifest["prompt_pack_version"] = ctx.pack.version;
  manifest["providers"] = ctx.providers.fingerprints();
  nlohmann::json train = nlohmann::json::array();
  for (const auto* e : ctx.manifest.split(Split::Train)) train.push_back(e->image_path);
  manifest["train_images"] = train;
  manifest["images_per_class_limit"] =
      ctx.config.images_per_class_limit ? nlohmann::json(*ctx.config.images_per_class_limit) : nlohmann::json(nullptr);
  manifest["test_image_count"] = ctx.manifest.split(Split::Test).size();
  manifest["classify_errors"] = classify_errors ? nlohmann::json(*classify_errors) : nlohmann::json(nullptr);
  manifest["provider_calls"] = ctx.providers.call_counts();
  manifest["stages"] = ctx.stage_log;
  manifest["artifacts"] = artifact_digests(out_dir);
  manifest["started_at"] = started;
  manifest["finished_at"] = artifacts::timestamp_now();
  artifacts::write_atomic(out_dir / artifacts::kRunManifest, artifacts::json_text(manifest));
}

inline void write_predictions(const std::filesystem::path& out_dir, const ClassifyOutcome& outcome) {
  artifacts::write_atomic(out_dir / artifacts::kPredictions, artifacts::jsonl_text(outcome.records));
}

inline void write_evaluation(const std::filesystem::path& out_dir, const nlohmann::json& header,
                             const EvaluationOutcome& eval) {
  artifacts::write_atomic(out_dir / artifacts::kMetrics,
                          artifacts::json_text(metrics_artifact(header, eval.metrics)));
  artifacts::write_atomic(out_dir / artifacts::kPerImage, eval.per_image_csv);
}

/// One seeded pass: build classifier per mode, classify, evaluate when every
/// test entry is labelled, and persist the full artifact set.
inline RunSummary run_single(RunContext& ctx, const std::filesystem::path& out_dir) {
  const std::string started = artifacts::timestamp_now();
  RunSummary summary{out_dir, ctx.config.seed, std::nullopt};
  const AssembledRun run = build_and_persist(ctx, out_dir);

  const auto outcome = classify_test_split(ctx, run.classifier);
  write_predictions(out_dir, outcome);
  ctx.log_stage("classify");

  bool all_labelled = true;
  for (const auto* e : ctx.manifest.split(Split::Test)) all_labelled = all_labelled && e->gt_label;
  if (all_labelled && !outcome.predictions.empty()) {
    std::optional<VocabularyArtifacts> vocab;
    if (run.discovered) {
      vocab = VocabularyArtifacts{run.discovered->candidates, retained_names(run.discovered->refined)};
    }
    const auto eval = evaluate_predictions(outcome.predictions, ctx.manifest, ctx.providers.semantic(), vocab);
    write_evaluation(out_dir, ctx.run_header(), eval);
    summary.metrics = eval.metrics;
    ctx.log_stage("evaluate");
  }
  write_run_manifest(ctx, out_dir, "run-all", started, outcome.errors);
  return summary;
}

/// Applies seeded low-resource sampling when a per-class limit is set.
inline DatasetManifest prepare_manifest(const DatasetManifest& manifest, const RunConfig& cfg) {
  if (!cfg.images_per_class_limit) return manifest;
  return manifest.sample_train(*cfg.images_per_class_limit, cfg.seed);
}

inline nlohmann::json aggregate_json(const std::vector<RunSummary>& runs) {
  nlohmann::json per_run = nlohmann::json::array();
  std::vector<double> cacc, sacc;
  for (const auto& r : runs) {
    nlohmann::json entry{{"seed", r.seed}, {"out_dir", r.out_dir.filename().string()}};
    if (r.metrics) {
      entry["cacc"] = r.metrics->cacc;
      entry["sacc"] = r.metrics->sacc;
      cacc.push_back(r.metrics->cacc);
      sacc.push_back(r.metrics->sacc);
    }
    per_run.push_back(entry);
  }
  auto stats = [](const std::vector<double>& v) -> nlohmann::json {
    if (v.empty()) return nullptr;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return {{"mean", mean}, {"stddev", sd}};
  };
  return {{"schema_version", artifacts::kSchemaVersion},
          {"runs", per_run},
          {"cacc", stats(cacc)},
          {"sacc", stats(sacc)}};
}

/// Runs `repeat_runs` passes with seeds seed, seed+1, ...; a single run
/// writes straight into `out_dir`, repeats go to run_000, run_001, ... plus
/// aggregate.json.
inline std::vector<RunSummary> run_all(const RunConfig& base, const DatasetManifest& manifest,
                                       const PromptPack& pack, const std::filesystem::path& out_dir) {
  base.validate();
  std::vector<RunSummary> runs;
  for (std::size_t r = 0; r < base.repeat_runs; ++r) {
    RunConfig cfg = base;
    cfg.seed = base.seed + r;
    ProviderSet providers(cfg);
    RunContext ctx{cfg, run_stage("manifest", [&] { return prepare_manifest(manifest, cfg); }), pack,
                   providers};
    char sub[32];
    std::snprintf(sub, sizeof sub, "run_%03zu", r);
    runs.push_back(run_single(ctx, base.repeat_runs == 1 ? out_dir : out_dir / sub));
  }
  if (base.repeat_runs > 1) {
    artifacts::write_atomic(out_dir / artifacts::kAggregate, artifacts::json_text(aggregate_json(runs)));
  }
  return runs;
}

}  // namespace vfr
