#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"

using namespace vfr;
using vfr::testing::expect_code;
using vfr::testing::fixture_dir;
using vfr::testing::slurp;
using vfr::testing::TempDir;

namespace fs = std::filesystem;

namespace {

DatasetManifest parse_manifest(const std::string& text, const fs::path& base = {}) {
  std::istringstream in(text);
  return DatasetManifest::parse(in, base);
}

RunConfig fixture_config() { return RunConfig::load(fixture_dir() / "config.json"); }
DatasetManifest fixture_manifest() { return DatasetManifest::load(fixture_dir() / "manifest.jsonl"); }

std::string entry(const std::string& path, const std::string& split, const std::string& label = {}) {
  nlohmann::json j{{"image_path", path}, {"split", split}};
  j["gt_label"] = label.empty() ? nlohmann::json(nullptr) : nlohmann::json(label);
  return j.dump() + "\n";
}

/// Runs a stage and returns the StageError it raised.
template <typename Fn>
StageError expect_stage_error(Fn&& fn) {
  try {
    fn();
  } catch (const StageError& e) {
    return e;
  }
  ADD_FAILURE() << "expected a StageError";
  return StageError("none", Error(ErrorCode::IoError, "none"));
}

struct CliResult {
  int status = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string("'") + VFR_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(log)};
}

}  // namespace

// ---- manifest ------------------------------------------------------------

TEST(Manifest, ParsesEntries) {
  const auto m = parse_manifest(entry("a.png", "train", "Cat") + "\n" + entry("b.png", "test"));
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].gt_label, "Cat");
  EXPECT_FALSE(m.entries[1].gt_label);
  EXPECT_EQ(m.split(Split::Test).size(), 1u);
  EXPECT_EQ(m.gt_label_set(), std::vector<std::string>{"Cat"});
}

TEST(Manifest, RejectsOverlapBadSplitAndJunk) {
  expect_code(ErrorCode::InvalidManifest, [] { parse_manifest(entry("a.png", "train") + entry("a.png", "test")); });
  expect_code(ErrorCode::InvalidManifest, [] { parse_manifest(entry("a.png", "validation")); });
  expect_code(ErrorCode::InvalidManifest, [] { parse_manifest("{not json}\n"); });
  expect_code(ErrorCode::InvalidManifest, [] { parse_manifest("{\"split\": \"train\"}\n"); });
  expect_code(ErrorCode::IoError, [] { DatasetManifest::load("/nonexistent/manifest.jsonl"); });
}

TEST(Manifest, PerClassLimitAndSeededSampling) {
  std::string text;
  for (int i = 0; i < 6; ++i) text += entry("a" + std::to_string(i), "train", "A");
  for (int i = 0; i < 2; ++i) text += entry("b" + std::to_string(i), "train", "B");
  text += entry("u", "train") + entry("t", "test", "A");
  const auto m = parse_manifest(text);
  auto limited = m;
  limited.images_per_class_limit = 3;
  expect_code(ErrorCode::InvalidManifest, [&] { limited.validate(); });

  const auto s1 = m.sample_train(3, 1);
  EXPECT_EQ(s1.entries.size(), 3u + 2u + 2u);
  EXPECT_EQ(s1.images_per_class_limit, 3u);
  EXPECT_NE(s1.find("u"), nullptr);
  EXPECT_NE(s1.find("t"), nullptr);
  std::vector<std::string> a1, a2;
  for (const auto& e : s1.entries) a1.push_back(e.image_path);
  for (const auto& e : m.sample_train(3, 1).entries) a2.push_back(e.image_path);
  EXPECT_EQ(a1, a2);
  bool some_seed_differs = false;
  for (std::uint64_t seed = 2; seed < 10 && !some_seed_differs; ++seed) {
    std::vector<std::string> other;
    for (const auto& e : m.sample_train(3, seed).entries) other.push_back(e.image_path);
    some_seed_differs = other != a1;
  }
  EXPECT_TRUE(some_seed_differs);
}

TEST(Manifest, RelativePathsResolveAgainstManifestDir) {
  const auto m = fixture_manifest();
  const auto img = m.image_ref(m.entries.front());
  EXPECT_EQ(img.label, "images/pine_warbler_1.mockimg");
  EXPECT_TRUE(fs::exists(img.location));
}

// ---- config --------------------------------------------------------------

TEST(Config, DefaultsAndOverrides) {
  const auto c = RunConfig::from_json({{"alpha", 0.5}, {"k_override", 3}, {"providers", {{"vlm", {{"dim", 16}}}}}});
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.k_aug, 10u);
  EXPECT_EQ(c.m_contexts, 100u);
  EXPECT_EQ(c.retention_ratio, 0.8);
  EXPECT_EQ(c.k_override, 3u);
  EXPECT_EQ(c.providers.vlm.dim, 16u);
  EXPECT_EQ(c.providers.vlm.model, "mock-clip-b16");
  EXPECT_EQ(c.providers.filtration(), c.providers.vlm);
}

TEST(Config, Validation) {
  for (const auto& bad : {nlohmann::json{{"alpha", 1.5}}, nlohmann::json{{"k_aug", 0}},
                          nlohmann::json{{"retention_ratio", 0.0}}, nlohmann::json{{"mode", "open_world"}},
                          nlohmann::json{{"alpha", "high"}}, nlohmann::json{{"providers", {{"chat", {{"kind", "grpc"}}}}}},
                          nlohmann::json{{"providers", {{"vlm", {{"dim", 0}}}}}}}) {
    expect_code(ErrorCode::InvalidConfig, [&] { RunConfig::from_json(bad); });
  }
}

TEST(Config, HashTracksResultRelevantFieldsOnly) {
  RunConfig a, b;
  b.cache_dir = "/tmp/elsewhere";
  b.max_parallel_requests = 1;
  EXPECT_EQ(a.hash(), b.hash());
  b.alpha = 0.6;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, FixtureLoads) {
  const auto c = fixture_config();
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.mode, RunMode::VocabularyFree);
}

TEST(PromptPack, ShippedFileMatchesBuiltIn) {
  EXPECT_EQ(PromptPack::load(vfr::testing::source_dir() / "data" / "prompt_pack.json").to_json(), PromptPack{}.to_json());
  PromptPack partial = PromptPack::from_json({{"version", "2"}, {"repair_instruction", "List only."}});
  EXPECT_EQ(partial.version, "2");
  EXPECT_EQ(partial.meta_question, PromptPack{}.meta_question);
}

// ---- pipeline ------------------------------------------------------------

TEST(Pipeline, DiscoverIsByteDeterministic) {
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    const auto cfg = fixture_config();
    ProviderSet providers(cfg);
    RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
    build_and_persist(ctx, dir->path());
  }
  for (const char* name : {artifacts::kVocabulary, artifacts::kContexts, artifacts::kRefinement, artifacts::kClassifier}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    EXPECT_FALSE(slurp(a / name).empty()) << name;
  }
  const auto vocab = artifacts::read_json(a / artifacts::kVocabulary);
  EXPECT_EQ(vocab.at("seed"), 42);
  EXPECT_EQ(vocab.at("schema_version"), 1);
  EXPECT_EQ(vocab.at("meta_category").at("name"), "bird");
  EXPECT_EQ(vocab.at("attributes").size(), 9u);
}

TEST(Pipeline, CnrOffRetainsEveryCandidate) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.cnr_enabled = false;
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  build_and_persist(ctx, dir.path());
  for (const auto& r : artifacts::read_json(dir / artifacts::kRefinement)) EXPECT_TRUE(r.at("retained").get<bool>());
}

TEST(Pipeline, CcgOffEmbedsOneStringPerClass) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.ccg_enabled = false;
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  const auto d = run_discovery(ctx);
  EXPECT_EQ(providers.text_counter().inputs(), d.candidates.size());
  EXPECT_EQ(providers.chat_counter().calls(), 1u);
  for (const auto& c : d.contexts) EXPECT_TRUE(c.sentences.empty());
}

TEST(Pipeline, EmptyTrainSetIsStageTagged) {
  TempDir dir;
  const auto cfg = fixture_config();
  ProviderSet providers(cfg);
  RunContext ctx{cfg, parse_manifest(entry("t.png", "test", "A")), PromptPack{}, providers};
  const auto e = expect_stage_error([&] { build_and_persist(ctx, dir.path()); });
  EXPECT_EQ(e.stage(), "discovery");
  EXPECT_EQ(e.code(), ErrorCode::EmptyTrainSet);
}

TEST(Pipeline, UnreadableTestImageBecomesErrorRecord) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 10; ++i) {
    const std::string name = "t" + std::to_string(i) + ".img";
    if (i != 4) vfr::testing::mock_image(dir.path(), name);
    text += entry(name, "test");
  }
  RunConfig cfg;
  ProviderSet providers(cfg);
  RunContext ctx{cfg, parse_manifest(text, dir.path()), PromptPack{}, providers};
  CoupledClassifier clf;
  clf.embedder = providers.image().fingerprint();
  clf.classes.push_back({"only", embed_one(providers.text(), "only"), std::nullopt, embed_one(providers.text(), "only")});
  const auto out = classify_test_split(ctx, clf);
  EXPECT_EQ(out.predictions.size(), 9u);
  EXPECT_EQ(out.errors, 1u);
  ASSERT_EQ(out.records.size(), 10u);
  EXPECT_EQ(out.records[4].at("image"), "t4.img");
  EXPECT_EQ(out.records[4].at("error"), "ImageUnreadable");
  for (const auto& p : out.predictions) EXPECT_EQ(p.predicted_name, "only");
  EXPECT_EQ(predictions_from_records(out.records).size(), 9u);
  // Rerun on the same artifact yields identical records.
  EXPECT_EQ(classify_test_split(ctx, clf).records, out.records);
}

TEST(Pipeline, ClassifierFingerprintMustMatch) {
  TempDir dir;
  const auto cfg = fixture_config();
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  build_and_persist(ctx, dir.path());
  const auto path = dir / artifacts::kClassifier;
  EXPECT_NO_THROW(load_classifier(path, providers.image().fingerprint()));
  const ProviderFingerprint other(ProviderKind::ImageEmbed, "mock://local", "other-clip", 64);
  expect_code(ErrorCode::FingerprintMismatch, [&] { load_classifier(path, other); });
  vfr::testing::write_file(dir / "broken.json", "{\"mode\": ");
  expect_code(ErrorCode::ClassifierArtifactCorrupt, [&] { load_classifier(dir / "broken.json", other); });
}

TEST(Pipeline, EvaluateNeedsLabels) {
  const auto m = parse_manifest(entry("a", "test", "A") + entry("b", "test"));
  mock::MockTextEmbedder sem("sem", 8);
  const std::vector<Prediction> preds{{"a", "A", 1.0, 0.0}, {"b", "A", 1.0, 0.0}};
  const auto e = expect_stage_error([&] { evaluate_predictions(preds, m, sem, std::nullopt); });
  EXPECT_EQ(e.code(), ErrorCode::MissingGroundTruth);
  EXPECT_NE(std::string(e.what()).find(": b"), std::string::npos);
  const std::vector<Prediction> ok{preds[0]};
  const auto out = evaluate_predictions(ok, m, sem, std::nullopt);
  EXPECT_EQ(out.metrics.cacc, 1.0);
  EXPECT_EQ(out.per_image_csv, "image,predicted,gt,sem_similarity\na,A,A,1\n");
}

TEST(Pipeline, ArtifactsSufficeForClassifyAndEvaluate) {
  TempDir dir, again;
  const auto cfg = fixture_config();
  const auto runs = run_all(cfg, fixture_manifest(), PromptPack{}, dir.path());
  ASSERT_EQ(runs.size(), 1u);
  ASSERT_TRUE(runs[0].metrics);

  // Fresh providers, only the persisted files.
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  const auto clf = load_classifier(dir / artifacts::kClassifier, providers.image().fingerprint());
  const auto outcome = classify_test_split(ctx, clf);
  write_predictions(again.path(), outcome);
  EXPECT_EQ(slurp(again / artifacts::kPredictions), slurp(dir / artifacts::kPredictions));
  const auto eval = evaluate_predictions(predictions_from_records(artifacts::read_jsonl(dir / artifacts::kPredictions)),
                                         ctx.manifest, providers.semantic(), load_vocabulary_artifacts(dir.path()));
  write_evaluation(again.path(), ctx.run_header(), eval);
  EXPECT_EQ(slurp(again / artifacts::kMetrics), slurp(dir / artifacts::kMetrics));
  EXPECT_EQ(slurp(again / artifacts::kPerImage), slurp(dir / artifacts::kPerImage));

  const auto manifest = artifacts::read_json(dir / artifacts::kRunManifest);
  EXPECT_EQ(manifest.at("config_hash"), cfg.hash());
  for (const auto& [name, digest] : manifest.at("artifacts").items()) {
    EXPECT_EQ(digest, sha256_hex(slurp(dir / name))) << name;
  }
  EXPECT_EQ(manifest.at("artifacts").size(), 7u);
}

TEST(Pipeline, RepeatRunsWriteAggregate) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.repeat_runs = 3;
  const auto runs = run_all(cfg, fixture_manifest(), PromptPack{}, dir.path());
  ASSERT_EQ(runs.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(runs[r].seed, 42u + r);
    EXPECT_TRUE(fs::exists(runs[r].out_dir / artifacts::kMetrics));
  }
  const auto agg = artifacts::read_json(dir / artifacts::kAggregate);
  ASSERT_EQ(agg.at("runs").size(), 3u);
  double mean = 0.0;
  for (const auto& r : runs) mean += r.metrics->cacc / 3.0;
  EXPECT_NEAR(agg.at("cacc").at("mean").get<double>(), mean, 1e-12);
  double var = 0.0;
  for (const auto& r : runs) var += (r.metrics->cacc - mean) * (r.metrics->cacc - mean) / 2.0;
  EXPECT_NEAR(agg.at("cacc").at("stddev").get<double>(), std::sqrt(var), 1e-12);
  EXPECT_NE(slurp(runs[0].out_dir / artifacts::kContexts), slurp(runs[1].out_dir / artifacts::kContexts));
}

TEST(Pipeline, ZeroShotMakesNoVqaCalls) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.mode = RunMode::ZeroShot;
  cfg.meta_category = "bird";
  cfg.known_names = {"Pine Warbler", "Black Tern", "Blue Jay", "blue jay"};
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  const auto summary = run_single(ctx, dir.path());
  EXPECT_EQ(providers.vqa_counter().calls(), 0u);
  EXPECT_EQ(providers.image_counter().augmented_calls(), 0u);
  const auto vocab = artifacts::read_json(dir / artifacts::kVocabulary);
  EXPECT_EQ(vocab.at("candidates").size(), 3u);
  EXPECT_EQ(vocab.at("source"), "given");
  EXPECT_FALSE(fs::exists(dir / artifacts::kRefinement));
  ASSERT_TRUE(summary.metrics);
  EXPECT_FALSE(summary.metrics->filtration);
}

TEST(Pipeline, ZeroShotNeedsMetaCategory) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.mode = RunMode::ZeroShot;
  cfg.known_names = {"Blue Jay"};
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  const auto e = expect_stage_error([&] { build_and_persist(ctx, dir.path()); });
  EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
}

TEST(Pipeline, FewShotNeedsLabelledTrainSplit) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.mode = RunMode::FewShot;
  std::string text;
  for (const char* n : {"a.img", "b.img"}) {
    vfr::testing::mock_image(dir.path(), n);
    text += entry(n, "train");
  }
  vfr::testing::mock_image(dir.path(), "t.img");
  text += entry("t.img", "test");
  ProviderSet providers(cfg);
  RunContext ctx{cfg, parse_manifest(text, dir.path()), PromptPack{}, providers};
  const auto e = expect_stage_error([&] { build_and_persist(ctx, dir / "out"); });
  EXPECT_EQ(e.stage(), "discovery");
  EXPECT_EQ(e.code(), ErrorCode::PreconditionViolated);
}

TEST(Pipeline, FewShotInfersMetaWhenUnset) {
  TempDir dir;
  auto cfg = fixture_config();
  cfg.mode = RunMode::FewShot;
  ProviderSet providers(cfg);
  RunContext ctx{cfg, fixture_manifest(), PromptPack{}, providers};
  const auto run = build_and_persist(ctx, dir.path());
  EXPECT_EQ(providers.vqa_counter().calls(), 9u);
  EXPECT_EQ(run.classifier.classes.size(), 3u);
  EXPECT_EQ(artifacts::read_json(dir / artifacts::kVocabulary).at("source"), "labels");
}

// ---- command line ---------------------------------------------------------

TEST(Cli, RunAllThenClassifyAndEvaluate) {
  TempDir dir;
  const auto fx = fixture_dir();
  const std::string common = "--manifest '" + (fx / "manifest.jsonl").string() + "' --config '" + (fx / "config.json").string() + "'";
  auto r = run_cli("run-all " + common + " --out-dir '" + (dir / "all").string() + "'", dir.path());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("cACC"), std::string::npos);

  r = run_cli("classify " + common + " --classifier '" + (dir / "all" / "classifier.json").string() + "' --out-dir '" +
                  (dir / "cls").string() + "'",
              dir.path());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(dir / "cls" / "predictions.jsonl"), slurp(dir / "all" / "predictions.jsonl"));

  r = run_cli("evaluate --manifest '" + (fx / "manifest.jsonl").string() + "' --predictions '" +
                  (dir / "cls" / "predictions.jsonl").string() + "' --artifacts-dir '" + (dir / "all").string() + "'",
              dir.path());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(dir / "cls" / "metrics.json"), slurp(dir / "all" / "metrics.json"));
}

TEST(Cli, StageErrorsExitTwoWithTag) {
  TempDir dir;
  vfr::testing::write_file(dir / "m.jsonl", entry("t.img", "test", "A"));
  const auto r = run_cli("discover --manifest '" + (dir / "m.jsonl").string() + "' --out-dir '" + (dir / "o").string() + "'",
                         dir.path());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("[stage=discovery] EmptyTrainSet"), std::string::npos) << r.output;
}

TEST(Cli, BadConfigAndUsageErrors) {
  TempDir dir;
  vfr::testing::write_file(dir / "m.jsonl", entry("t.img", "test", "A"));
  auto r = run_cli("run-all --manifest '" + (dir / "m.jsonl").string() + "' --alpha 2", dir.path());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("[stage=config] InvalidConfig"), std::string::npos) << r.output;
  r = run_cli("frobnicate", dir.path());
  EXPECT_NE(r.status, 0);
  r = run_cli("classify --manifest '" + (dir / "m.jsonl").string() + "'", dir.path());
  EXPECT_NE(r.status, 0);
}

TEST(Cli, FingerprintMismatchIsReported) {
  TempDir dir;
  const auto fx = fixture_dir();
  auto r = run_cli("discover --manifest '" + (fx / "manifest.jsonl").string() + "' --config '" +
                       (fx / "config.json").string() + "' --out-dir '" + (dir / "d").string() + "'",
                   dir.path());
  ASSERT_EQ(r.status, 0) << r.output;
  vfr::testing::write_file(dir / "other.json",
                           R"({"providers": {"vlm": {"model": "another-clip", "dim": 64}}})");
  r = run_cli("classify --manifest '" + (fx / "manifest.jsonl").string() + "' --config '" + (dir / "other.json").string() +
                  "' --classifier '" + (dir / "d" / "classifier.json").string() + "' --out-dir '" + (dir / "c").string() + "'",
              dir.path());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("FingerprintMismatch"), std::string::npos) << r.output;
}
