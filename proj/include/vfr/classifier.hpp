#pragma once

// Vision-language prompt coupling and inference.
//
//   v_c = (1 / (K·|U_c|)) Σ_i Σ_k normalize(f_V(Aug_k(x_i)))
//   w_c = α·t_c + (1 − α)·v_c            (w_c = t_c when U_c is empty)
//   ỹ   = argmax_c cos(f_V(x), w_c)
//
// Every argmax breaks exact ties by the lexicographically smallest name.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/augmentation.hpp"
#include "vfr/grounding.hpp"
#include "vfr/parallel.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/refinement.hpp"

namespace vfr {

enum class RunMode { VocabularyFree, ZeroShot, FewShot };

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::VocabularyFree: return "vocabulary_free";
    case RunMode::ZeroShot: return "zero_shot";
    case RunMode::FewShot: return "few_shot";
  }
  return "vocabulary_free";
}

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "vocabulary_free") return RunMode::VocabularyFree;
  if (s == "zero_shot") return RunMode::ZeroShot;
  if (s == "few_shot") return RunMode::FewShot;
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + s + "'");
}

struct ClassPrototype {
  std::string name;
  EmbeddingVector t_c;
  std::optional<EmbeddingVector> v_c;
  EmbeddingVector w;
};

struct CoupledClassifier {
  std::vector<ClassPrototype> classes;  // sorted by name
  double alpha = 0.7;
  std::size_t k_aug = 10;
  ProviderFingerprint embedder;
  RunMode mode = RunMode::VocabularyFree;

  void validate() const {
    require(!classes.empty(), ErrorCode::ClassifierArtifactCorrupt, "classifier has no classes");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::ClassifierArtifactCorrupt, "alpha outside [0, 1]");
    require(k_aug >= 1, ErrorCode::ClassifierArtifactCorrupt, "k_aug must be >= 1");
    const std::size_t d = classes.front().w.dim();
    std::set<std::string> names;
    for (const auto& c : classes) {
      require(names.insert(c.name).second, ErrorCode::ClassifierArtifactCorrupt,
              "duplicate class '" + c.name + "'");
      require(c.t_c.dim() == d && c.w.dim() == d && (!c.v_c || c.v_c->dim() == d),
              ErrorCode::ClassifierArtifactCorrupt, "class '" + c.name + "' has mismatched dims");
    }
    require(!embedder.dim || *embedder.dim == d, ErrorCode::ClassifierArtifactCorrupt,
            "class vectors do not match embedder dim");
  }
};

struct ClassifierConfig {
  double alpha = 0.7;
  std::size_t k_aug = 10;
  std::uint64_t seed = 0;
  AugmentationPolicy augmentation;
  bool renormalize_prototypes = false;
  std::size_t max_parallel_requests = 8;
};

struct Prediction {
  std::string image;
  std::string predicted_name;
  double similarity = 0.0;
  double runner_up_margin = 0.0;
};

using PseudoLabelAssignment = std::map<std::string, std::vector<ImageRef>>;

/// Index of the best score; exact ties go to the smallest name.
inline std::size_t argmax_by_name(std::span<const double> scores, std::span<const std::string> names) {
  precondition(!scores.empty() && scores.size() == names.size(), "argmax over empty or ragged input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && names[i] < names[best])) best = i;
  }
  return best;
}

inline std::vector<EmbeddingVector> embed_images(std::span<const ImageRef> images, ImageEmbedder& embedder,
                                                 std::size_t max_parallel) {
  std::vector<std::optional<EmbeddingVector>> slots(images.size());
  parallel_for(images.size(), max_parallel,
               [&](std::size_t i) { slots[i] = embedder.embed_image(images[i], std::nullopt); });
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (auto& s : slots) out.push_back(*std::move(s));
  return out;
}

/// Assigns each image to argmax_c cos(v_j, t_c). Every class key is present,
/// possibly with an empty list.
inline PseudoLabelAssignment pseudo_label(std::span<const ImageRef> images,
                                          std::span<const EmbeddingVector> image_embeddings,
                                          std::span<const GroundedClass> grounded) {
  require(!images.empty(), ErrorCode::EmptyTrainSet, "pseudo-labelling needs training images");
  precondition(!grounded.empty(), "pseudo-labelling needs at least one class");
  require(images.size() == image_embeddings.size(), ErrorCode::LengthMismatch,
          "one embedding per training image required");
  std::vector<std::string> names;
  for (const auto& g : grounded) names.push_back(g.class_name);
  PseudoLabelAssignment out;
  for (const auto& n : names) out[n];
  std::vector<double> scores(grounded.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    for (std::size_t c = 0; c < grounded.size(); ++c) scores[c] = cosine(image_embeddings[j], grounded[c].t_c);
    out[names[argmax_by_name(scores, names)]].push_back(images[j]);
  }
  return out;
}

inline PseudoLabelAssignment pseudo_label(std::span<const ImageRef> images,
                                          std::span<const GroundedClass> grounded,
                                          ImageEmbedder& embedder, std::size_t max_parallel = 8) {
  require(!images.empty(), ErrorCode::EmptyTrainSet, "pseudo-labelling needs training images");
  const auto embeddings = embed_images(images, embedder, max_parallel);
  return pseudo_label(images, embeddings, grounded);
}

/// Mean of K·|U_c| normalized augmented embeddings. Makes exactly
/// K·|U_c| embed_image calls.
inline EmbeddingVector visual_prototype(std::span<const ImageRef> support, ImageEmbedder& embedder,
                                        const ClassifierConfig& cfg) {
  require(!support.empty(), ErrorCode::EmptySupportSet, "visual prototype needs >= 1 image");
  precondition(cfg.k_aug >= 1, "k_aug must be >= 1");
  const std::size_t k = cfg.k_aug;
  std::vector<std::optional<EmbeddingVector>> slots(support.size() * k);
  std::vector<std::vector<AugmentationParams>> plans(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    plans[i] = augmentation_plan(support[i], k, cfg.seed, cfg.augmentation);
  }
  parallel_for(slots.size(), cfg.max_parallel_requests, [&](std::size_t s) {
    slots[s] = embedder.embed_image(support[s / k], plans[s / k][s % k]);
  });
  std::vector<EmbeddingVector> views;
  views.reserve(slots.size());
  for (auto& s : slots) views.push_back(*std::move(s));
  return maybe_renormalize(mean_of_normalized(views), cfg.renormalize_prototypes);
}

inline EmbeddingVector couple(const EmbeddingVector& t_c, const std::optional<EmbeddingVector>& v_c,
                              double alpha) {
  precondition(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  if (!v_c) return t_c;
  require(t_c.dim() == v_c->dim(), ErrorCode::DimensionMismatch, "t_c and v_c dims differ");
  if (alpha == 1.0) return t_c;
  if (alpha == 0.0) return *v_c;
  return convex_mix(t_c, *v_c, alpha);
}

inline Prediction classify_embedding(const EmbeddingVector& image_embedding,
                                     const CoupledClassifier& clf, std::string image_label = {}) {
  precondition(!clf.classes.empty(), "classifier has no classes");
  std::vector<double> sims;
  std::vector<std::string> names;
  for (const auto& c : clf.classes) {
    sims.push_back(cosine(image_embedding, c.w));
    names.push_back(c.name);
  }
  const std::size_t best = argmax_by_name(sims, names);
  double second = sims[best];
  bool have_second = false;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    if (i == best) continue;
    if (!have_second || sims[i] > second) second = sims[i];
    have_second = true;
  }
  return {std::move(image_label), names[best], sims[best], have_second ? sims[best] - second : 0.0};
}

inline Prediction classify(const ImageRef& image, const CoupledClassifier& clf, ImageEmbedder& embedder) {
  precondition(!clf.classes.empty(), "classifier has no classes");
  return classify_embedding(embedder.embed_image(image, std::nullopt), clf, image.label);
}

/// Builds prototypes for each class from its support set; classes with an
/// empty support set fall back to w = t_c.
inline CoupledClassifier assemble(std::span<const GroundedClass> classes,
                                  const PseudoLabelAssignment& support, ImageEmbedder& embedder,
                                  const ClassifierConfig& cfg, RunMode mode) {
  precondition(!classes.empty(), "classifier needs at least one class");
  precondition(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "alpha must be in [0, 1]");
  CoupledClassifier clf;
  clf.alpha = cfg.alpha;
  clf.k_aug = cfg.k_aug;
  clf.embedder = embedder.fingerprint();
  clf.mode = mode;
  for (const auto& g : classes) {
    std::optional<EmbeddingVector> v_c;
    if (auto it = support.find(g.class_name); it != support.end() && !it->second.empty()) {
      v_c = visual_prototype(it->second, embedder, cfg);
    }
    EmbeddingVector t_c = maybe_renormalize(g.t_c, cfg.renormalize_prototypes);
    EmbeddingVector w = maybe_renormalize(couple(t_c, v_c, cfg.alpha), cfg.renormalize_prototypes);
    clf.classes.push_back({g.class_name, std::move(t_c), std::move(v_c), std::move(w)});
  }
  std::sort(clf.classes.begin(), clf.classes.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  clf.validate();
  return clf;
}

/// `refined` must carry t_c computed under the inference text embedder.
inline CoupledClassifier build_vocabulary_free(std::span<const ImageRef> train_images,
                                               const std::vector<ScoredCandidate>& refined,
                                               ImageEmbedder& embedder, const ClassifierConfig& cfg,
                                               PseudoLabelAssignment* assignment_out = nullptr) {
  std::vector<GroundedClass> retained;
  for (const auto& c : refined) {
    if (c.retained) retained.push_back(c.grounded);
  }
  precondition(!retained.empty(), "refined set has no retained classes");
  auto assignment = pseudo_label(train_images, retained, embedder, cfg.max_parallel_requests);
  auto clf = assemble(retained, assignment, embedder, cfg, RunMode::VocabularyFree);
  if (assignment_out) *assignment_out = std::move(assignment);
  return clf;
}

/// Text-only classifier over known names: w_c = t_c, no images consumed.
inline CoupledClassifier build_zero_shot(std::span<const GroundedClass> grounded,
                                         const ProviderFingerprint& image_embedder,
                                         const ClassifierConfig& cfg) {
  precondition(!grounded.empty(), "zero-shot needs at least one known name");
  std::set<std::string> seen;
  CoupledClassifier clf;
  clf.alpha = 1.0;
  clf.k_aug = cfg.k_aug;
  clf.embedder = image_embedder;
  clf.mode = RunMode::ZeroShot;
  for (const auto& g : grounded) {
    precondition(seen.insert(text::name_key(g.class_name)).second,
                 "known names must be deduplicated: '" + g.class_name + "'");
    EmbeddingVector t_c = maybe_renormalize(g.t_c, cfg.renormalize_prototypes);
    clf.classes.push_back({g.class_name, t_c, std::nullopt, t_c});
  }
  std::sort(clf.classes.begin(), clf.classes.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  clf.validate();
  return clf;
}

/// Labelled supports replace pseudo-labels; the label set replaces
/// refinement. Every class in `grounded` needs >= 1 support image.
inline CoupledClassifier build_few_shot(std::span<const std::pair<ImageRef, std::string>> support,
                                        std::span<const GroundedClass> grounded,
                                        ImageEmbedder& embedder, const ClassifierConfig& cfg) {
  PseudoLabelAssignment by_label;
  for (const auto& g : grounded) by_label[g.class_name];
  for (const auto& [image, label] : support) {
    auto it = by_label.find(label);
    precondition(it != by_label.end(), "support label '" + label + "' has no grounded class");
    it->second.push_back(image);
  }
  for (const auto& [label, images] : by_label) {
    require(!images.empty(), ErrorCode::EmptySupportSet, "label '" + label + "' has no support images");
  }
  return assemble(grounded, by_label, embedder, cfg, RunMode::FewShot);
}

inline nlohmann::json vector_json(const EmbeddingVector& v) { return v.data(); }

inline nlohmann::json classifier_to_json(const CoupledClassifier& clf) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : clf.classes) {
    classes.push_back({{"name", c.name},
                       {"t_c", vector_json(c.t_c)},
                       {"v_c", c.v_c ? vector_json(*c.v_c) : nlohmann::json(nullptr)},
                       {"w", vector_json(c.w)}});
  }
  return {{"mode", to_string(clf.mode)},
          {"alpha", clf.alpha},
          {"k_aug", clf.k_aug},
          {"embedder", to_json(clf.embedder)},
          {"classes", classes}};
}

inline CoupledClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    CoupledClassifier clf;
    clf.mode = run_mode_from_string(j.at("mode").get<std::string>());
    clf.alpha = j.at("alpha").get<double>();
    clf.k_aug = j.at("k_aug").get<std::size_t>();
    clf.embedder = fingerprint_from_json(j.at("embedder"));
    for (const auto& c : j.at("classes")) {
      std::optional<EmbeddingVector> v_c;
      if (!c.at("v_c").is_null()) v_c = EmbeddingVector(c.at("v_c").get<std::vector<double>>());
      clf.classes.push_back({c.at("name").get<std::string>(),
                             EmbeddingVector(c.at("t_c").get<std::vector<double>>()), std::move(v_c),
                             EmbeddingVector(c.at("w").get<std::vector<double>>())});
    }
    clf.validate();
    return clf;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ClassifierArtifactCorrupt, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ClassifierArtifactCorrupt) throw;
    throw Error(ErrorCode::ClassifierArtifactCorrupt, e.what());
  }
}

inline nlohmann::json prediction_to_json(const Prediction& p) {
  return {{"image", p.image},
          {"predicted", p.predicted_name},
          {"similarity", p.similarity},
          {"runner_up_margin", p.runner_up_margin}};
}

}  // namespace vfr
