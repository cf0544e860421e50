#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/grounding.hpp"
#include "vfr/vector_core.hpp"

namespace vfr {

struct ScoredCandidate {
  GroundedClass grounded;
  double score = 0.0;
  bool retained = false;

  const std::string& name() const { return grounded.class_name; }
};

struct RefinementConfig {
  double retention_ratio = 0.8;
  std::optional<std::size_t> k_override;
  bool cnr_enabled = true;

  void validate() const {
    require(retention_ratio > 0.0 && retention_ratio <= 1.0, ErrorCode::InvalidConfig,
            "retention_ratio must be in (0, 1]");
    require(!k_override || *k_override >= 1, ErrorCode::InvalidConfig, "k_override must be >= 1");
  }
};

/// Mean cosine between t_c and each training-image embedding.
inline double relevance_score(const EmbeddingVector& t_c, std::span<const EmbeddingVector> images) {
  require(!images.empty(), ErrorCode::EmptyTrainSet, "relevance score needs >= 1 image embedding");
  double acc = 0.0;
  for (const auto& v : images) acc += cosine(t_c, v);
  return acc / static_cast<double>(images.size());
}

inline std::size_t effective_k(std::size_t n, const RefinementConfig& cfg) {
  if (cfg.k_override) return std::min(*cfg.k_override, n);
  const auto k = static_cast<std::size_t>(std::llround(cfg.retention_ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Orders by (score desc, name asc) and marks the first k_effective as
/// retained; everything is retained when refinement is disabled.
inline std::vector<ScoredCandidate> filter_top_k(std::vector<ScoredCandidate> candidates,
                                                 const RefinementConfig& cfg) {
  precondition(!candidates.empty(), "filter_top_k needs candidates");
  cfg.validate();
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name() < b.name();
  });
  const std::size_t k = cfg.cnr_enabled ? effective_k(candidates.size(), cfg) : candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].retained = i < k;
  return candidates;
}

inline std::vector<ScoredCandidate> score_candidates(std::vector<GroundedClass> grounded,
                                                     std::span<const EmbeddingVector> train_embeddings) {
  std::vector<ScoredCandidate> out;
  out.reserve(grounded.size());
  for (auto& g : grounded) {
    const double s = relevance_score(g.t_c, train_embeddings);
    out.push_back({std::move(g), s, false});
  }
  return out;
}

inline std::vector<std::string> retained_names(const std::vector<ScoredCandidate>& refined) {
  std::vector<std::string> out;
  for (const auto& c : refined) {
    if (c.retained) out.push_back(c.name());
  }
  return out;
}

inline nlohmann::json refinement_report(const std::vector<ScoredCandidate>& refined) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : refined) {
    out.push_back({{"class", c.name()}, {"score", c.score}, {"retained", c.retained}});
  }
  return out;
}

}  // namespace vfr
