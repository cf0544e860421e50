#pragma once

// Class-specific contextual grounding: M LLM-written sentences per class,
// embedded and averaged into the contextual text embedding t_c.

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/discovery.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/vector_core.hpp"

namespace vfr {

struct ContextSet {
  std::string class_name;
  std::vector<std::string> sentences;
  std::size_t m_requested = 0;
};

struct GroundedClass {
  std::string class_name;
  ContextSet context;  // empty when contextual grounding is disabled
  EmbeddingVector t_c;
};

struct GroundingOptions {
  std::size_t m_contexts = 100;
  double min_context_fraction = 0.5;
  double context_temperature = 0.7;
  bool renormalize_prototypes = false;
};

inline std::string build_context_prompt(const std::string& class_name, const MetaCategory& g,
                                        std::size_t m, const PromptPack& pack = {}) {
  precondition(m >= 1, "context count must be >= 1");
  std::string p = fill_category(pack.context_template, g.name);
  p = text::replace_all(std::move(p), "{classname}", class_name);
  return text::replace_all(std::move(p), "{m}", std::to_string(m));
}

inline std::size_t min_contexts(std::size_t m, double fraction) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m) - 1e-9));
}

/// Keeps sentences that mention the class (case-insensitive), dropping
/// exact duplicates, up to m.
inline std::vector<std::string> filter_contexts(const std::vector<std::string>& raw,
                                                const std::string& class_name, std::size_t m) {
  std::vector<std::string> kept;
  std::set<std::string> seen;
  for (const auto& s : raw) {
    if (kept.size() == m) break;
    if (!text::contains_ci(s, class_name)) continue;
    if (seen.insert(s).second) kept.push_back(s);
  }
  return kept;
}

inline ContextSet generate_contexts(const std::string& class_name, const MetaCategory& g,
                                    ChatProvider& chat, const GroundingOptions& opts = {},
                                    const PromptPack& pack = {}) {
  precondition(!text::trim(class_name).empty(), "class name must be non-empty");
  const std::string prompt = build_context_prompt(class_name, g, opts.m_contexts, pack);
  const std::size_t needed = min_contexts(opts.m_contexts, opts.min_context_fraction);
  std::vector<std::string> kept;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      kept = filter_contexts(chat_for_list(chat, prompt, opts.context_temperature, pack), class_name,
                             opts.m_contexts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableNameList) throw;
      kept.clear();
    }
    if (kept.size() >= needed && !kept.empty()) break;
  }
  require(kept.size() >= needed && !kept.empty(), ErrorCode::InsufficientContexts,
          "'" + class_name + "': " + std::to_string(kept.size()) + " valid sentences, need " +
              std::to_string(needed));
  return {class_name, std::move(kept), opts.m_contexts};
}

/// t_c = (1/M) Σ f_T(x)/‖f_T(x)‖ over the retained sentences.
inline GroundedClass contextual_text_embedding(const ContextSet& context, TextEmbedder& embedder,
                                               bool renormalize = false) {
  precondition(!context.sentences.empty(), "context set is empty");
  const auto embeddings = embedder.embed_text(context.sentences);
  check_embedding_dims(embeddings, context.sentences.size(), embedder.fingerprint().dim);
  return {context.class_name, context,
          maybe_renormalize(mean_of_normalized(embeddings), renormalize)};
}

inline std::string plain_prompt(const std::string& class_name, const MetaCategory& g) {
  return "a photo of a " + class_name + ", a type of " + g.name + ".";
}

/// The grounding-off path: one templated string per class.
inline EmbeddingVector build_plain_prompt_embedding(const std::string& class_name,
                                                    const MetaCategory& g, TextEmbedder& embedder) {
  precondition(!text::trim(class_name).empty(), "class name must be non-empty");
  return normalize(embed_one(embedder, plain_prompt(class_name, g))).vector();
}

inline GroundedClass ground_plain(const std::string& class_name, const MetaCategory& g,
                                  TextEmbedder& embedder) {
  return {class_name, ContextSet{class_name, {}, 0},
          build_plain_prompt_embedding(class_name, g, embedder)};
}

/// Grounds `context` (or the plain prompt when it has no sentences) under a
/// specific embedder.
inline GroundedClass ground_with(const ContextSet& context, const MetaCategory& g,
                                 TextEmbedder& embedder, bool renormalize) {
  if (context.sentences.empty()) return ground_plain(context.class_name, g, embedder);
  return contextual_text_embedding(context, embedder, renormalize);
}

inline nlohmann::json context_record(const ContextSet& c) {
  return {{"class", c.class_name}, {"sentences", c.sentences}, {"m_requested", c.m_requested}};
}

inline ContextSet context_from_record(const nlohmann::json& j) {
  return {j.at("class").get<std::string>(), j.at("sentences").get<std::vector<std::string>>(),
          j.at("m_requested").get<std::size_t>()};
}

}  // namespace vfr
