#pragma once

// Class-name reasoning: infer the meta-category G from VQA answers, extract
// per-image attribute pairs, and ask the chat LLM for candidate names.

#include <algorithm>
#include <atomic>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/error.hpp"
#include "vfr/parallel.hpp"
#include "vfr/prompt_pack.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/text_util.hpp"

namespace vfr {

inline constexpr double kDiscoveryTemperature = 0.0;

struct MetaCategory {
  std::string name;
  int support_count = 0;

  MetaCategory() = default;
  MetaCategory(std::string n, int support) : name(text::lower(text::trim(n))), support_count(support) {
    precondition(!name.empty(), "meta-category name must be non-empty");
  }

  bool operator==(const MetaCategory&) const = default;
};

struct AttributePair {
  std::string key;
  std::string value;

  bool operator==(const AttributePair&) const = default;
};

struct CandidateNameSet {
  std::vector<std::string> names;
  MetaCategory source_meta;
};

struct DiscoveryOptions {
  std::size_t max_parallel_requests = 8;
};

/// Parses the first balanced bracket span of `raw` as a list of (usually
/// quoted) items. Quotes are '"' or '\''; backslash escapes are honored.
/// Items are trimmed; empty items are dropped.
inline std::vector<std::string> parse_name_list(const std::string& raw) {
  require(!text::trim(raw).empty(), ErrorCode::UnparseableNameList, "empty reply");
  const auto open = raw.find('[');
  require(open != std::string::npos, ErrorCode::UnparseableNameList, "no bracketed list in reply");

  std::vector<std::string> items;
  std::string current;
  bool any_content = false;
  char quote = 0;
  int depth = 0;
  bool closed = false;
  auto flush = [&] {
    std::string item = text::trim(current);
    if (!item.empty()) items.push_back(std::move(item));
    current.clear();
    any_content = false;
  };
  for (std::size_t i = open + 1; i < raw.size(); ++i) {
    const char c = raw[i];
    if (quote) {
      if (c == '\\' && i + 1 < raw.size()) {
        const char n = raw[++i];
        current.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
      } else if (c == quote) {
        quote = 0;
      } else {
        current.push_back(c);
      }
      continue;
    }
    if (c == '"' || (c == '\'' && !any_content)) {
      quote = c;
      any_content = true;
    } else if (c == '[') {
      ++depth;
      current.push_back(c);
    } else if (c == ']') {
      if (depth == 0) {
        closed = true;
        break;
      }
      --depth;
      current.push_back(c);
    } else if (c == ',' && depth == 0) {
      flush();
    } else {
      if (!std::isspace(static_cast<unsigned char>(c))) any_content = true;
      current.push_back(c);
    }
  }
  require(closed, ErrorCode::UnparseableNameList, "unbalanced bracketed list in reply");
  flush();
  return items;
}

/// Case-fold + whitespace dedupe; keeps the first spelling (whitespace
/// collapsed) of each name.
inline std::vector<std::string> dedupe_names(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& n : names) {
    std::string clean = text::collapse_whitespace(n);
    if (clean.empty()) continue;
    if (seen.insert(text::name_key(clean)).second) out.push_back(std::move(clean));
  }
  return out;
}

inline std::string normalize_answer(const std::string& answer) {
  std::string a = text::lower(text::collapse_whitespace(answer));
  while (!a.empty() && (a.back() == '.' || a.back() == '!' || a.back() == ',')) a.pop_back();
  return text::trim(a);
}

/// Majority vote over per-image VQA answers; falls back to LLM
/// consolidation when no answer holds a strict majority.
inline MetaCategory infer_meta_category(std::span<const ImageRef> train_images, VqaProvider& vqa,
                                        ChatProvider& chat, const PromptPack& pack = {},
                                        const DiscoveryOptions& opts = {}) {
  require(!train_images.empty(), ErrorCode::EmptyTrainSet, "meta-category needs training images");
  std::vector<std::string> answers(train_images.size());
  parallel_for(train_images.size(), opts.max_parallel_requests, [&](std::size_t i) {
    answers[i] = normalize_answer(vqa.vqa(train_images[i], pack.meta_question));
  });

  std::map<std::string, int> counts;
  for (const auto& a : answers) {
    if (!a.empty()) ++counts[a];
  }
  const int n = static_cast<int>(answers.size());
  for (const auto& [answer, count] : counts) {
    if (2 * count > n) return MetaCategory(answer, count);
  }

  // Answer lines are listed in sorted multiset order so the prompt does not
  // depend on image order.
  std::vector<std::string> sorted = answers;
  std::sort(sorted.begin(), sorted.end());
  std::string lines;
  for (const auto& a : sorted) {
    if (!a.empty()) lines += "- " + a + "\n";
  }
  if (!lines.empty()) lines.pop_back();
  const std::vector<ChatMessage> msgs{
      {ChatRole::User, text::replace_all(pack.consolidation_template, "{answers}", lines)}};
  const std::string reply = chat.chat(msgs, kDiscoveryTemperature);
  // Keep the first line only; models sometimes explain themselves.
  const std::string consolidated = normalize_answer(reply.substr(0, reply.find('\n')));
  require(!consolidated.empty(), ErrorCode::EmptyCompletion, "meta-category consolidation was empty");
  const auto it = counts.find(consolidated);
  return MetaCategory(consolidated, it == counts.end() ? 0 : it->second);
}

/// Parses "key: value"; nullopt when either side is empty or no colon.
inline std::optional<AttributePair> parse_attribute(const std::string& answer) {
  const std::string first_line = answer.substr(0, answer.find('\n'));
  const auto colon = first_line.find(':');
  if (colon == std::string::npos) return std::nullopt;
  AttributePair p{text::lower(text::collapse_whitespace(first_line.substr(0, colon))),
                  text::collapse_whitespace(first_line.substr(colon + 1))};
  while (!p.value.empty() && p.value.back() == '.') p.value.pop_back();
  if (p.key.empty() || p.value.empty()) return std::nullopt;
  return p;
}

struct AttributeTable {
  std::vector<std::vector<AttributePair>> per_image;
  std::size_t dropped = 0;  // unparseable or duplicate-key answers
};

inline AttributeTable extract_attributes(std::span<const ImageRef> train_images, const MetaCategory& g,
                                         VqaProvider& vqa, const PromptPack& pack = {},
                                         const DiscoveryOptions& opts = {}) {
  precondition(!g.name.empty(), "meta-category must be set before attribute extraction");
  const std::size_t nq = pack.attribute_questions.size();
  std::vector<std::string> answers(train_images.size() * nq);
  parallel_for(answers.size(), opts.max_parallel_requests, [&](std::size_t i) {
    answers[i] = vqa.vqa(train_images[i / nq], fill_category(pack.attribute_questions[i % nq], g.name));
  });

  AttributeTable table;
  table.per_image.resize(train_images.size());
  for (std::size_t img = 0; img < train_images.size(); ++img) {
    std::set<std::string> keys;
    for (std::size_t q = 0; q < nq; ++q) {
      auto pair = parse_attribute(answers[img * nq + q]);
      if (!pair || !keys.insert(pair->key).second) {
        ++table.dropped;
        continue;
      }
      table.per_image[img].push_back(*std::move(pair));
    }
  }
  return table;
}

inline std::string attribute_summary(const AttributeTable& attrs) {
  std::string out;
  for (std::size_t i = 0; i < attrs.per_image.size(); ++i) {
    out += "Image " + std::to_string(i + 1) + ":";
    if (attrs.per_image[i].empty()) out += " (no attributes)";
    for (std::size_t j = 0; j < attrs.per_image[i].size(); ++j) {
      out += (j == 0 ? " " : "; ") + attrs.per_image[i][j].key + ": " + attrs.per_image[i][j].value;
    }
    out += "\n";
  }
  if (out.empty()) return "(none)";
  out.pop_back();
  return out;
}

/// Asks for a list; on a parse failure re-prompts once with the repair
/// instruction before giving up.
inline std::vector<std::string> chat_for_list(ChatProvider& chat, const std::string& prompt,
                                              double temperature, const PromptPack& pack) {
  std::vector<ChatMessage> msgs{{ChatRole::User, prompt}};
  std::string reply = chat.chat(msgs, temperature);
  try {
    return parse_name_list(reply);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnparseableNameList) throw;
  }
  msgs.emplace_back(ChatRole::Assistant, reply);
  msgs.emplace_back(ChatRole::User, pack.repair_instruction);
  return parse_name_list(chat.chat(msgs, temperature));
}

inline CandidateNameSet propose_candidate_names(const MetaCategory& g, const AttributeTable& attrs,
                                                ChatProvider& chat, const PromptPack& pack = {}) {
  precondition(!g.name.empty(), "meta-category must be set before proposing names");
  const std::string prompt =
      text::replace_all(fill_category(pack.name_reasoning_template, g.name), "{attributes}",
                        attribute_summary(attrs));
  CandidateNameSet out{dedupe_names(chat_for_list(chat, prompt, kDiscoveryTemperature, pack)), g};
  require(!out.names.empty(), ErrorCode::UnparseableNameList, "LLM proposed no candidate names");
  return out;
}

struct DiscoveryResult {
  MetaCategory meta;
  AttributeTable attributes;
  CandidateNameSet candidates;
};

inline DiscoveryResult discover(std::span<const ImageRef> train_images, VqaProvider& vqa,
                                ChatProvider& chat, const PromptPack& pack = {},
                                const DiscoveryOptions& opts = {}) {
  DiscoveryResult r;
  r.meta = infer_meta_category(train_images, vqa, chat, pack, opts);
  r.attributes = extract_attributes(train_images, r.meta, vqa, pack, opts);
  r.candidates = propose_candidate_names(r.meta, r.attributes, chat, pack);
  return r;
}

}  // namespace vfr
