#pragma once

// Deterministic in-process providers. Each output is a pure function of the
// mock's seed and the request bytes, so pipeline runs on mocks reproduce
// bit-for-bit across processes and platforms.
//
// Recognized request shapes:
//   chat: the context-sentence template ("Generate N short and common
//         sentences with noun X, a type of G"), the name-reasoning prompt
//         (contains a "Meta-category: G" line), meta-category consolidation
//         (contains "Reply with one general noun"); anything else gets a
//         canned acknowledgement.
//   vqa:  mock images are text files starting with "MOCKIMG"; their
//         "key: value" lines answer matching questions. Other images get a
//         hash-selected answer.

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/hashing.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/text_util.hpp"

namespace vfr::mock {

inline constexpr std::string_view kMockEndpoint = "mock://local";

/// Seeded pseudo-random unit vector of the given dim.
inline EmbeddingVector unit_vector_from(const Digest& d, std::size_t dim) {
  HashStream stream(d);
  for (;;) {
    std::vector<double> v(dim);
    for (double& x : v) x = 2.0 * stream.uniform() - 1.0;
    if (l2_norm(v) > 1e-6) return normalize(EmbeddingVector(std::move(v))).vector();
  }
}

inline std::map<std::string, std::string> parse_mock_image(const std::string& bytes) {
  std::map<std::string, std::string> fields;
  if (bytes.rfind("MOCKIMG", 0) != 0) return fields;
  std::istringstream in(bytes);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = text::lower(text::trim(line.substr(0, colon)));
    const std::string value = text::trim(line.substr(colon + 1));
    if (!key.empty() && !value.empty()) fields.emplace(key, value);
  }
  return fields;
}

inline Digest text_digest(std::uint64_t seed, std::string_view model, std::string_view s) {
  return Sha256().u64(seed).field(model).field("text").field(s).finish();
}

inline Digest image_digest(std::uint64_t seed, std::string_view model, std::string_view content_hash,
                           const std::optional<AugmentationParams>& aug) {
  return Sha256()
      .u64(seed)
      .field(model)
      .field("image")
      .field(content_hash)
      .field(canonical_aug(aug))
      .finish();
}

/// Text side of a mock vision-language model: hashes each string to a
/// seeded unit vector.
class MockTextEmbedder final : public TextEmbedder {
 public:
  MockTextEmbedder(std::string model, std::size_t dim, std::uint64_t seed = 0)
      : model_(std::move(model)), dim_(dim), seed_(seed) {
    precondition(dim_ > 0, "mock embedder dim must be positive");
  }

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::TextEmbed, std::string(kMockEndpoint), model_, dim_};
  }

  std::vector<EmbeddingVector> embed_text(std::span<const std::string> inputs) override {
    check_embed_text_preconditions(inputs);
    batches_.fetch_add(1);
    inputs_.fetch_add(inputs.size());
    std::vector<EmbeddingVector> out;
    out.reserve(inputs.size());
    for (const auto& s : inputs) out.push_back(unit_vector_from(text_digest(seed_, model_, s), dim_));
    return out;
  }

  std::size_t batches() const { return batches_.load(); }
  std::size_t inputs() const { return inputs_.load(); }

 private:
  std::string model_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::atomic<std::size_t> batches_{0}, inputs_{0};
};

/// Image side of a mock vision-language model. The augmentation rectangle
/// and flip are hashed together with the image bytes.
class MockImageEmbedder final : public ImageEmbedder {
 public:
  MockImageEmbedder(std::string model, std::size_t dim, std::uint64_t seed = 0)
      : model_(std::move(model)), dim_(dim), seed_(seed) {
    precondition(dim_ > 0, "mock embedder dim must be positive");
  }

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::ImageEmbed, std::string(kMockEndpoint), model_, dim_};
  }

  EmbeddingVector embed_image(const ImageRef& image,
                              const std::optional<AugmentationParams>& aug) override {
    if (aug) aug->validate(0.0);
    const std::string content = image_content_hash(image);
    (aug ? augmented_ : raw_).fetch_add(1);
    return unit_vector_from(image_digest(seed_, model_, content, aug), dim_);
  }

  std::size_t raw_calls() const { return raw_.load(); }
  std::size_t augmented_calls() const { return augmented_.load(); }
  std::size_t calls() const { return raw_calls() + augmented_calls(); }

 private:
  std::string model_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::atomic<std::size_t> raw_{0}, augmented_{0};
};

namespace detail {

inline const std::map<std::string, std::vector<std::string>>& name_banks() {
  static const std::map<std::string, std::vector<std::string>> banks{
      {"bird",
       {"Pine Warbler", "Black Tern", "Blue Jay", "Northern Cardinal", "Indigo Bunting",
        "American Goldfinch", "Cedar Waxwing", "Barn Swallow"}},
      {"dog",
       {"Siberian Husky", "Beagle", "Border Collie", "Pug", "Shiba Inu", "Dalmatian", "Whippet",
        "Samoyed"}},
      {"flower",
       {"Sunflower", "Bird of Paradise", "Pink Primrose", "Globe Thistle", "Tiger Lily",
        "Moon Orchid", "Sweet Pea", "Garden Phlox"}},
      {"car",
       {"Tesla Model S", "Ford Mustang", "Volvo XC90", "Audi R8", "Jeep Wrangler", "Honda Civic",
        "Mini Cooper", "Porsche 911"}},
  };
  return banks;
}

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> v{
      "small",   "bright",    "quiet",  "slender", "spotted", "glossy",  "striped", "pale",
      "vivid",   "sleek",     "muted",  "curious", "wet",     "dusty",   "tiny",    "graceful",
      "rounded", "weathered", "golden", "dark",    "lively",  "resting", "sunlit",  "shaded"};
  return v;
}

inline const std::vector<std::string>& scenes() {
  static const std::vector<std::string> v{
      "near a calm lake at dawn",        "beside a rusty garden fence",
      "under soft morning light",        "against a cloudy grey sky",
      "among tall green summer grass",   "on a snowy winter field",
      "next to a wooden park bench",     "in a crowded city square",
      "along a muddy forest trail",      "beneath blooming spring branches",
      "on a sandy coastal path",         "by a quiet rural roadside",
      "in warm late afternoon sun",      "surrounded by fallen autumn leaves",
      "near an old stone wall",          "in a bright open meadow"};
  return v;
}

inline const std::vector<std::string>& generic_answers() {
  static const std::vector<std::string> v{"bird", "animal", "flower", "dog", "object", "car"};
  return v;
}

inline const std::vector<std::string>& attribute_values() {
  static const std::vector<std::string> v{"yellow", "brown", "small", "round", "striped",
                                          "long",   "grey",  "green", "large", "pointed"};
  return v;
}

inline std::string last_user_content(std::span<const ChatMessage> messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == ChatRole::User) return it->content;
  }
  return {};
}

inline Digest request_digest(std::uint64_t seed, std::string_view model,
                             std::span<const ChatMessage> messages, double temperature) {
  Sha256 h;
  h.u64(seed).field(model).f64(temperature);
  for (const auto& m : messages) h.field(to_string(m.role)).field(m.content);
  return h.finish();
}

}  // namespace detail

class MockChat final : public ChatProvider {
 public:
  explicit MockChat(std::uint64_t seed = 0, std::string model = "mock-chat")
      : seed_(seed), model_(std::move(model)) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::Chat, std::string(kMockEndpoint), model_};
  }

  std::string chat(std::span<const ChatMessage> messages, double temperature) override {
    check_chat_preconditions(messages);
    calls_.fetch_add(1);
    HashStream stream(detail::request_digest(seed_, model_, messages, temperature));
    // Repair prompts re-answer the preceding user request.
    std::string prompt = messages.back().content;
    if (prompt.find("Return only the bracketed list") != std::string::npos && messages.size() >= 3) {
      prompt = detail::last_user_content(messages.first(messages.size() - 2));
    }

    static const std::regex context_re(
        R"(^Generate (\d+) short and common sentences with noun (.+?), a type of (.+?), as a main subject)");
    static const std::regex meta_re(R"(Meta-category:\s*([^\n]+))");
    std::smatch m;
    if (std::regex_search(prompt, m, context_re)) {
      return contexts(std::stoul(m[1].str()), m[2].str(), stream);
    }
    if (prompt.find("Reply with one general noun") != std::string::npos) {
      return consolidate(prompt, stream);
    }
    if (std::regex_search(prompt, m, meta_re)) {
      return candidate_names(text::lower(text::trim(m[1].str())), stream);
    }
    static const char* kAcks[] = {"pong", "Hello from the mock chat model.", "ack", "ready"};
    return kAcks[stream.below(4)];
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  static std::string contexts(std::size_t n, const std::string& name, HashStream& stream) {
    const auto& adj = detail::adjectives();
    const auto& sc = detail::scenes();
    const std::size_t combos = adj.size() * sc.size();
    // Distinct (adjective, scene) pairs; cycles through repeats beyond the
    // bank size, which downstream dedupe then removes.
    std::vector<std::size_t> order(combos);
    for (std::size_t i = 0; i < combos; ++i) order[i] = i;
    for (std::size_t i = combos; i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = order[i % combos];
      out.push_back(adj[c % adj.size()] + " " + name + " " + sc[c / adj.size()]);
    }
    return out.dump();
  }

  static std::string candidate_names(const std::string& g, HashStream& stream) {
    const auto& banks = detail::name_banks();
    std::vector<std::string> bank;
    if (auto it = banks.find(g); it != banks.end()) {
      bank = it->second;
    } else {
      for (int i = 1; i <= 8; ++i) bank.push_back("Common " + g + " variety " + std::to_string(i));
    }
    for (std::size_t i = bank.size(); i > 1; --i) std::swap(bank[i - 1], bank[stream.below(i)]);
    bank.resize(5);
    return "Based on the attributes, likely classes are: " + nlohmann::json(bank).dump();
  }

  static std::string consolidate(const std::string& prompt, HashStream& stream) {
    // Answers appear one per line as "- answer".
    std::map<std::string, int> counts;
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("- ", 0) == 0) ++counts[text::lower(text::trim(line.substr(2)))];
    }
    if (counts.empty()) return "object";
    int best = 0;
    for (const auto& [_, c] : counts) best = std::max(best, c);
    std::vector<std::string> top;
    for (const auto& [a, c] : counts) {
      if (c == best) top.push_back(a);
    }
    return top[stream.below(top.size())];
  }

  std::uint64_t seed_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

class MockVqa final : public VqaProvider {
 public:
  explicit MockVqa(std::uint64_t seed = 0, std::string model = "mock-vqa")
      : seed_(seed), model_(std::move(model)) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::Vqa, std::string(kMockEndpoint), model_};
  }

  std::string vqa(const ImageRef& image, const std::string& question) override {
    precondition(!question.empty(), "vqa question must be non-empty");
    const std::string bytes = read_image_bytes(image);
    calls_.fetch_add(1);
    const auto fields = parse_mock_image(bytes);
    HashStream stream(
        Sha256().u64(seed_).field(model_).field(sha256_hex(bytes)).field(question).finish());

    const std::string q = text::lower(question);
    if (q.find("general noun") != std::string::npos || q.find("type of object") != std::string::npos) {
      if (auto it = fields.find("category"); it != fields.end()) return it->second;
      const auto& bank = detail::generic_answers();
      return bank[stream.below(bank.size())];
    }
    static const std::regex key_re(R"('([A-Za-z _]+):\s*<)");
    std::smatch m;
    if (std::regex_search(question, m, key_re)) {
      const std::string key = text::lower(text::trim(m[1].str()));
      if (auto it = fields.find(key); it != fields.end()) return key + ": " + it->second;
      if (stream.below(6) == 0) return "no idea";
      const auto& bank = detail::attribute_values();
      return key + ": " + bank[stream.below(bank.size())];
    }
    if (auto it = fields.find("caption"); it != fields.end()) return it->second;
    return "an image";
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::uint64_t seed_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace vfr::mock
