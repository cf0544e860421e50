#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfr/providers/types.hpp"

namespace vfr {

// Every provider is stateless from the engine's point of view and safe to
// share across worker threads.

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ProviderFingerprint fingerprint() const = 0;
  /// Returns the assistant reply verbatim.
  virtual std::string chat(std::span<const ChatMessage> messages, double temperature) = 0;
};

class VqaProvider {
 public:
  virtual ~VqaProvider() = default;
  virtual ProviderFingerprint fingerprint() const = 0;
  virtual std::string vqa(const ImageRef& image, const std::string& question) = 0;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual ProviderFingerprint fingerprint() const = 0;
  /// One vector per input, order preserved.
  virtual std::vector<EmbeddingVector> embed_text(std::span<const std::string> inputs) = 0;
};

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual ProviderFingerprint fingerprint() const = 0;
  virtual EmbeddingVector embed_image(const ImageRef& image,
                                      const std::optional<AugmentationParams>& aug) = 0;
};

inline void check_chat_preconditions(std::span<const ChatMessage> messages) {
  precondition(!messages.empty(), "chat requires at least one message");
  precondition(messages.back().role == ChatRole::User, "last chat message must be from the user");
}

inline void check_embed_text_preconditions(std::span<const std::string> inputs) {
  precondition(!inputs.empty(), "embed_text requires at least one input");
  for (const auto& s : inputs) precondition(!s.empty(), "embed_text inputs must be non-empty");
}

inline void check_embedding_dims(const std::vector<EmbeddingVector>& out, std::size_t expected_count,
                                 std::optional<std::size_t> dim) {
  require(out.size() == expected_count, ErrorCode::LengthMismatch,
          "provider returned " + std::to_string(out.size()) + " embeddings for " +
              std::to_string(expected_count) + " inputs");
  if (!dim) return;
  for (const auto& v : out) {
    require(v.dim() == *dim, ErrorCode::DimensionMismatch,
            "provider returned dim " + std::to_string(v.dim()) + ", expected " + std::to_string(*dim));
  }
}

inline EmbeddingVector embed_one(TextEmbedder& embedder, const std::string& text) {
  const std::string inputs[] = {text};
  return std::move(embedder.embed_text(inputs).front());
}

}  // namespace vfr
