#pragma once

#include <atomic>

#include "vfr/providers/interfaces.hpp"

namespace vfr {

// Call-counting decorators. The runner wraps every provider so run manifests
// can report how many requests each stage issued.

class CountingChat final : public ChatProvider {
 public:
  explicit CountingChat(ChatProvider& inner) : inner_(inner) {}
  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }
  std::string chat(std::span<const ChatMessage> messages, double temperature) override {
    calls_.fetch_add(1);
    return inner_.chat(messages, temperature);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  ChatProvider& inner_;
  std::atomic<std::size_t> calls_{0};
};

class CountingVqa final : public VqaProvider {
 public:
  explicit CountingVqa(VqaProvider& inner) : inner_(inner) {}
  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }
  std::string vqa(const ImageRef& image, const std::string& question) override {
    calls_.fetch_add(1);
    return inner_.vqa(image, question);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  VqaProvider& inner_;
  std::atomic<std::size_t> calls_{0};
};

class CountingTextEmbedder final : public TextEmbedder {
 public:
  explicit CountingTextEmbedder(TextEmbedder& inner) : inner_(inner) {}
  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }
  std::vector<EmbeddingVector> embed_text(std::span<const std::string> inputs) override {
    batches_.fetch_add(1);
    inputs_.fetch_add(inputs.size());
    return inner_.embed_text(inputs);
  }
  std::size_t batches() const { return batches_.load(); }
  std::size_t inputs() const { return inputs_.load(); }

 private:
  TextEmbedder& inner_;
  std::atomic<std::size_t> batches_{0}, inputs_{0};
};

class CountingImageEmbedder final : public ImageEmbedder {
 public:
  explicit CountingImageEmbedder(ImageEmbedder& inner) : inner_(inner) {}
  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }
  EmbeddingVector embed_image(const ImageRef& image,
                              const std::optional<AugmentationParams>& aug) override {
    (aug ? augmented_ : raw_).fetch_add(1);
    return inner_.embed_image(image, aug);
  }
  std::size_t raw_calls() const { return raw_.load(); }
  std::size_t augmented_calls() const { return augmented_.load(); }

 private:
  ImageEmbedder& inner_;
  std::atomic<std::size_t> raw_{0}, augmented_{0};
};

}  // namespace vfr
