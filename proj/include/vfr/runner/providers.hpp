#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "vfr/providers/cache.hpp"
#include "vfr/providers/counting.hpp"
#include "vfr/providers/http.hpp"
#include "vfr/providers/mock.hpp"
#include "vfr/runner/config.hpp"

namespace vfr {

inline std::string env_or(const char* name, const std::string& fallback = {}) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

/// Owns the backends named by a RunConfig, the optional embedding cache, and
/// the call-counting wrappers the pipeline talks to.
class ProviderSet {
 public:
  explicit ProviderSet(const RunConfig& cfg) {
    const auto& specs = cfg.providers;
    retry_.max_retries = cfg.retry_max;
    retry_.base_delay = std::chrono::milliseconds(cfg.retry_base_delay_ms);

    const std::string cache_dir = cfg.cache_dir.value_or(env_or("VFR_CACHE_DIR"));
    if (!cache_dir.empty()) cache_ = std::make_unique<EmbeddingCache>(cache_dir);

    chat_backend_ = make_chat(specs.chat, cfg.seed);
    vqa_backend_ = make_vqa(specs.vqa);
    make_vlm(specs.vlm, vlm_);
    filter_shared_ = specs.filtration() == specs.vlm;
    if (!filter_shared_) make_vlm(specs.filtration(), filter_);
    make_text_only(specs.semantic, semantic_);

    chat_ = std::make_unique<CountingChat>(*chat_backend_);
    vqa_ = std::make_unique<CountingVqa>(*vqa_backend_);
  }

  ChatProvider& chat() { return *chat_; }
  VqaProvider& vqa() { return *vqa_; }
  TextEmbedder& text() { return *vlm_.text; }
  ImageEmbedder& image() { return *vlm_.image; }
  TextEmbedder& filter_text() { return filter_shared_ ? *vlm_.text : *filter_.text; }
  ImageEmbedder& filter_image() { return filter_shared_ ? *vlm_.image : *filter_.image; }
  TextEmbedder& semantic() { return *semantic_.text; }
  bool filter_shared() const { return filter_shared_; }

  const CountingVqa& vqa_counter() const { return *vqa_; }
  const CountingChat& chat_counter() const { return *chat_; }
  const CountingTextEmbedder& text_counter() const { return *vlm_.text; }
  const CountingImageEmbedder& image_counter() const { return *vlm_.image; }

  nlohmann::json fingerprints() {
    return {{"chat", to_json(chat().fingerprint())},
            {"vqa", to_json(vqa().fingerprint())},
            {"vlm_text", to_json(text().fingerprint())},
            {"vlm_image", to_json(image().fingerprint())},
            {"filter_text", to_json(filter_text().fingerprint())},
            {"filter_image", to_json(filter_image().fingerprint())},
            {"semantic", to_json(semantic().fingerprint())}};
  }

  nlohmann::json call_counts() const {
    auto vlm_counts = [](const Vlm& v) {
      return nlohmann::json{{"text_batches", v.text->batches()},
                            {"text_inputs", v.text->inputs()},
                            {"image_raw", v.image ? v.image->raw_calls() : 0},
                            {"image_augmented", v.image ? v.image->augmented_calls() : 0}};
    };
    nlohmann::json j{{"chat", chat_->calls()}, {"vqa", vqa_->calls()}, {"vlm", vlm_counts(vlm_)}};
    if (!filter_shared_) j["filter_vlm"] = vlm_counts(filter_);
    j["semantic"] = {{"text_batches", semantic_.text->batches()},
                     {"text_inputs", semantic_.text->inputs()}};
    return j;
  }

 private:
  struct Vlm {
    std::unique_ptr<TextEmbedder> text_backend;
    std::unique_ptr<ImageEmbedder> image_backend;
    std::unique_ptr<TextEmbedder> text_cached;
    std::unique_ptr<ImageEmbedder> image_cached;
    std::unique_ptr<CountingTextEmbedder> text;
    std::unique_ptr<CountingImageEmbedder> image;
  };

  http::ClientOptions http_options(const ProviderSpec& spec, const char* url_env) const {
    http::ClientOptions o;
    o.base_url = spec.base_url.empty() ? env_or(url_env) : spec.base_url;
    require(!o.base_url.empty(), ErrorCode::InvalidConfig,
            std::string("http provider '") + spec.model + "' has no base_url and " + url_env +
                " is unset");
    o.model = spec.model;
    o.api_key = env_or("VFR_API_KEY");
    o.retry = retry_;
    return o;
  }

  std::unique_ptr<ChatProvider> make_chat(const ProviderSpec& spec, std::uint64_t run_seed) const {
    if (spec.kind == "http") return std::make_unique<http::ChatClient>(http_options(spec, "VFR_CHAT_URL"));
    // The generation stream follows the run seed so repeated runs differ.
    return std::make_unique<mock::MockChat>(spec.seed ^ (run_seed * 0x9E3779B97F4A7C15ULL), spec.model);
  }

  std::unique_ptr<VqaProvider> make_vqa(const ProviderSpec& spec) const {
    if (spec.kind == "http") return std::make_unique<http::VqaClient>(http_options(spec, "VFR_VQA_URL"));
    return std::make_unique<mock::MockVqa>(spec.seed, spec.model);
  }

  void make_text_only(const ProviderSpec& spec, Vlm& out) {
    if (spec.kind == "http") {
      out.text_backend = std::make_unique<http::TextEmbedClient>(http_options(spec, "VFR_EMBED_URL"), spec.dim);
    } else {
      out.text_backend = std::make_unique<mock::MockTextEmbedder>(spec.model, spec.dim, spec.seed);
    }
    TextEmbedder* text = out.text_backend.get();
    if (cache_) {
      out.text_cached = std::make_unique<CachedTextEmbedder>(*text, *cache_);
      text = out.text_cached.get();
    }
    out.text = std::make_unique<CountingTextEmbedder>(*text);
  }

  void make_vlm(const ProviderSpec& spec, Vlm& out) {
    make_text_only(spec, out);
    if (spec.kind == "http") {
      out.image_backend =
          std::make_unique<http::ImageEmbedClient>(http_options(spec, "VFR_EMBED_URL"), spec.dim);
    } else {
      out.image_backend = std::make_unique<mock::MockImageEmbedder>(spec.model, spec.dim, spec.seed);
    }
    ImageEmbedder* image = out.image_backend.get();
    if (cache_) {
      out.image_cached = std::make_unique<CachedImageEmbedder>(*image, *cache_);
      image = out.image_cached.get();
    }
    out.image = std::make_unique<CountingImageEmbedder>(*image);
  }

  RetryPolicy retry_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::unique_ptr<ChatProvider> chat_backend_;
  std::unique_ptr<VqaProvider> vqa_backend_;
  std::unique_ptr<CountingChat> chat_;
  std::unique_ptr<CountingVqa> vqa_;
  Vlm vlm_, filter_, semantic_;
  bool filter_shared_ = true;
};

}  // namespace vfr
