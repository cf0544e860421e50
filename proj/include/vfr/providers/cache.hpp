#pragma once

// Content-addressed on-disk embedding cache.
//
// Key   = SHA-256(provider fingerprint, input content hash, augmentation).
// Entry = "VFRE" | u32 version | u64 dim | dim x f64 (little endian)
//         | SHA-256 of everything before it.
// Entries are written to a temp file and renamed into place. A checksum
// mismatch on read is treated as a miss and the entry is rewritten.

#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vfr/hashing.hpp"
#include "vfr/providers/interfaces.hpp"

namespace vfr {

struct CacheKey {
  std::string hex;

  static CacheKey make(const ProviderFingerprint& fp, std::string_view content_hash,
                       const std::optional<AugmentationParams>& aug = std::nullopt) {
    const Digest d = Sha256()
                         .field(to_json(fp).dump())
                         .field(content_hash)
                         .field(aug ? canonical_aug(aug) : std::string("none"))
                         .finish();
    return {to_hex(d)};
  }
};

class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path entry_path(const CacheKey& key) const {
    return root_ / key.hex.substr(0, 2) / (key.hex + ".vec");
  }

  /// Returns the cached vector, or nullopt when absent or corrupt.
  std::optional<EmbeddingVector> get(const CacheKey& key) const {
    std::ifstream in(entry_path(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto decoded = decode(bytes);
    if (!decoded) corruptions_.fetch_add(1);
    return decoded;
  }

  void put(const CacheKey& key, const EmbeddingVector& v) const {
    const auto path = entry_path(key);
    std::filesystem::create_directories(path.parent_path());
    static std::atomic<std::uint64_t> counter{0};
    const auto tmp = path.string() + ".tmp." +
                     std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
                     std::to_string(counter.fetch_add(1));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      require(out.good(), ErrorCode::IoError, "cannot write cache entry " + tmp);
      const std::string bytes = encode(v);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      require(out.good(), ErrorCode::IoError, "short write on cache entry " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  /// First call computes and persists; later calls read the persisted bytes.
  EmbeddingVector get_or_compute(const CacheKey& key, const std::function<EmbeddingVector()>& compute) {
    std::lock_guard lock(stripe(key));
    if (auto hit = get(key)) return *std::move(hit);
    EmbeddingVector v = compute();
    put(key, v);
    return v;
  }

  std::size_t corruptions_seen() const { return corruptions_.load(); }

  static std::string encode(const EmbeddingVector& v) {
    std::string out = "VFRE";
    append_le(out, std::uint64_t{1}, 4);
    append_le(out, static_cast<std::uint64_t>(v.dim()), 8);
    for (double x : v.values()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &x, sizeof bits);
      append_le(out, bits, 8);
    }
    const Digest d = Sha256().raw({reinterpret_cast<const std::uint8_t*>(out.data()), out.size()}).finish();
    out.append(reinterpret_cast<const char*>(d.data()), d.size());
    return out;
  }

  static std::optional<EmbeddingVector> decode(const std::string& bytes) {
    constexpr std::size_t kHeader = 4 + 4 + 8;
    if (bytes.size() < kHeader + 32 || bytes.compare(0, 4, "VFRE") != 0) return std::nullopt;
    const std::size_t body = bytes.size() - 32;
    const Digest d = Sha256().raw({reinterpret_cast<const std::uint8_t*>(bytes.data()), body}).finish();
    if (std::memcmp(d.data(), bytes.data() + body, 32) != 0) return std::nullopt;
    if (read_le(bytes, 4, 4) != 1) return std::nullopt;
    const std::uint64_t dim = read_le(bytes, 8, 8);
    if (dim == 0 || kHeader + dim * 8 != body) return std::nullopt;
    std::vector<double> values(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const std::uint64_t bits = read_le(bytes, kHeader + 8 * i, 8);
      std::memcpy(&values[i], &bits, sizeof bits);
    }
    try {
      return EmbeddingVector(std::move(values));
    } catch (const Error&) {
      return std::nullopt;
    }
  }

 private:
  static void append_le(std::string& out, std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  static std::uint64_t read_le(const std::string& in, std::size_t at, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
  }

  std::mutex& stripe(const CacheKey& key) {
    return stripes_[std::hash<std::string>{}(key.hex) % stripes_.size()];
  }

  std::filesystem::path root_;
  std::array<std::mutex, 64> stripes_;
  mutable std::atomic<std::size_t> corruptions_{0};
};

/// TextEmbedder decorator: misses are embedded in one batched inner call.
class CachedTextEmbedder final : public TextEmbedder {
 public:
  CachedTextEmbedder(TextEmbedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }

  std::vector<EmbeddingVector> embed_text(std::span<const std::string> inputs) override {
    check_embed_text_preconditions(inputs);
    const ProviderFingerprint fp = inner_.fingerprint();
    std::vector<std::optional<EmbeddingVector>> slots(inputs.size());
    std::vector<CacheKey> keys;
    std::vector<std::size_t> missing;
    std::vector<std::string> missing_text;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      keys.push_back(CacheKey::make(fp, sha256_hex(inputs[i])));
      slots[i] = cache_.get(keys[i]);
      if (!slots[i]) {
        missing.push_back(i);
        missing_text.push_back(inputs[i]);
      }
    }
    if (!missing.empty()) {
      auto fresh = inner_.embed_text(missing_text);
      check_embedding_dims(fresh, missing.size(), fp.dim);
      for (std::size_t j = 0; j < missing.size(); ++j) {
        cache_.put(keys[missing[j]], fresh[j]);
        slots[missing[j]] = std::move(fresh[j]);
      }
    }
    std::vector<EmbeddingVector> out;
    out.reserve(inputs.size());
    for (auto& s : slots) out.push_back(*std::move(s));
    return out;
  }

 private:
  TextEmbedder& inner_;
  EmbeddingCache& cache_;
};

class CachedImageEmbedder final : public ImageEmbedder {
 public:
  CachedImageEmbedder(ImageEmbedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}

  ProviderFingerprint fingerprint() const override { return inner_.fingerprint(); }

  EmbeddingVector embed_image(const ImageRef& image,
                              const std::optional<AugmentationParams>& aug) override {
    const CacheKey key = CacheKey::make(inner_.fingerprint(), image_content_hash(image), aug);
    return cache_.get_or_compute(key, [&] { return inner_.embed_image(image, aug); });
  }

 private:
  ImageEmbedder& inner_;
  EmbeddingCache& cache_;
};

}  // namespace vfr
