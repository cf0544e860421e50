#pragma once

// Temp dirs, random generators, scripted providers, and naive reference
// implementations shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vfr/vfr.hpp"

namespace vfr::testing {

inline std::filesystem::path source_dir() { return VFR_SOURCE_DIR; }
inline std::filesystem::path fixture_dir() { return source_dir() / "data" / "fixtures" / "mock3"; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vfr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes a MOCKIMG file and returns an ImageRef labelled with its file name.
inline ImageRef mock_image(const std::filesystem::path& dir, const std::string& name,
                           const std::map<std::string, std::string>& fields = {}) {
  std::string body = "MOCKIMG\nid: " + name + "\n";
  for (const auto& [k, v] : fields) body += k + ": " + v + "\n";
  write_file(dir / name, body);
  return ImageRef(name, dir / name);
}

inline std::vector<ImageRef> mock_images(const std::filesystem::path& dir, const std::string& prefix,
                                         std::size_t n) {
  std::vector<ImageRef> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(mock_image(dir, prefix + std::to_string(i) + ".img"));
  return out;
}

using Rng = std::mt19937_64;

inline std::vector<double> random_values(Rng& rng, std::size_t dim, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(dim);
  do {
    for (double& x : v) x = u(rng);
  } while (std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)) < 1e-3);
  return v;
}

inline EmbeddingVector random_vector(Rng& rng, std::size_t dim, double lo = -1.0, double hi = 1.0) {
  return EmbeddingVector(random_values(rng, dim, lo, hi));
}

inline std::string random_word(Rng& rng, std::size_t min_len = 3, std::size_t max_len = 9) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> ch('a', 'z');
  std::string s(len(rng), 'a');
  for (char& c : s) c = static_cast<char>(ch(rng));
  return s;
}

// ---- naive oracles -------------------------------------------------------

inline std::vector<double> naive_normalize(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  std::vector<double> out;
  for (double x : v) out.push_back(x / n);
  return out;
}

inline double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

/// Two passes: normalize everything, then average.
inline std::vector<double> naive_mean_of_normalized(const std::vector<std::vector<double>>& vs) {
  std::vector<std::vector<double>> units;
  for (const auto& v : vs) units.push_back(naive_normalize(v));
  std::vector<double> mean(vs.front().size(), 0.0);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    for (const auto& u : units) mean[i] += u[i];
    mean[i] /= static_cast<double>(units.size());
  }
  return mean;
}

/// Best total over every injective row->column map (rows <= cols) or
/// column->row map, by exhaustive permutation.
inline double brute_force_best_total(const ScoreMatrix& s) {
  const std::size_t p = s.rows(), t = s.cols();
  const std::size_t n = std::max(p, t);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r < p && perm[r] < t) total += s(r, perm[r]);
    }
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// cACC by trying every injective relabeling of predicted names.
inline double brute_force_cacc(const std::vector<std::string>& preds, const std::vector<std::string>& gts) {
  std::vector<std::string> pn(preds.begin(), preds.end()), tn(gts.begin(), gts.end());
  std::sort(pn.begin(), pn.end());
  pn.erase(std::unique(pn.begin(), pn.end()), pn.end());
  std::sort(tn.begin(), tn.end());
  tn.erase(std::unique(tn.begin(), tn.end()), tn.end());
  ScoreMatrix counts(pn.size(), tn.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto r = std::find(pn.begin(), pn.end(), preds[i]) - pn.begin();
    const auto c = std::find(tn.begin(), tn.end(), gts[i]) - tn.begin();
    counts(r, c) += 1.0;
  }
  return brute_force_best_total(counts) / static_cast<double>(preds.size());
}

// ---- scripted providers --------------------------------------------------

/// Replies from a queue (the last reply repeats once the queue runs dry) and
/// records every request.
class ScriptedChat final : public ChatProvider {
 public:
  explicit ScriptedChat(std::vector<std::string> replies) : replies_(replies.begin(), replies.end()) {}

  ProviderFingerprint fingerprint() const override { return {ProviderKind::Chat, "script://", "scripted"}; }

  std::string chat(std::span<const ChatMessage> messages, double temperature) override {
    check_chat_preconditions(messages);
    std::lock_guard lock(mu_);
    requests_.emplace_back(messages.begin(), messages.end());
    temperatures_.push_back(temperature);
    std::string r = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return r;
  }

  std::size_t calls() const { return requests_.size(); }
  const std::vector<std::vector<ChatMessage>>& requests() const { return requests_; }
  const std::vector<double>& temperatures() const { return temperatures_; }

 private:
  std::mutex mu_;
  std::deque<std::string> replies_;
  std::vector<std::vector<ChatMessage>> requests_;
  std::vector<double> temperatures_;
};

/// Answers by image label; the meta question gets `meta[label]`, any other
/// question gets `attr[label]` or a fallback.
class TableVqa final : public VqaProvider {
 public:
  std::map<std::string, std::string> meta;
  std::map<std::string, std::string> other;
  std::string fallback = "no idea";

  ProviderFingerprint fingerprint() const override { return {ProviderKind::Vqa, "table://", "table"}; }

  std::string vqa(const ImageRef& image, const std::string& question) override {
    calls_.fetch_add(1);
    if (question == PromptPack{}.meta_question) {
      if (auto it = meta.find(image.label); it != meta.end()) return it->second;
    } else if (auto it = other.find(image.label); it != other.end()) {
      return it->second;
    }
    return fallback;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Image embedder with hand-set vectors per (label, augmented?) for
/// constructed fixtures. Unknown images fall through to a mock embedder.
class TableImageEmbedder final : public ImageEmbedder {
 public:
  explicit TableImageEmbedder(std::size_t dim) : fallback_("table-fallback", dim, 99), dim_(dim) {}

  std::map<std::string, EmbeddingVector> raw;

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::ImageEmbed, "table://", "table-image", dim_};
  }

  EmbeddingVector embed_image(const ImageRef& image, const std::optional<AugmentationParams>& aug) override {
    calls_.fetch_add(1);
    if (!aug) {
      if (auto it = raw.find(image.label); it != raw.end()) return it->second;
    }
    return fallback_.embed_image(image, aug);
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  mock::MockImageEmbedder fallback_;
  std::size_t dim_;
  std::atomic<std::size_t> calls_{0};
};

inline GroundedClass grounded(const std::string& name, EmbeddingVector t_c) {
  return {name, ContextSet{name, {}, 0}, std::move(t_c)};
}

}  // namespace vfr::testing
