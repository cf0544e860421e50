#pragma once

// Dataset manifest: JSONL, one entry per line:
//   {"image_path": "imgs/a.png", "gt_label": "Pine Warbler" | null, "split": "train" | "test"}
// Relative paths resolve against the manifest's directory; artifacts record
// them as written.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/error.hpp"
#include "vfr/hashing.hpp"
#include "vfr/image.hpp"

namespace vfr {

enum class Split { Train, Test };

struct ManifestEntry {
  std::string image_path;
  std::optional<std::string> gt_label;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::optional<std::size_t> images_per_class_limit;
  std::filesystem::path base_dir;

  static DatasetManifest parse(std::istream& in, std::filesystem::path base_dir = {}) {
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        ManifestEntry e;
        e.image_path = j.at("image_path").get<std::string>();
        if (j.contains("gt_label") && !j.at("gt_label").is_null()) {
          e.gt_label = j.at("gt_label").get<std::string>();
        }
        const std::string split = j.value("split", "train");
        require(split == "train" || split == "test", ErrorCode::InvalidManifest,
                "split must be 'train' or 'test'");
        e.split = split == "train" ? Split::Train : Split::Test;
        require(!e.image_path.empty(), ErrorCode::InvalidManifest, "empty image_path");
        m.entries.push_back(std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidManifest, "line " + std::to_string(lineno) + ": " + ex.what());
      } catch (const Error& ex) {
        throw Error(ErrorCode::InvalidManifest, "line " + std::to_string(lineno) + ": " + ex.what());
      }
    }
    m.validate();
    return m;
  }

  static DatasetManifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::IoError, "cannot open manifest " + path.string());
    return parse(in, path.parent_path());
  }

  /// Paths unique (hence train and test disjoint) and the per-class limit
  /// respected by labelled train entries.
  void validate() const {
    std::set<std::string> paths;
    for (const auto& e : entries) {
      require(paths.insert(e.image_path).second, ErrorCode::InvalidManifest,
              "duplicate image_path '" + e.image_path + "' (train and test must be disjoint)");
    }
    if (images_per_class_limit) {
      std::map<std::string, std::size_t> per_label;
      for (const auto& e : entries) {
        if (e.split != Split::Train || !e.gt_label) continue;
        require(++per_label[*e.gt_label] <= *images_per_class_limit, ErrorCode::InvalidManifest,
                "label '" + *e.gt_label + "' exceeds images_per_class_limit");
      }
    }
  }

  ImageRef image_ref(const ManifestEntry& e) const {
    std::filesystem::path p(e.image_path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return ImageRef(e.image_path, p);
  }

  std::vector<const ManifestEntry*> split(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
      if (e.split == s) out.push_back(&e);
    }
    return out;
  }

  std::vector<ImageRef> images(Split s) const {
    std::vector<ImageRef> out;
    for (const auto* e : split(s)) out.push_back(image_ref(*e));
    return out;
  }

  const ManifestEntry* find(const std::string& image_path) const {
    for (const auto& e : entries) {
      if (e.image_path == image_path) return &e;
    }
    return nullptr;
  }

  std::vector<std::string> gt_label_set() const {
    std::set<std::string> labels;
    for (const auto& e : entries) {
      if (e.gt_label) labels.insert(*e.gt_label);
    }
    return {labels.begin(), labels.end()};
  }

  /// Seeded low-resource sampling: keeps at most `limit` labelled train
  /// entries per label, chosen by SHA-256(seed, path) rank. Unlabelled and
  /// test entries are kept; manifest order is preserved.
  DatasetManifest sample_train(std::size_t limit, std::uint64_t seed) const {
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> ranked;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.split != Split::Train || !e.gt_label) continue;
      const Digest d = Sha256().field("vfr.sample.v1").u64(seed).field(e.image_path).finish();
      ranked[*e.gt_label].emplace_back(to_hex(d), i);
    }
    std::set<std::size_t> keep;
    for (auto& [_, v] : ranked) {
      std::sort(v.begin(), v.end());
      for (std::size_t k = 0; k < std::min(limit, v.size()); ++k) keep.insert(v[k].second);
    }
    DatasetManifest out;
    out.base_dir = base_dir;
    out.images_per_class_limit = limit;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.split == Split::Train && e.gt_label && !keep.contains(i)) continue;
      out.entries.push_back(e);
    }
    out.validate();
    return out;
  }
};

}  // namespace vfr
