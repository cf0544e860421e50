#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/error.hpp"
#include "vfr/hashing.hpp"

namespace vfr::artifacts {

inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kVocabulary = "vocabulary.json";
inline constexpr const char* kContexts = "contexts.jsonl";
inline constexpr const char* kRefinement = "refinement.json";
inline constexpr const char* kClassifier = "classifier.json";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kPerImage = "per_image.csv";
inline constexpr const char* kRunManifest = "run_manifest.json";
inline constexpr const char* kAggregate = "aggregate.json";

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  const auto tmp = path.string() + ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorCode::IoError, "short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string jsonl_text(const std::vector<nlohmann::json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// UTC ISO-8601 timestamp; honors SOURCE_DATE_EPOCH for reproducible output.
inline std::string timestamp_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace vfr::artifacts
