#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/classifier.hpp"
#include "vfr/error.hpp"
#include "vfr/hashing.hpp"

namespace vfr {

struct ProviderSpec {
  std::string kind = "mock";  // "mock" | "http"
  std::string base_url;       // http only; falls back to VFR_*_URL
  std::string model;
  std::size_t dim = 0;        // embedders only
  std::uint64_t seed = 0;     // mock only

  bool operator==(const ProviderSpec&) const = default;
};

inline nlohmann::json to_json(const ProviderSpec& p) {
  nlohmann::json j{{"kind", p.kind}, {"model", p.model}};
  if (!p.base_url.empty()) j["base_url"] = p.base_url;
  if (p.dim) j["dim"] = p.dim;
  if (p.kind == "mock") j["seed"] = p.seed;
  return j;
}

inline ProviderSpec provider_spec_from_json(const nlohmann::json& j, const ProviderSpec& defaults) {
  ProviderSpec p = defaults;
  p.kind = j.value("kind", p.kind);
  p.base_url = j.value("base_url", p.base_url);
  p.model = j.value("model", p.model);
  p.dim = j.value("dim", p.dim);
  p.seed = j.value("seed", p.seed);
  require(p.kind == "mock" || p.kind == "http", ErrorCode::InvalidConfig,
          "provider kind must be 'mock' or 'http', got '" + p.kind + "'");
  return p;
}

struct ProviderSpecs {
  ProviderSpec chat{"mock", "", "mock-chat"};
  ProviderSpec vqa{"mock", "", "mock-vqa"};
  ProviderSpec vlm{"mock", "", "mock-clip-b16", 64};
  std::optional<ProviderSpec> filter_vlm;  // defaults to vlm
  ProviderSpec semantic{"mock", "", "mock-sentence-encoder", 32};

  const ProviderSpec& filtration() const { return filter_vlm ? *filter_vlm : vlm; }
};

struct RunConfig {
  RunMode mode = RunMode::VocabularyFree;
  std::uint64_t seed = 0;
  double alpha = 0.7;
  std::size_t k_aug = 10;
  std::size_t m_contexts = 100;
  double retention_ratio = 0.8;
  std::optional<std::size_t> k_override;
  bool ccg_enabled = true;
  bool cnr_enabled = true;
  bool renormalize_prototypes = false;
  double min_context_fraction = 0.5;
  double context_temperature = 0.7;
  double min_crop_area = 0.6;
  std::optional<std::size_t> images_per_class_limit;
  std::size_t repeat_runs = 1;
  std::size_t max_parallel_requests = 8;
  int retry_max = 3;
  std::size_t retry_base_delay_ms = 500;
  std::optional<std::string> meta_category;
  std::vector<std::string> known_names;
  std::optional<std::string> prompt_pack;
  std::optional<std::string> cache_dir;
  ProviderSpecs providers;

  void validate() const {
    auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::InvalidConfig, what); };
    check(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
    check(k_aug >= 1, "k_aug must be >= 1");
    check(m_contexts >= 1, "m_contexts must be >= 1");
    check(retention_ratio > 0.0 && retention_ratio <= 1.0, "retention_ratio must be in (0, 1]");
    check(!k_override || *k_override >= 1, "k_override must be >= 1");
    check(min_context_fraction > 0.0 && min_context_fraction <= 1.0,
          "min_context_fraction must be in (0, 1]");
    check(context_temperature >= 0.0 && context_temperature <= 2.0,
          "context_temperature must be in [0, 2]");
    check(min_crop_area > 0.0 && min_crop_area <= 1.0, "min_crop_area must be in (0, 1]");
    check(!images_per_class_limit || *images_per_class_limit >= 1, "images_per_class_limit must be >= 1");
    check(repeat_runs >= 1, "repeat_runs must be >= 1");
    check(max_parallel_requests >= 1, "max_parallel_requests must be >= 1");
    check(retry_max >= 0, "retry_max must be >= 0");
    for (const auto* p : {&providers.vlm, &providers.filtration(), &providers.semantic}) {
      check(p->dim >= 1, "embedder '" + p->model + "' needs dim >= 1");
    }
  }

  /// Everything that influences results; excludes filesystem locations.
  nlohmann::json to_json() const {
    nlohmann::json j{{"mode", to_string(mode)},
                     {"seed", seed},
                     {"alpha", alpha},
                     {"k_aug", k_aug},
                     {"m_contexts", m_contexts},
                     {"retention_ratio", retention_ratio},
                     {"ccg_enabled", ccg_enabled},
                     {"cnr_enabled", cnr_enabled},
                     {"renormalize_prototypes", renormalize_prototypes},
                     {"min_context_fraction", min_context_fraction},
                     {"context_temperature", context_temperature},
                     {"min_crop_area", min_crop_area},
                     {"repeat_runs", repeat_runs},
                     {"known_names", known_names}};
    auto opt = [&](const char* key, const auto& v) {
      j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    opt("k_override", k_override);
    opt("images_per_class_limit", images_per_class_limit);
    opt("meta_category", meta_category);
    j["providers"] = {{"chat", vfr::to_json(providers.chat)},
                      {"vqa", vfr::to_json(providers.vqa)},
                      {"vlm", vfr::to_json(providers.vlm)},
                      {"filter_vlm", vfr::to_json(providers.filtration())},
                      {"semantic", vfr::to_json(providers.semantic)}};
    return j;
  }

  std::string hash() const { return sha256_hex(to_json().dump()); }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
      if (j.contains("mode")) c.mode = run_mode_from_string(j.at("mode").get<std::string>());
      c.seed = j.value("seed", c.seed);
      c.alpha = j.value("alpha", c.alpha);
      c.k_aug = j.value("k_aug", c.k_aug);
      c.m_contexts = j.value("m_contexts", c.m_contexts);
      c.retention_ratio = j.value("retention_ratio", c.retention_ratio);
      c.ccg_enabled = j.value("ccg_enabled", c.ccg_enabled);
      c.cnr_enabled = j.value("cnr_enabled", c.cnr_enabled);
      c.renormalize_prototypes = j.value("renormalize_prototypes", c.renormalize_prototypes);
      c.min_context_fraction = j.value("min_context_fraction", c.min_context_fraction);
      c.context_temperature = j.value("context_temperature", c.context_temperature);
      c.min_crop_area = j.value("min_crop_area", c.min_crop_area);
      c.repeat_runs = j.value("repeat_runs", c.repeat_runs);
      c.max_parallel_requests = j.value("max_parallel_requests", c.max_parallel_requests);
      c.retry_max = j.value("retry_max", c.retry_max);
      c.retry_base_delay_ms = j.value("retry_base_delay_ms", c.retry_base_delay_ms);
      c.known_names = j.value("known_names", c.known_names);
      auto opt_size = [&](const char* key, std::optional<std::size_t>& out) {
        if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<std::size_t>();
      };
      auto opt_str = [&](const char* key, std::optional<std::string>& out) {
        if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<std::string>();
      };
      opt_size("k_override", c.k_override);
      opt_size("images_per_class_limit", c.images_per_class_limit);
      opt_str("meta_category", c.meta_category);
      opt_str("prompt_pack", c.prompt_pack);
      opt_str("cache_dir", c.cache_dir);
      if (j.contains("providers")) {
        const auto& p = j.at("providers");
        auto spec = [&](const char* key, ProviderSpec& out) {
          if (p.contains(key) && !p.at(key).is_null()) out = provider_spec_from_json(p.at(key), out);
        };
        spec("chat", c.providers.chat);
        spec("vqa", c.providers.vqa);
        spec("vlm", c.providers.vlm);
        spec("semantic", c.providers.semantic);
        if (p.contains("filter_vlm") && !p.at("filter_vlm").is_null()) {
          c.providers.filter_vlm = provider_spec_from_json(p.at("filter_vlm"), c.providers.vlm);
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, e.what());
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::IoError, "cannot open config " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
  }

  RefinementConfig refinement() const { return {retention_ratio, k_override, cnr_enabled}; }

  GroundingOptions grounding() const {
    return {m_contexts, min_context_fraction, context_temperature, renormalize_prototypes};
  }

  ClassifierConfig classifier() const {
    ClassifierConfig c;
    c.alpha = alpha;
    c.k_aug = k_aug;
    c.seed = seed;
    c.augmentation.min_crop_area = min_crop_area;
    c.renormalize_prototypes = renormalize_prototypes;
    c.max_parallel_requests = max_parallel_requests;
    return c;
  }
};

}  // namespace vfr
