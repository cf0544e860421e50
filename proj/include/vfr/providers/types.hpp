#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/error.hpp"
#include "vfr/image.hpp"
#include "vfr/vector_core.hpp"

namespace vfr {

enum class ChatRole { System, User, Assistant };

inline std::string to_string(ChatRole role) {
  switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  ChatRole role;
  std::string content;

  ChatMessage(ChatRole r, std::string c) : role(r), content(std::move(c)) {
    precondition(!content.empty(), "chat message content must be non-empty");
  }
};

enum class ProviderKind { Chat, Vqa, TextEmbed, ImageEmbed };

inline std::string to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::Chat: return "chat";
    case ProviderKind::Vqa: return "vqa";
    case ProviderKind::TextEmbed: return "text_embed";
    case ProviderKind::ImageEmbed: return "image_embed";
  }
  return "chat";
}

inline ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "chat") return ProviderKind::Chat;
  if (s == "vqa") return ProviderKind::Vqa;
  if (s == "text_embed") return ProviderKind::TextEmbed;
  if (s == "image_embed") return ProviderKind::ImageEmbed;
  throw Error(ErrorCode::InvalidConfig, "unknown provider kind '" + s + "'");
}

/// Identifies which backend produced an output; embedders carry their dim.
struct ProviderFingerprint {
  ProviderKind kind = ProviderKind::Chat;
  std::string endpoint_id;
  std::string model_id;
  std::optional<std::size_t> dim;

  ProviderFingerprint() = default;
  ProviderFingerprint(ProviderKind k, std::string endpoint, std::string model,
                      std::optional<std::size_t> d = std::nullopt)
      : kind(k), endpoint_id(std::move(endpoint)), model_id(std::move(model)), dim(d) {
    const bool embedder = kind == ProviderKind::TextEmbed || kind == ProviderKind::ImageEmbed;
    precondition(embedder == dim.has_value(), "fingerprint dim must be present iff embedder");
    precondition(!dim || *dim > 0, "fingerprint dim must be positive");
  }

  bool operator==(const ProviderFingerprint&) const = default;
};

inline nlohmann::json to_json(const ProviderFingerprint& fp) {
  nlohmann::json j{{"provider_kind", to_string(fp.kind)},
                   {"endpoint_id", fp.endpoint_id},
                   {"model_id", fp.model_id}};
  j["dim"] = fp.dim ? nlohmann::json(*fp.dim) : nlohmann::json(nullptr);
  return j;
}

inline ProviderFingerprint fingerprint_from_json(const nlohmann::json& j) {
  std::optional<std::size_t> dim;
  if (j.contains("dim") && !j.at("dim").is_null()) dim = j.at("dim").get<std::size_t>();
  return ProviderFingerprint(provider_kind_from_string(j.at("provider_kind").get<std::string>()),
                             j.at("endpoint_id").get<std::string>(),
                             j.at("model_id").get<std::string>(), dim);
}

/// Crop rectangle as fractions of image extent plus a horizontal flip.
struct AugmentationParams {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  bool horizontal_flip = false;
  std::uint64_t seed = 0;

  double area() const { return (x1 - x0) * (y1 - y0); }

  void validate(double min_crop_area) const {
    precondition(0.0 <= x0 && x0 < x1 && x1 <= 1.0, "crop x-range outside [0, 1]");
    precondition(0.0 <= y0 && y0 < y1 && y1 <= 1.0, "crop y-range outside [0, 1]");
    precondition(area() >= min_crop_area - 1e-12, "crop area below min_crop_area");
  }

  static AugmentationParams identity() { return {}; }

  bool operator==(const AugmentationParams&) const = default;
};

/// Canonical text for hashing and cache keys. An absent augmentation is the
/// full-frame, unflipped view. The seed is excluded: it only drives
/// generation, the encoder sees the rectangle and flip alone.
inline std::string canonical_aug(const std::optional<AugmentationParams>& aug) {
  const AugmentationParams a = aug.value_or(AugmentationParams::identity());
  char buf[160];
  std::snprintf(buf, sizeof buf, "crop=%.17g,%.17g,%.17g,%.17g;hflip=%d", a.x0, a.y0, a.x1, a.y1,
                a.horizontal_flip ? 1 : 0);
  return buf;
}

}  // namespace vfr
