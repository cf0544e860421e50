#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vfr/hashing.hpp"
#include "vfr/providers/types.hpp"

namespace vfr {

struct AugmentationPolicy {
  double min_crop_area = 0.6;
  double min_aspect = 3.0 / 4.0;
  double max_aspect = 4.0 / 3.0;
  double flip_probability = 0.5;
};

/// The i-th random crop + flip for an image. Counter-based: each draw
/// depends only on (run seed, image content hash, index).
inline AugmentationParams augmentation_at(std::string_view image_hash, std::uint64_t seed,
                                          std::uint64_t index, const AugmentationPolicy& policy = {}) {
  const Digest d = Sha256().field("vfr.aug.v1").u64(seed).field(image_hash).u64(index).finish();
  HashStream stream(d);

  const double area = policy.min_crop_area + (1.0 - policy.min_crop_area) * stream.uniform();
  // Clip the aspect range so both sides fit inside the frame at this area.
  const double lo = std::log(std::max(policy.min_aspect, area));
  const double hi = std::log(std::min(policy.max_aspect, 1.0 / area));
  const double aspect = std::exp(lo + (hi - lo) * stream.uniform());
  const double w = std::min(1.0, std::sqrt(area * aspect));
  const double h = std::min(1.0, std::sqrt(area / aspect));

  AugmentationParams p;
  p.x0 = (1.0 - w) * stream.uniform();
  p.y0 = (1.0 - h) * stream.uniform();
  p.x1 = std::min(1.0, p.x0 + w);
  p.y1 = std::min(1.0, p.y0 + h);
  p.horizontal_flip = stream.uniform() < policy.flip_probability;
  p.seed = digest_word(d, 0);
  return p;
}

inline std::vector<AugmentationParams> augmentation_plan(std::string_view image_hash, std::size_t k,
                                                         std::uint64_t seed,
                                                         const AugmentationPolicy& policy = {}) {
  precondition(k >= 1, "augmentation count must be >= 1");
  std::vector<AugmentationParams> plan;
  plan.reserve(k);
  for (std::size_t i = 0; i < k; ++i) plan.push_back(augmentation_at(image_hash, seed, i, policy));
  return plan;
}

inline std::vector<AugmentationParams> augmentation_plan(const ImageRef& image, std::size_t k,
                                                         std::uint64_t seed,
                                                         const AugmentationPolicy& policy = {}) {
  return augmentation_plan(image_content_hash(image), k, seed, policy);
}

}  // namespace vfr
