#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "vfr/error.hpp"
#include "vfr/hashing.hpp"

namespace vfr {

/// Reference to an image on disk. `label` is the path as written in the
/// manifest and is what artifacts record; `location` is where bytes are read.
struct ImageRef {
  std::string label;
  std::filesystem::path location;

  ImageRef() = default;
  explicit ImageRef(std::filesystem::path path) : label(path.generic_string()), location(std::move(path)) {}
  ImageRef(std::string label_, std::filesystem::path location_)
      : label(std::move(label_)), location(std::move(location_)) {}

  bool operator==(const ImageRef& other) const { return label == other.label; }
};

inline std::string read_image_bytes(const ImageRef& image) {
  std::ifstream in(image.location, std::ios::binary);
  require(in.good(), ErrorCode::ImageUnreadable, "cannot open image '" + image.label + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::ImageUnreadable, "read failed for '" + image.label + "'");
  require(!bytes.empty(), ErrorCode::ImageUnreadable, "image '" + image.label + "' is empty");
  return bytes;
}

inline std::string image_content_hash(const ImageRef& image) {
  return sha256_hex(read_image_bytes(image));
}

}  // namespace vfr
