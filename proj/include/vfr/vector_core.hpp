#pragma once

// Deterministic double-precision vector arithmetic shared by every stage of
// the pipeline: l2 normalization, clamped cosine similarity and the mean of
// normalized vectors used for text and visual prototypes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vfr/error.hpp"

namespace vfr {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kUnitTolerance = 1e-6;

/// Fixed-dimension real vector in the shared embedding space.
/// Always non-empty with finite components.
class EmbeddingVector {
 public:
  EmbeddingVector(std::initializer_list<double> values)
      : EmbeddingVector(std::vector<double>(values)) {}

  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), ErrorCode::EmptyInput, "embedding vector must have dim >= 1");
    for (double v : values_) {
      require(std::isfinite(v), ErrorCode::NonFiniteValue, "embedding component is NaN or Inf");
    }
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// An EmbeddingVector whose l2 norm is 1 within kUnitTolerance.
class UnitVector {
 public:
  explicit UnitVector(EmbeddingVector inner);

  const EmbeddingVector& vector() const noexcept { return inner_; }
  std::size_t dim() const noexcept { return inner_.dim(); }
  std::span<const double> values() const noexcept { return inner_.values(); }
  double operator[](std::size_t i) const { return inner_[i]; }

  bool operator==(const UnitVector&) const = default;

 private:
  EmbeddingVector inner_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch,
          "dim " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> v) {
  // Scaled accumulation avoids overflow/underflow for extreme magnitudes.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : v) {
    const double r = x / scale;
    acc += r * r;
  }
  return scale * std::sqrt(acc);
}

inline double l2_norm(const EmbeddingVector& v) { return l2_norm(v.values()); }

inline UnitVector::UnitVector(EmbeddingVector inner) : inner_(std::move(inner)) {
  require(std::abs(l2_norm(inner_) - 1.0) <= kUnitTolerance, ErrorCode::PreconditionViolated,
          "vector is not unit-norm");
}

inline UnitVector normalize(const EmbeddingVector& v) {
  const double n = l2_norm(v);
  require(n > kNormEpsilon, ErrorCode::ZeroNormVector, "cannot normalize a zero-norm vector");
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] / n;
  return UnitVector(EmbeddingVector(std::move(out)));
}

/// aᵀb / (‖a‖‖b‖), clamped to [-1, 1].
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  require(a.dim() == b.dim(), ErrorCode::DimensionMismatch,
          "cosine over dim " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  require(na > kNormEpsilon && nb > kNormEpsilon, ErrorCode::ZeroNormVector,
          "cosine of a zero-norm vector");
  return std::clamp(dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
}

inline double cosine(const UnitVector& a, const EmbeddingVector& b) { return cosine(a.vector(), b); }

/// (1/M) Σ normalize(vᵢ). The result is not re-normalized, so ‖result‖ ≤ 1.
inline EmbeddingVector mean_of_normalized(std::span<const EmbeddingVector> vs) {
  require(!vs.empty(), ErrorCode::EmptyInput, "mean of an empty vector list");
  const std::size_t d = vs.front().dim();
  std::vector<double> acc(d, 0.0);
  for (const auto& v : vs) {
    require(v.dim() == d, ErrorCode::DimensionMismatch, "mixed dims in mean_of_normalized");
    const UnitVector u = normalize(v);
    for (std::size_t i = 0; i < d; ++i) acc[i] += u[i];
  }
  const double m = static_cast<double>(vs.size());
  for (double& x : acc) x /= m;
  return EmbeddingVector(std::move(acc));
}

inline EmbeddingVector scaled(const EmbeddingVector& v, double factor) {
  std::vector<double> out(v.data());
  for (double& x : out) x *= factor;
  return EmbeddingVector(std::move(out));
}

/// alpha·a + (1 − alpha)·b.
inline EmbeddingVector convex_mix(const EmbeddingVector& a, const EmbeddingVector& b, double alpha) {
  require(a.dim() == b.dim(), ErrorCode::DimensionMismatch, "convex_mix over mismatched dims");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return EmbeddingVector(std::move(out));
}

/// Applied to prototypes only when `renormalize_prototypes` is enabled.
inline EmbeddingVector maybe_renormalize(EmbeddingVector v, bool renormalize) {
  if (!renormalize) return v;
  return normalize(v).vector();
}

}  // namespace vfr
