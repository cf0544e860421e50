#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/classifier.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/text_util.hpp"

namespace vfr {

/// Dense row-major P×T matrix of finite scores.
class ScoreMatrix {
 public:
  ScoreMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;

/// Maximum-weight one-to-one matching of size min(P, T). The matrix is
/// zero-padded to square and solved with the O(n³) potentials form of the
/// Hungarian method.
inline Assignment hungarian_assignment(const ScoreMatrix& score) {
  precondition(score.rows() >= 1 && score.cols() >= 1, "assignment needs a non-empty matrix");
  const std::size_t n = std::max(score.rows(), score.cols());
  double max_score = 0.0;
  for (std::size_t r = 0; r < score.rows(); ++r) {
    for (std::size_t c = 0; c < score.cols(); ++c) {
      precondition(std::isfinite(score(r, c)), "assignment scores must be finite");
      max_score = std::max(max_score, score(r, c));
    }
  }
  // Minimize cost = max_score − score over the padded square.
  auto cost = [&](std::size_t r, std::size_t c) {
    const double s = (r < score.rows() && c < score.cols()) ? score(r, c) : 0.0;
    return max_score - s;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match_of_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_of_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match_of_col[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match_of_col[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_of_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_of_col[col0] = match_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  Assignment out;
  for (std::size_t c = 1; c <= n; ++c) {
    const std::size_t r = match_of_col[c] - 1;
    if (r < score.rows() && c - 1 < score.cols()) out.emplace_back(r, c - 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double assignment_total(const ScoreMatrix& score, const Assignment& a) {
  double total = 0.0;
  for (const auto& [r, c] : a) total += score(r, c);
  return total;
}

/// Counts of (predicted name, ground-truth name) pairs; rows and columns
/// are in sorted name order.
struct ContingencyTable {
  std::vector<std::string> predicted;
  std::vector<std::string> truth;
  ScoreMatrix counts{1, 1};
  std::size_t n_total = 0;

  static ContingencyTable build(std::span<const std::string> preds, std::span<const std::string> gts) {
    require(preds.size() == gts.size(), ErrorCode::LengthMismatch,
            std::to_string(preds.size()) + " predictions vs " + std::to_string(gts.size()) + " labels");
    require(!preds.empty(), ErrorCode::LengthMismatch, "no predictions to evaluate");
    ContingencyTable t;
    std::set<std::string> ps(preds.begin(), preds.end()), ts(gts.begin(), gts.end());
    t.predicted.assign(ps.begin(), ps.end());
    t.truth.assign(ts.begin(), ts.end());
    t.counts = ScoreMatrix(t.predicted.size(), t.truth.size());
    auto index = [](const std::vector<std::string>& v, const std::string& s) {
      return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
    };
    for (std::size_t i = 0; i < preds.size(); ++i) {
      t.counts(index(t.predicted, preds[i]), index(t.truth, gts[i])) += 1.0;
    }
    t.n_total = preds.size();
    return t;
  }
};

inline double clustering_accuracy(std::span<const std::string> preds, std::span<const std::string> gts) {
  const auto table = ContingencyTable::build(preds, gts);
  const double matched = assignment_total(table.counts, hungarian_assignment(table.counts));
  return matched / static_cast<double>(table.n_total);
}

inline std::vector<std::string> predicted_names(std::span<const Prediction> predictions) {
  std::vector<std::string> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back(p.predicted_name);
  return out;
}

inline double clustering_accuracy(std::span<const Prediction> predictions, std::span<const std::string> gts) {
  const auto names = predicted_names(predictions);
  return clustering_accuracy(std::span<const std::string>(names), gts);
}

/// Per-image max(0, cos(e(pred), e(gt))), averaged; returns the per-image
/// similarities through `per_image` when given.
inline double semantic_accuracy(std::span<const std::string> preds, std::span<const std::string> gts,
                                TextEmbedder& sem_embedder, std::vector<double>* per_image = nullptr) {
  require(preds.size() == gts.size(), ErrorCode::LengthMismatch,
          std::to_string(preds.size()) + " predictions vs " + std::to_string(gts.size()) + " labels");
  require(!preds.empty(), ErrorCode::LengthMismatch, "no predictions to evaluate");
  std::set<std::string> unique(preds.begin(), preds.end());
  unique.insert(gts.begin(), gts.end());
  const std::vector<std::string> names(unique.begin(), unique.end());
  const auto vecs = sem_embedder.embed_text(names);
  check_embedding_dims(vecs, names.size(), sem_embedder.fingerprint().dim);
  std::map<std::string, const EmbeddingVector*> lookup;
  for (std::size_t i = 0; i < names.size(); ++i) lookup[names[i]] = &vecs[i];

  double acc = 0.0;
  if (per_image) per_image->clear();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    // Identical names are exactly similar; skip the rounding of cos(e, e).
    const double s = preds[i] == gts[i]
                         ? 1.0
                         : std::max(0.0, cosine(*lookup.at(preds[i]), *lookup.at(gts[i])));
    if (per_image) per_image->push_back(s);
    acc += s;
  }
  return acc / static_cast<double>(preds.size());
}

struct FiltrationSensitivity {
  std::size_t tp = 0;
  std::size_t fn = 0;

  bool operator==(const FiltrationSensitivity&) const = default;
};

/// Guessed names that fully match a ground-truth name (case-insensitive,
/// whitespace-normalized) count as TP when retained and FN when filtered.
inline FiltrationSensitivity filtration_sensitivity(std::span<const std::string> candidates,
                                                    std::span<const std::string> retained,
                                                    std::span<const std::string> gt_names) {
  std::set<std::string> gt, kept;
  for (const auto& g : gt_names) gt.insert(text::name_key(g));
  for (const auto& r : retained) kept.insert(text::name_key(r));
  FiltrationSensitivity out;
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    const std::string key = text::name_key(c);
    if (!seen.insert(key).second || !gt.contains(key)) continue;
    (kept.contains(key) ? out.tp : out.fn) += 1;
  }
  return out;
}

struct MetricsReport {
  double cacc = 0.0;
  double sacc = 0.0;
  std::size_t n_images = 0;
  std::size_t n_pred_classes = 0;
  std::size_t n_true_classes = 0;
  std::optional<FiltrationSensitivity> filtration;
};

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j{{"cacc", m.cacc},
                   {"sacc", m.sacc},
                   {"n_images", m.n_images},
                   {"n_pred_classes", m.n_pred_classes},
                   {"n_true_classes", m.n_true_classes}};
  j["filtration"] = m.filtration
                        ? nlohmann::json{{"tp", m.filtration->tp}, {"fn", m.filtration->fn}}
                        : nlohmann::json(nullptr);
  return j;
}

inline MetricsReport evaluate(std::span<const std::string> preds, std::span<const std::string> gts,
                              TextEmbedder& sem_embedder, std::vector<double>* per_image = nullptr) {
  MetricsReport m;
  m.cacc = clustering_accuracy(preds, gts);
  m.sacc = semantic_accuracy(preds, gts, sem_embedder, per_image);
  m.n_images = preds.size();
  m.n_pred_classes = std::set<std::string>(preds.begin(), preds.end()).size();
  m.n_true_classes = std::set<std::string>(gts.begin(), gts.end()).size();
  return m;
}

}  // namespace vfr
