#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/core/rng.hpp"
#include "mmia/nn/layers.hpp"
#include "mmia/target/model.hpp"

namespace mmia::eval {

inline double l2_distance(const TemplateVector& a, const TemplateVector& b) {
  require_shape(a.size() == b.size(), "l2_distance: lengths " + std::to_string(a.size()) + " and " +
                                          std::to_string(b.size()) + " differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Row-to-row distance between two template matrices.
inline double row_distance(const nn::Matrix<float>& a, Eigen::Index i, const nn::Matrix<float>& b, Eigen::Index j) {
  double s = 0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double d = static_cast<double>(a(i, k)) - static_cast<double>(b(j, k));
    s += d * d;
  }
  return std::sqrt(s);
}

struct Threshold {
  double t = 0;
  double far_target = 0.01;
  std::size_t calibration_size = 0;
  std::size_t accepted = 0;  // calibration distances with d <= t

  double empirical_far() const {
    return calibration_size ? static_cast<double>(accepted) / static_cast<double>(calibration_size) : 0.0;
  }
};

/// Largest observed impostor distance whose acceptance rate (d <= t) stays
/// within far_target; half the smallest distance when none qualifies.
inline Threshold compute_far_threshold(std::vector<double> impostor, double far_target = 0.01) {
  require(!impostor.empty(), "cannot calibrate a threshold on an empty impostor set");
  require(far_target >= 0.0 && far_target < 1.0, "far_target must lie in [0,1)");
  for (double d : impostor) require(std::isfinite(d) && d >= 0, "impostor distances must be finite and non-negative");
  std::sort(impostor.begin(), impostor.end());
  const std::size_t n = impostor.size();
  const auto budget = static_cast<std::size_t>(std::floor(far_target * static_cast<double>(n) + 1e-9));
  auto accepted_at = [&](double t) {
    return static_cast<std::size_t>(std::upper_bound(impostor.begin(), impostor.end(), t) - impostor.begin());
  };
  std::size_t k = budget;
  while (k >= 1 && accepted_at(impostor[k - 1]) > budget) --k;
  Threshold out;
  out.far_target = far_target;
  out.calibration_size = n;
  if (k >= 1) {
    out.t = impostor[k - 1];
  } else {
    if (impostor.front() == 0.0) {
      throw PreconditionError("FAR target unreachable: the smallest impostor distance is 0, so every threshold accepts it");
    }
    out.t = impostor.front() / 2;
  }
  out.accepted = accepted_at(out.t);
  return out;
}

/// Cross-class pair distances, subsampled without replacement to max_pairs.
inline std::vector<double> impostor_distances(const nn::Matrix<float>& templates, const std::vector<int>& labels,
                                              std::size_t max_pairs, std::uint64_t seed) {
  require_shape(static_cast<std::size_t>(templates.rows()) == labels.size(), "one label per template required");
  std::vector<double> d;
  for (Eigen::Index i = 0; i < templates.rows(); ++i)
    for (Eigen::Index j = i + 1; j < templates.rows(); ++j)
      if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) d.push_back(row_distance(templates, i, templates, j));
  require(!d.empty(), "no cross-class pairs: at least two classes are needed for calibration");
  if (d.size() > max_pairs) {
    Rng rng = make_rng(seed, "evaluation/impostors");
    for (std::size_t i = 0; i < max_pairs; ++i) std::swap(d[i], d[i + uniform_index(rng, d.size() - i)]);
    d.resize(max_pairs);
  }
  return d;
}

struct Count {
  std::size_t tp = 0;
  std::size_t trials = 0;
  std::size_t skipped = 0;

  double value() const { return trials ? static_cast<double>(tp) / static_cast<double>(trials) : 0.0; }
};

/// Pairs (original template, re-embedded reconstruction) accepted at t.
inline Count type1_count(const nn::Matrix<float>& originals, const nn::Matrix<float>& reembedded, double t) {
  require_shape(originals.rows() == reembedded.rows() && originals.cols() == reembedded.cols(),
                "type1: template matrices differ in shape");
  Count c;
  c.trials = static_cast<std::size_t>(originals.rows());
  for (Eigen::Index i = 0; i < originals.rows(); ++i) c.tp += row_distance(originals, i, reembedded, i) <= t;
  return c;
}

/// Gallery entry identity used for self-exclusion and tie-breaking.
struct GalleryEntry {
  std::string sample_id;
  int class_label = 0;
};

/// Rank-1 identification of reconstructions against the gallery. Row i of
/// `reembedded` comes from gallery entry i; that entry is excluded by sample
/// id. Ties go to the smallest sample id; singleton-class probes are skipped.
inline Count rank1_count(const nn::Matrix<float>& gallery, const std::vector<GalleryEntry>& entries,
                         const nn::Matrix<float>& reembedded) {
  require_shape(static_cast<std::size_t>(gallery.rows()) == entries.size() && reembedded.rows() == gallery.rows() &&
                    reembedded.cols() == gallery.cols(),
                "rank1: gallery, entries and reconstructions must align");
  std::map<int, std::size_t> class_size;
  for (const auto& e : entries) ++class_size[e.class_label];
  Count c;
  for (Eigen::Index i = 0; i < gallery.rows(); ++i) {
    const auto& probe = entries[static_cast<std::size_t>(i)];
    if (class_size[probe.class_label] < 2) {
      ++c.skipped;
      continue;
    }
    double best = 0;
    const GalleryEntry* winner = nullptr;
    for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
      const auto& cand = entries[static_cast<std::size_t>(j)];
      if (cand.sample_id == probe.sample_id) continue;
      const double d = row_distance(reembedded, i, gallery, j);
      if (!winner || d < best || (d == best && cand.sample_id < winner->sample_id)) {
        best = d;
        winner = &cand;
      }
    }
    ++c.trials;
    c.tp += winner && winner->class_label == probe.class_label;
  }
  require(c.trials > 0, "rank1: every gallery class is a singleton");
  return c;
}

/// Reconstructions whose predicted label equals the expected label.
inline Count label_match_count(const std::vector<int>& predicted, const std::vector<int>& expected) {
  require_shape(predicted.size() == expected.size(), "label lists differ in length");
  Count c;
  c.trials = predicted.size();
  for (std::size_t i = 0; i < predicted.size(); ++i) c.tp += predicted[i] == expected[i];
  return c;
}

/// Thresholded (0.5) membership decisions against labels.
inline Count decision_count(const std::vector<double>& scores, const std::vector<int>& members) {
  require_shape(scores.size() == members.size(), "scores and labels differ in length");
  Count c;
  c.trials = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) c.tp += (scores[i] >= 0.5) == (members[i] != 0);
  return c;
}

}  // namespace mmia::eval
