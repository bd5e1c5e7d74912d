#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/core/rng.hpp"
#include "mmia/dataset/sample.hpp"

namespace mmia {

enum class Regime { feature_extraction, classification };

inline std::string to_string(Regime r) {
  return r == Regime::feature_extraction ? "feature_extraction" : "classification";
}

/// Target-model training data and the attacker's probe set.
struct DatasetSplit {
  std::vector<ImageSample> target_train;
  std::vector<ImageSample> probe;
  Regime regime = Regime::feature_extraction;
  std::vector<std::string> notes;
};

namespace detail {

inline std::map<int, std::vector<const ImageSample*>> group_by_class(const Corpus& corpus) {
  std::map<int, std::vector<const ImageSample*>> out;
  for (const auto& s : corpus) out[s.class_label].push_back(&s);
  return out;
}

}  // namespace detail

/// Class-disjoint split: probe_class_count seeded-uniform classes make up the
/// probe (truncated to probe_size images), the rest train the target.
inline DatasetSplit split_feature_extraction(const Corpus& corpus, int probe_class_count, int probe_size,
                                             std::uint64_t seed) {
  auto groups = detail::group_by_class(corpus);
  std::vector<int> classes;
  for (const auto& [label, _] : groups) classes.push_back(label);
  require(probe_class_count >= 1, "probe_class_count must be at least 1");
  require(static_cast<std::size_t>(probe_class_count) < classes.size(),
          "probe_class_count (" + std::to_string(probe_class_count) + ") must be smaller than the number of classes (" +
              std::to_string(classes.size()) + "); target_train would be empty");

  Rng rng = make_rng(seed, "split/feature-extraction");
  shuffle(classes.begin(), classes.end(), rng);
  const std::set<int> probe_classes(classes.begin(), classes.begin() + probe_class_count);

  DatasetSplit split;
  split.regime = Regime::feature_extraction;
  std::vector<ImageSample> candidates;
  for (const auto& s : corpus) {
    (probe_classes.count(s.class_label) ? candidates : split.target_train).push_back(s);
  }
  if (probe_size < 0 || static_cast<std::size_t>(probe_size) > candidates.size()) {
    throw PreconditionError("probe_size " + std::to_string(probe_size) + " is unreachable: the " +
                            std::to_string(probe_class_count) + " probe classes hold only " +
                            std::to_string(candidates.size()) + " images; use a probe size <= " +
                            std::to_string(candidates.size()));
  }
  sort_by_id(candidates);
  shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(static_cast<std::size_t>(probe_size));
  sort_by_id(candidates);
  split.probe = std::move(candidates);
  sort_by_id(split.target_train);
  return split;
}

/// Per-class holdout: ceil(fraction * count) images of every class go to the
/// probe, the remainder trains the target. Classes with a single image are
/// excluded and reported in notes.
inline DatasetSplit split_classification(const Corpus& corpus, double holdout_fraction, std::uint64_t seed) {
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction must lie in (0,1)");
  DatasetSplit split;
  split.regime = Regime::classification;
  Rng rng = make_rng(seed, "split/classification");
  for (auto& [label, members] : detail::group_by_class(corpus)) {
    if (members.size() < 2) {
      split.notes.push_back("class " + std::to_string(label) + " has a single image and was excluded");
      continue;
    }
    std::sort(members.begin(), members.end(),
              [](const ImageSample* a, const ImageSample* b) { return a->sample_id < b->sample_id; });
    shuffle(members.begin(), members.end(), rng);
    // Guard against products like 0.15 * 20 = 3.0000000000000004.
    auto holdout = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(members.size()) - 1e-9));
    holdout = std::clamp<std::size_t>(holdout, 1, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < holdout ? split.probe : split.target_train).push_back(*members[i]);
    }
  }
  sort_by_id(split.probe);
  sort_by_id(split.target_train);
  return split;
}

/// Divides a probe set into the attacker's training part (ell images) and an
/// evaluation part. Classes are interleaved so both parts cover every class.
struct ProbePartition {
  std::vector<ImageSample> attack_train;
  std::vector<ImageSample> attack_eval;
};

inline ProbePartition partition_probe(const std::vector<ImageSample>& probe, std::size_t ell, std::uint64_t seed) {
  require(ell >= 1 && ell < probe.size(), "attack training size ell=" + std::to_string(ell) +
                                              " must be in [1, probe size " + std::to_string(probe.size()) + ")");
  auto groups = detail::group_by_class(probe);
  Rng rng = make_rng(seed, "split/probe-partition");
  std::vector<std::vector<const ImageSample*>> queues;
  for (auto& [_, members] : groups) {
    shuffle(members.begin(), members.end(), rng);
    queues.push_back(members);
  }
  std::vector<const ImageSample*> order;
  for (std::size_t round = 0; order.size() < probe.size(); ++round) {
    for (const auto& q : queues) {
      if (round < q.size()) order.push_back(q[round]);
    }
  }
  ProbePartition out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < ell ? out.attack_train : out.attack_eval).push_back(*order[i]);
  sort_by_id(out.attack_train);
  sort_by_id(out.attack_eval);
  return out;
}

}  // namespace mmia
