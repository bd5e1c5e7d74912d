#pragma once

#include <vector>

#include "mmia/evaluation/metrics.hpp"
#include "mmia/evaluation/report.hpp"
#include "mmia/inversion/train.hpp"
#include "mmia/membership/attack.hpp"
#include "mmia/target/snapshots.hpp"

namespace mmia::eval {

inline nn::Matrix<float> final_templates(const VectorBank& tuples) {
  require(!tuples.empty(), "no probe tuples to evaluate");
  nn::Matrix<float> y(static_cast<Eigen::Index>(tuples.size()), static_cast<Eigen::Index>(tuples.front().m()));
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const auto& v = tuples[i].final_vector();
    require_shape(v.size() == static_cast<std::size_t>(y.cols()), "tuple " + tuples[i].sample_id + " has a different m");
    std::copy(v.begin(), v.end(), y.row(static_cast<Eigen::Index>(i)).data());
  }
  return y;
}

inline nn::Matrix<float> reembed(const TargetModel& model, const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  return model.query_batch(ptrs);
}

/// FAR-calibrated threshold from cross-class pairs of the final model's
/// templates of its own training images.
inline Threshold calibrate_threshold(const TargetModel& final_model, const std::vector<ImageSample>& target_train,
                                     double far_target, std::size_t max_pairs, std::uint64_t seed) {
  require(final_model.kind() == ModelKind::feature_extractor, "threshold calibration needs a feature extractor");
  std::vector<const Image*> imgs;
  std::vector<int> labels;
  for (const auto& s : target_train) imgs.push_back(&s.pixels), labels.push_back(s.class_label);
  require(!imgs.empty(), "threshold calibration needs training images");
  return compute_far_threshold(impostor_distances(final_model.query_batch(imgs), labels, max_pairs, seed), far_target);
}

/// Reconstructions whose re-embedding lies within t of the original template.
inline Count type1_accuracy(const inv::InversionModel& attack, const TargetModel& final_model, const VectorBank& probe,
                            const Threshold& threshold, ModelsForTest models) {
  require(final_model.kind() == ModelKind::feature_extractor, "type1 accuracy is defined for feature extractors");
  return type1_count(final_templates(probe), reembed(final_model, inv::reconstruct(attack, probe, models)), threshold.t);
}

/// Rank-1 identification of each gallery element's reconstruction against the gallery.
inline Count rank1_accuracy(const inv::InversionModel& attack, const TargetModel& final_model, const VectorBank& gallery,
                            ModelsForTest models) {
  require(final_model.kind() == ModelKind::feature_extractor, "rank-1 accuracy is defined for feature extractors");
  std::vector<GalleryEntry> entries;
  for (const auto& t : gallery) entries.push_back({t.sample_id, t.class_label});
  return rank1_count(final_templates(gallery), entries, reembed(final_model, inv::reconstruct(attack, gallery, models)));
}

/// Reconstructions that the classifier assigns to the probe sample's class.
inline Count classifier_inversion_accuracy(const inv::InversionModel& attack, const TargetModel& classifier,
                                           const VectorBank& probe, ModelsForTest models) {
  require(classifier.kind() == ModelKind::classifier, "classifier inversion accuracy needs a classifier");
  const auto p = reembed(classifier, inv::reconstruct(attack, probe, models));
  std::vector<int> predicted, expected;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    p.row(r).maxCoeff(&best);
    predicted.push_back(classifier.labels()[static_cast<std::size_t>(best)]);
    expected.push_back(probe[static_cast<std::size_t>(r)].class_label);
  }
  return label_match_count(predicted, expected);
}

inline Count mi_accuracy(const mi::MIAttacker& attacker, const mi::MIDataset& ds, ModelsForTest models) {
  require(ds.has_both_labels(), "membership evaluation needs member and non-member records");
  return decision_count(mi::membership_scores(attacker, ds.tuples, models), ds.members);
}

/// Retrains and evaluates an attack per snapshot subset. `run(subset_set)`
/// must evaluate against the full set's final model and return one report.
template <class Run>
std::vector<EvalReport> snapshot_ablation(const SnapshotSet& set, const std::vector<std::vector<std::size_t>>& subsets,
                                          Run run) {
  require(!subsets.empty(), "ablation needs at least one snapshot subset");
  std::vector<EvalReport> out;
  for (const auto& idx : subsets) {
    require(!idx.empty(), "ablation snapshot subsets must not be empty");
    EvalReport r = run(set.subset(idx));
    auto sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    r.subset = subset_label(sorted);
    r.alpha = sorted.size();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mmia::eval
