#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/core/rng.hpp"
#include "mmia/target/snapshots.hpp"

namespace mmia {

enum class Mode { rand, concat, sr, srwal };
enum class ModelsForTest { final_only, all };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::rand: return "rand";
    case Mode::concat: return "concat";
    case Mode::sr: return "sr";
    case Mode::srwal: return "srwal";
  }
  return "?";
}

inline std::string to_string(ModelsForTest m) { return m == ModelsForTest::final_only ? "final" : "all"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "rand") return Mode::rand;
  if (s == "concat") return Mode::concat;
  if (s == "sr") return Mode::sr;
  if (s == "srwal") return Mode::srwal;
  throw PreconditionError("unknown incorporation mode '" + s + "' (expected rand, concat, sr or srwal)");
}

inline ModelsForTest parse_models_for_test(const std::string& s) {
  if (s == "final") return ModelsForTest::final_only;
  if (s == "all") return ModelsForTest::all;
  throw PreconditionError("unknown models_for_test '" + s + "' (expected final or all)");
}

/// Outputs of every snapshot for one probe image, in snapshot order.
struct VectorTuple {
  std::string sample_id;
  int class_label = 0;
  std::vector<TemplateVector> vectors;

  std::size_t alpha() const noexcept { return vectors.size(); }
  std::size_t m() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }
  const TemplateVector& final_vector() const {
    require(!vectors.empty(), "vector tuple is empty");
    return vectors.back();
  }
};

using VectorBank = std::vector<VectorTuple>;

/// Attack-model input. slot_index is 1-based.
struct AugmentedVector {
  std::vector<float> data;
  std::optional<std::size_t> slot_index;
  Mode mode = Mode::rand;
};

/// Width of the attack-model input for a mode.
inline std::size_t input_width(Mode mode, std::size_t alpha, std::size_t m) { return mode == Mode::rand ? m : alpha * m; }

/// Queries every snapshot on every probe image.
inline VectorBank build_vector_bank(const SnapshotSet& snapshots, const std::vector<ImageSample>& probe) {
  require(!probe.empty(), "cannot build a vector bank from an empty probe set");
  require(snapshots.alpha() >= 1, "snapshot set is empty");
  std::vector<const Image*> images;
  images.reserve(probe.size());
  for (const auto& s : probe) images.push_back(&s.pixels);
  VectorBank bank(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    bank[i].sample_id = probe[i].sample_id;
    bank[i].class_label = probe[i].class_label;
    bank[i].vectors.reserve(snapshots.alpha());
  }
  for (const auto& model : snapshots.snapshots) {
    const auto y = model.query_batch(images);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      bank[i].vectors.emplace_back(y.row(r).data(), y.row(r).data() + y.cols());
    }
  }
  return bank;
}

namespace detail {

inline void check_tuple(const VectorTuple& t) {
  require(t.alpha() >= 1, "vector tuple " + t.sample_id + " holds no vectors");
  for (const auto& v : t.vectors) require_shape(v.size() == t.m(), "vector tuple " + t.sample_id + " has ragged vectors");
}

inline std::vector<float> place_in_slot(const TemplateVector& v, std::size_t slot, std::size_t alpha) {
  std::vector<float> out(alpha * v.size(), 0.0f);
  std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>((slot - 1) * v.size()));
  return out;
}

}  // namespace detail

inline AugmentedVector make_rand(const VectorTuple& t, Rng& rng) {
  detail::check_tuple(t);
  const std::size_t i = uniform_index(rng, t.alpha()) + 1;
  return {t.vectors[i - 1], i, Mode::rand};
}

inline AugmentedVector make_concat(const VectorTuple& t) {
  detail::check_tuple(t);
  AugmentedVector out{{}, std::nullopt, Mode::concat};
  out.data.reserve(t.alpha() * t.m());
  for (const auto& v : t.vectors) out.data.insert(out.data.end(), v.begin(), v.end());
  return out;
}

inline AugmentedVector make_structured_random(const VectorTuple& t, Rng& rng, bool with_label) {
  detail::check_tuple(t);
  const std::size_t i = uniform_index(rng, t.alpha()) + 1;
  return {detail::place_in_slot(t.vectors[i - 1], i, t.alpha()), i, with_label ? Mode::srwal : Mode::sr};
}

/// Training-time input for one tuple; slots are redrawn on every call.
inline AugmentedVector make_training_input(const VectorTuple& t, Mode mode, Rng& rng) {
  switch (mode) {
    case Mode::rand: return make_rand(t, rng);
    case Mode::concat: return make_concat(t);
    case Mode::sr: return make_structured_random(t, rng, false);
    case Mode::srwal: return make_structured_random(t, rng, true);
  }
  throw PreconditionError("unknown incorporation mode");
}

/// The m-length block at 1-based slot i.
inline TemplateVector slot(const AugmentedVector& v, std::size_t i, std::size_t m) {
  require(m > 0 && v.data.size() % m == 0, "slot width does not divide the vector");
  require(i >= 1 && i <= v.data.size() / m, "slot index out of range");
  const auto begin = v.data.begin() + static_cast<std::ptrdiff_t>((i - 1) * m);
  return {begin, begin + static_cast<std::ptrdiff_t>(m)};
}

/// Test input from a lone leaked vector of the final model. The vector goes
/// into slot alpha for the slotted modes.
inline AugmentedVector make_test_input(const TemplateVector& final_vector, std::size_t alpha, Mode mode,
                                       ModelsForTest models = ModelsForTest::final_only) {
  require(models == ModelsForTest::final_only,
          "models_for_test=all needs the full vector tuple, not a single final vector");
  require(alpha >= 1 && !final_vector.empty(), "test input needs alpha >= 1 and a non-empty vector");
  switch (mode) {
    case Mode::rand: return {final_vector, alpha, Mode::rand};
    case Mode::concat: return {detail::place_in_slot(final_vector, alpha, alpha), std::nullopt, Mode::concat};
    case Mode::sr:
    case Mode::srwal: return {detail::place_in_slot(final_vector, alpha, alpha), alpha, mode};
  }
  throw PreconditionError("unknown incorporation mode");
}

/// Test inputs from a full tuple. Several inputs are returned when the
/// generator outputs must be averaged (sr/srwal with all models).
inline std::vector<AugmentedVector> make_test_inputs(const VectorTuple& t, Mode mode, ModelsForTest models) {
  detail::check_tuple(t);
  if (models == ModelsForTest::final_only) return {make_test_input(t.final_vector(), t.alpha(), mode)};
  switch (mode) {
    case Mode::rand:
      throw PreconditionError("models_for_test=all is undefined for rand: its input holds a single vector");
    case Mode::concat: return {make_concat(t)};
    case Mode::sr:
    case Mode::srwal: {
      std::vector<AugmentedVector> out;
      for (std::size_t i = 1; i <= t.alpha(); ++i) out.push_back({detail::place_in_slot(t.vectors[i - 1], i, t.alpha()), i, mode});
      return out;
    }
  }
  throw PreconditionError("unknown incorporation mode");
}

}  // namespace mmia
