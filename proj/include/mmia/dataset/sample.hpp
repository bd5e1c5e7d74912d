#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "mmia/core/image.hpp"

namespace mmia {

enum class Origin { natural, crafted_blur };

inline std::string to_string(Origin o) { return o == Origin::natural ? "natural" : "crafted_blur"; }

struct ImageSample {
  std::string sample_id;
  int class_label = 0;
  Image pixels;
  Origin origin = Origin::natural;
};

using Corpus = std::vector<ImageSample>;

inline std::set<int> class_set(const std::vector<ImageSample>& samples) {
  std::set<int> out;
  for (const auto& s : samples) out.insert(s.class_label);
  return out;
}

inline void sort_by_id(std::vector<ImageSample>& samples) {
  std::sort(samples.begin(), samples.end(),
            [](const ImageSample& a, const ImageSample& b) { return a.sample_id < b.sample_id; });
}

}  // namespace mmia
