#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"

namespace mmia {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

inline std::string to_string(const ImageShape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Planar (channel-major) image with pixels in [0,1]. Index (c, y, x).
struct Image {
  ImageShape shape;
  std::vector<float> pixels;

  Image() = default;
  explicit Image(ImageShape s, float fill = 0.0f) : shape(s), pixels(s.size(), fill) {}
  Image(ImageShape s, std::vector<float> data) : shape(s), pixels(std::move(data)) {
    require_shape(pixels.size() == shape.size(), "pixel buffer does not match image shape " + to_string(shape));
  }

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
};

}  // namespace mmia
