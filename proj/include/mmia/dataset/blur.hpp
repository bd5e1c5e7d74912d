#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/dataset/sample.hpp"

namespace mmia {

/// Normalized square Gaussian kernel, row-major, size x size.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  require(size >= 1 && size % 2 == 1, "blur kernel size must be odd");
  require(sigma > 0.0, "blur sigma must be positive");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size * size));
  double sum = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((dy + r) * size + dx + r)] = w;
      sum += w;
    }
  }
  for (auto& w : k) w /= sum;
  return k;
}

namespace detail {

/// Symmetric reflection (edge pixel repeated): -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace detail

/// Per-channel correlation with a square kernel, reflection-padded, no clamping.
inline Image convolve_reflect(const Image& img, const std::vector<double>& kernel) {
  const int size = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kernel.size()))));
  require_shape(size * size == static_cast<int>(kernel.size()), "kernel must be square");
  const int r = size / 2;
  const auto& s = img.shape;
  Image out(s);
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = detail::reflect_index(y + dy, s.height);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = detail::reflect_index(x + dx, s.width);
            acc += kernel[static_cast<std::size_t>((dy + r) * size + dx + r)] * img.at(c, yy, xx);
          }
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Gaussian blur with the output clamped to [0,1].
inline Image gaussian_blur(const Image& img, int kernel_size = 3, double sigma = 0.8) {
  Image out = convolve_reflect(img, gaussian_kernel(kernel_size, sigma));
  for (auto& p : out.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return out;
}

/// Crafts an update-scenario sample: blurred pixels, origin crafted_blur.
inline ImageSample craft_blurred(const ImageSample& s, int kernel_size = 3, double sigma = 0.8) {
  ImageSample out = s;
  out.pixels = gaussian_blur(s.pixels, kernel_size, sigma);
  out.origin = Origin::crafted_blur;
  return out;
}

}  // namespace mmia
