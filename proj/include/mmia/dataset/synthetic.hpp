#pragma once

#include <opencv2/imgcodecs.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmia/core/rng.hpp"
#include "mmia/dataset/corpus.hpp"

namespace mmia {

/// Toy corpus of per-class textures: every class owns a few oriented
/// gratings plus a blob; images of a class differ by phase, shift,
/// contrast and pixel noise.
struct SyntheticSpec {
  int classes = 40;
  int per_class = 36;
  ImageShape shape{32, 32, 1};
  std::uint64_t seed = 7;
  double noise = 0.04;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"classes", s.classes}, {"per_class", s.per_class}, {"height", s.shape.height},
       {"width", s.shape.width}, {"channels", s.shape.channels}, {"seed", s.seed}, {"noise", s.noise}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.classes = j.at("classes").get<int>();
  s.per_class = j.at("per_class").get<int>();
  s.shape = {j.value("height", 32), j.value("width", 32), j.value("channels", 1)};
  s.seed = j.value("seed", std::uint64_t{7});
  s.noise = j.value("noise", 0.04);
}

inline std::string synthetic_sample_id(int label, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "c%03d/img%03d.png", label, index);
  return buf;
}

inline Corpus synthesize_corpus(const SyntheticSpec& spec) {
  require(spec.classes >= 1 && spec.per_class >= 1, "synthetic corpus needs at least one class and image");
  constexpr double kPi = 3.14159265358979323846;
  struct Grating {
    double freq, angle, phase, amp;
  };
  struct ClassStyle {
    std::array<Grating, 3> gratings;
    double base, blob_x, blob_y, blob_r, blob_amp;
    std::array<double, 3> tint;
  };

  Corpus corpus;
  const auto& sh = spec.shape;
  for (int label = 0; label < spec.classes; ++label) {
    Rng crng = make_rng(spec.seed, "synthetic/class/" + std::to_string(label));
    ClassStyle style{};
    for (auto& g : style.gratings) {
      g = {1.5 + 3.5 * uniform01(crng), kPi * uniform01(crng), 2 * kPi * uniform01(crng), 0.5 + 0.5 * uniform01(crng)};
    }
    style.base = 0.35 + 0.3 * uniform01(crng);
    style.blob_x = sh.width * (0.25 + 0.5 * uniform01(crng));
    style.blob_y = sh.height * (0.25 + 0.5 * uniform01(crng));
    style.blob_r = sh.width * (0.12 + 0.13 * uniform01(crng));
    style.blob_amp = (uniform01(crng) < 0.5 ? -1.0 : 1.0) * (0.2 + 0.25 * uniform01(crng));
    for (auto& t : style.tint) t = 0.8 + 0.4 * uniform01(crng);

    for (int idx = 0; idx < spec.per_class; ++idx) {
      Rng irng = make_rng(spec.seed, "synthetic/image/" + std::to_string(label) + "/" + std::to_string(idx));
      std::array<double, 3> jitter{};
      for (auto& j : jitter) j = 0.3 * standard_normal(irng);
      const double dx = static_cast<double>(uniform_index(irng, 3)) - 1.0;
      const double dy = static_cast<double>(uniform_index(irng, 3)) - 1.0;
      const double contrast = 1.0 + 0.1 * standard_normal(irng);
      Image img(sh);
      for (int y = 0; y < sh.height; ++y) {
        for (int x = 0; x < sh.width; ++x) {
          const double px = x - dx, py = y - dy;
          double v = 0.0;
          for (std::size_t k = 0; k < style.gratings.size(); ++k) {
            const auto& g = style.gratings[k];
            const double u = (px * std::cos(g.angle) + py * std::sin(g.angle)) / sh.width;
            v += g.amp * std::sin(2 * kPi * g.freq * u + g.phase + jitter[k]);
          }
          const double r2 = (px - style.blob_x) * (px - style.blob_x) + (py - style.blob_y) * (py - style.blob_y);
          const double blob = style.blob_amp * std::exp(-r2 / (2 * style.blob_r * style.blob_r));
          const double level = style.base + contrast * (0.12 * v + blob);
          for (int c = 0; c < sh.channels; ++c) {
            const double tinted = sh.channels == 1 ? level : level * style.tint[static_cast<std::size_t>(c)];
            const double noisy = tinted + spec.noise * standard_normal(irng);
            img.at(c, y, x) = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
          }
        }
      }
      corpus.push_back({synthetic_sample_id(label, idx), label, std::move(img), Origin::natural});
    }
  }
  sort_by_id(corpus);
  return corpus;
}

/// Writes a corpus as 8-bit PNGs plus manifest.csv and descriptor.json under dir.
inline std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "# path,label\n";
  ImageShape shape{};
  for (const auto& s : corpus) {
    shape = s.pixels.shape;
    const fs::path file = dir / s.sample_id;
    fs::create_directories(file.parent_path());
    cv::Mat mat(shape.height, shape.width, shape.channels == 1 ? CV_8UC1 : CV_8UC3);
    for (int y = 0; y < shape.height; ++y) {
      auto* row = mat.ptr<std::uint8_t>(y);
      for (int x = 0; x < shape.width; ++x) {
        for (int c = 0; c < shape.channels; ++c) {
          // OpenCV stores colour as BGR.
          const int src_c = shape.channels == 3 ? 2 - c : c;
          row[x * shape.channels + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(s.pixels.at(src_c, y, x), 0.0f, 1.0f) * 255.0f));
        }
      }
    }
    if (!cv::imwrite(file.string(), mat)) throw IngestError("cannot write " + file.string());
    manifest << s.sample_id << "," << s.class_label << "\n";
  }
  std::ofstream desc(dir / "descriptor.json");
  desc << nlohmann::json(DatasetDescriptor{shape.height, shape.width, shape.channels, CropRule::none}).dump(2) << "\n";
  return dir / "manifest.csv";
}

}  // namespace mmia
