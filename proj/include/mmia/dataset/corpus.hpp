#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmia/core/json_enum.hpp"
#include "mmia/core/error.hpp"
#include "mmia/dataset/sample.hpp"

namespace mmia {

enum class CropRule { center, resize, none };

/// Geometry every ingested image is brought to.
struct DatasetDescriptor {
  int height = 32;
  int width = 32;
  int channels = 1;
  CropRule crop = CropRule::center;

  ImageShape shape() const { return {height, width, channels}; }
  friend bool operator==(const DatasetDescriptor&, const DatasetDescriptor&) = default;
};

MMIA_JSON_ENUM(CropRule, {{CropRule::center, "center"}, {CropRule::resize, "resize"}, {CropRule::none, "none"}})

inline void to_json(nlohmann::json& j, const DatasetDescriptor& d) {
  j = {{"height", d.height}, {"width", d.width}, {"channels", d.channels}, {"crop", d.crop}};
}

inline void from_json(const nlohmann::json& j, DatasetDescriptor& d) {
  d.height = j.at("height").get<int>();
  d.width = j.at("width").get<int>();
  d.channels = j.at("channels").get<int>();
  d.crop = j.value("crop", CropRule::center);
  require(d.height > 0 && d.width > 0 && (d.channels == 1 || d.channels == 3),
          "dataset descriptor: height/width must be positive and channels 1 or 3");
}

inline DatasetDescriptor load_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open dataset descriptor: " + path.string());
  try {
    return nlohmann::json::parse(in).get<DatasetDescriptor>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("malformed dataset descriptor " + path.string() + ": " + e.what());
  }
}

struct ManifestEntry {
  std::string path;  // as written; also the sample id
  int label = 0;
};

/// Parses "path,label" records. Blank lines and lines starting with '#' are skipped.
inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::string& origin) {
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw IngestError(origin + ":" + std::to_string(lineno) + ": expected 'path,label'");
    }
    ManifestEntry e;
    e.path = line.substr(first, comma - first);
    while (!e.path.empty() && (e.path.back() == ' ' || e.path.back() == '\t')) e.path.pop_back();
    try {
      std::size_t used = 0;
      const std::string label = line.substr(comma + 1);
      e.label = std::stoi(label, &used);
      if (label.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw IngestError(origin + ":" + std::to_string(lineno) + ": label is not an integer");
    }
    if (e.label < 0) throw IngestError(origin + ":" + std::to_string(lineno) + ": negative class label");
    out.push_back(std::move(e));
  }
  return out;
}

/// Converts a decoded 8-bit OpenCV image into a planar [0,1] image of the
/// descriptor's geometry.
inline Image to_image(const cv::Mat& decoded, const DatasetDescriptor& desc, const std::string& origin) {
  cv::Mat img = decoded;
  if (desc.crop == CropRule::center) {
    const int side = std::min(img.rows, img.cols);
    img = img(cv::Rect((img.cols - side) / 2, (img.rows - side) / 2, side, side));
  }
  if (desc.crop == CropRule::none) {
    if (img.rows != desc.height || img.cols != desc.width) {
      throw IngestError(origin + ": image is " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                        " but descriptor requires " + to_string(desc.shape()) + " without cropping");
    }
  } else if (img.rows != desc.height || img.cols != desc.width) {
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(desc.width, desc.height), 0, 0, cv::INTER_AREA);
    img = resized;
  }
  if (desc.channels == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  Image out(desc.shape());
  for (int y = 0; y < desc.height; ++y) {
    const auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < desc.width; ++x) {
      for (int c = 0; c < desc.channels; ++c) {
        out.at(c, y, x) = static_cast<float>(row[x * desc.channels + c]) / 255.0f;
      }
    }
  }
  return out;
}

struct LoadResult {
  Corpus corpus;
  std::vector<std::string> warnings;
};

/// Loads every image listed in a manifest, sorted by sample id.
inline LoadResult load_corpus(const std::filesystem::path& manifest_path, const DatasetDescriptor& desc) {
  std::ifstream in(manifest_path);
  if (!in) throw IngestError("manifest not found: " + manifest_path.string());
  const auto entries = parse_manifest(in, manifest_path.string());
  const auto base = manifest_path.parent_path();

  LoadResult result;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.path).second) throw IngestError("duplicate sample id in manifest: " + e.path);
    const std::filesystem::path file = std::filesystem::path(e.path).is_absolute() ? std::filesystem::path(e.path) : base / e.path;
    if (!std::filesystem::exists(file)) throw IngestError("image not found: " + file.string());
    const cv::Mat decoded = cv::imread(file.string(), desc.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (decoded.empty()) throw IngestError("cannot decode image: " + file.string());
    result.corpus.push_back({e.path, e.label, to_image(decoded, desc, file.string()), Origin::natural});
  }
  sort_by_id(result.corpus);

  if (result.corpus.empty()) {
    result.warnings.push_back("manifest " + manifest_path.string() + " lists no images; corpus is empty");
  } else {
    const auto labels = class_set(result.corpus);
    if (static_cast<std::size_t>(*labels.rbegin()) + 1 != labels.size()) {
      result.warnings.push_back("class labels are not contiguous: " + std::to_string(labels.size()) +
                                " classes with maximum label " + std::to_string(*labels.rbegin()));
    }
  }
  return result;
}

}  // namespace mmia
