#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <filesystem>
#include <string>
#include <vector>

#include "mmia/core/error.hpp"
#include "mmia/nn/layers.hpp"

namespace mmia::nn {

// Weight file layout (little-endian host order):
//   "MMIAWTS1" | u32 count | count x { u32 name_len | name | i64 rows | i64 cols | u8 elem_size | raw data }

inline constexpr char kWeightMagic[8] = {'M', 'M', 'I', 'A', 'W', 'T', 'S', '1'};

template <class T>
void write_params(std::ostream& out, const std::vector<Param<T>*>& params) {
  out.write(kWeightMagic, sizeof kWeightMagic);
  const auto count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto* p : params) {
    const auto len = static_cast<std::uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(p->name.data(), len);
    const std::int64_t rows = p->value.rows(), cols = p->value.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    const std::uint8_t elem = sizeof(T);
    out.write(reinterpret_cast<const char*>(&elem), 1);
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(sizeof(T) * p->value.size()));
  }
}

template <class T>
void read_params(std::istream& in, const std::vector<Param<T>*>& params, const std::string& origin) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kWeightMagic, sizeof magic) != 0) throw IngestError("not a weight file: " + origin);
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (count != params.size()) {
    throw IngestError(origin + ": expected " + std::to_string(params.size()) + " tensors, found " + std::to_string(count));
  }
  for (auto* p : params) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    std::uint8_t elem = 0;
    in.read(reinterpret_cast<char*>(&elem), 1);
    if (!in || name != p->name || rows != p->value.rows() || cols != p->value.cols() || elem != sizeof(T)) {
      throw IngestError(origin + ": tensor '" + name + "' does not match the model architecture");
    }
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(sizeof(T) * p->value.size()));
    if (!in) throw IngestError(origin + ": truncated weight file");
  }
}

template <class T>
void save_params(const std::filesystem::path& path, const std::vector<Param<T>*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  write_params(out, params);
}

template <class T>
void load_params(const std::filesystem::path& path, const std::vector<Param<T>*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + path.string());
  read_params(in, params, path.string());
}

}  // namespace mmia::nn
