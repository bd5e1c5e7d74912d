#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mmia/incorporation/vectors.hpp"

namespace mmia {

namespace detail {

/// Shortest text that parses back to the same float.
inline std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& field, const std::string& where) {
  T v{};
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw IngestError(where + ": cannot parse '" + field + "' as a number");
  return v;
}

inline void check_id(const std::string& id) {
  require(id.find_first_of(",\n\r") == std::string::npos, "sample id '" + id + "' contains a comma or newline");
}

}  // namespace detail

/// CSV layout: sample_id,class_label,alpha,m,v_1_1..v_alpha_m (plus an
/// optional trailing member column for membership datasets).
inline void write_vector_bank(const VectorBank& bank, const std::filesystem::path& path,
                              const std::vector<int>* members = nullptr) {
  require(members == nullptr || members->size() == bank.size(), "member flags do not match the bank size");
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write vector bank " + path.string());
  out << "sample_id,class_label,alpha,m,values" << (members ? ",member" : "") << "\n";
  for (std::size_t r = 0; r < bank.size(); ++r) {
    const auto& t = bank[r];
    detail::check_id(t.sample_id);
    out << t.sample_id << ',' << t.class_label << ',' << t.alpha() << ',' << t.m();
    for (const auto& v : t.vectors) {
      for (float x : v) out << ',' << detail::format_float(x);
    }
    if (members) out << ',' << (*members)[r];
    out << "\n";
  }
  if (!out) throw IngestError("failed writing vector bank " + path.string());
}

struct BankFile {
  VectorBank bank;
  std::vector<int> members;  // empty unless the file has a member column
};

inline BankFile read_vector_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("vector bank not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string() + ": empty vector bank file");
  const bool with_members = line.size() >= 7 && line.compare(line.size() - 7, 7, ",member") == 0;
  BankFile file;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = detail::split_csv_line(line);
    if (f.size() < 4) throw IngestError(where + ": too few columns");
    VectorTuple t;
    t.sample_id = f[0];
    t.class_label = detail::parse_number<int>(f[1], where);
    const auto alpha = detail::parse_number<std::size_t>(f[2], where);
    const auto m = detail::parse_number<std::size_t>(f[3], where);
    if (f.size() != 4 + alpha * m + (with_members ? 1 : 0)) throw IngestError(where + ": column count does not match alpha*m");
    std::size_t k = 4;
    for (std::size_t a = 0; a < alpha; ++a) {
      TemplateVector v(m);
      for (auto& x : v) x = detail::parse_number<float>(f[k++], where);
      t.vectors.push_back(std::move(v));
    }
    if (with_members) file.members.push_back(detail::parse_number<int>(f[k], where));
    file.bank.push_back(std::move(t));
  }
  return file;
}

}  // namespace mmia
