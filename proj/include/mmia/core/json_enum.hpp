#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <utility>

#include "mmia/core/error.hpp"

/// Like NLOHMANN_JSON_SERIALIZE_ENUM, but unknown names are an IngestError
/// instead of silently mapping to the first enumerator.
#define MMIA_JSON_ENUM(ENUM_TYPE, ...)                                                                  \
  inline void to_json(nlohmann::json& j, const ENUM_TYPE& e) {                                          \
    static const std::pair<ENUM_TYPE, const char*> table[] = __VA_ARGS__;                               \
    for (const auto& [value, name] : table) {                                                           \
      if (value == e) {                                                                                 \
        j = name;                                                                                       \
        return;                                                                                         \
      }                                                                                                 \
    }                                                                                                   \
    throw ::mmia::PreconditionError("unnamed " #ENUM_TYPE " value");                                    \
  }                                                                                                     \
  inline void from_json(const nlohmann::json& j, ENUM_TYPE& e) {                                        \
    static const std::pair<ENUM_TYPE, const char*> table[] = __VA_ARGS__;                               \
    if (!j.is_string()) throw ::mmia::IngestError(#ENUM_TYPE " must be a string, got " + j.dump());     \
    const auto s = j.get<std::string>();                                                                \
    std::string known;                                                                                  \
    for (const auto& [value, name] : table) {                                                           \
      if (s == name) {                                                                                  \
        e = value;                                                                                      \
        return;                                                                                         \
      }                                                                                                 \
      known += std::string(known.empty() ? "" : ", ") + name;                                           \
    }                                                                                                   \
    throw ::mmia::IngestError("unknown " #ENUM_TYPE " '" + s + "' (expected one of " + known + ")");    \
  }
