// Strict field access over a JSON object: tracks which keys were read so
// unknown keys can be rejected by name.
#ifndef TIPPING_SRC_JSON_READER_HPP
#define TIPPING_SRC_JSON_READER_HPP

#include <set>
#include <string>

#include "json.hpp"
#include "tipping/error.hpp"

namespace tipping::detail {

class StrictReader {
 public:
  StrictReader(const nlohmann::json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) {
      throw Error(ErrorCode::ParseError, where_ + ": expected a JSON object");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key) && !doc_.at(key).is_null();
  }

  const nlohmann::json& raw(const std::string& key) {
    if (!has(key)) {
      throw Error(ErrorCode::ParseError, where_ + ": missing required field \"" + key + "\"");
    }
    return doc_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const auto& value = raw(key);
    return convert<T>(value, key);
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(doc_.at(key), key);
  }

  // Call after reading every known field.
  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) {
        throw Error(ErrorCode::ParseError, where_ + ": unknown field \"" + key + "\"");
      }
    }
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  template <class T>
  T convert(const nlohmann::json& value, const std::string& key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = value.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = value.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = value.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = value.is_string();
    }
    if (!ok) {
      throw Error(ErrorCode::ParseError,
                  where_ + ": field \"" + key + "\" has the wrong type (" + value.type_name() + ")");
    }
    try {
      return value.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, where_ + ": field \"" + key + "\": " + e.what());
    }
  }

  const nlohmann::json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace tipping::detail

#endif
