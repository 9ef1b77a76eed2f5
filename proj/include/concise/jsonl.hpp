#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "concise/errors.hpp"

namespace concise {

using Json = nlohmann::ordered_json;

/// Specialize with `static Json to(const T&)` and `static T from(const Json&)`.
template <class T>
struct JsonRecord;

/// Strict field access for one JSON object: every key must be consumed,
/// required keys must exist and have the expected type.
class FieldReader {
 public:
  FieldReader(const Json& obj, std::string_view record) : obj_(obj), record_(record) {
    if (!obj.is_object()) throw SchemaMismatch(std::string(record_) + ": expected a JSON object");
  }

  template <class T>
  T required(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) throw SchemaMismatch(std::string(record_) + ": missing field '" + key + "'");
    return convert<T>(*it, key);
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    return convert<T>(*it, key);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) throw SchemaMismatch(std::string(record_) + ": missing field '" + key + "'");
    return *it;
  }

  /// Rejects keys no accessor asked for.
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw SchemaMismatch(std::string(record_) + ": unknown field '" + key + "'");
    }
  }

 private:
  template <class T>
  T convert(const Json& v, const std::string& key) const {
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw SchemaMismatch(std::string(record_) + ": field '" + key + "' has the wrong type");
    }
  }

  const Json& obj_;
  std::string_view record_;
  std::set<std::string> seen_;
};

inline std::string dump_line(const Json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

/// One compact JSON document per line, UTF-8, in record order.
template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << dump_line(JsonRecord<T>::to(r)) << '\n';
  if (!out) throw IoFailure("write failed for " + path.string());
}

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      out.push_back(JsonRecord<T>::from(j));
    } catch (const SchemaMismatch& e) {
      throw SchemaMismatch(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoFailure("write failed for " + path.string());
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(path.string() + ": " + e.what());
  }
}

}  // namespace concise
