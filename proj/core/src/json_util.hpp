#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include <json.hpp>

#include "gnnr/errors.hpp"
#include "gnnr/tensor.hpp"

namespace gnnr::detail {

using json = nlohmann::json;

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, e.what());
  }
}

/// Typed field access that reports the field name on failure.
template <typename T>
T field(const json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) throw ValidationError(std::string(name) + ": missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& obj, const char* name, T fallback) {
  const auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

inline json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

inline Tensor tensor_from_json(const json& j, const char* name) {
  try {
    return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace gnnr::detail
