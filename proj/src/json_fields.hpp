#pragma once

#include "cohere/error.hpp"
#include "cohere/geom.hpp"

#include "json.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace cohere::detail {

using nlohmann::json;

inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw json::type_error::create(302, "expected an array of 3 numbers", &j);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Eigen::Vector2d vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw json::type_error::create(302, "expected an array of 2 numbers", &j);
  return {j[0].get<double>(), j[1].get<double>()};
}

// Copies known keys out of `obj` and rejects anything else.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw Error(ErrorKind::InvalidConfig, where_ + " must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (obj_.contains(key)) out = obj_.at(key).get<T>();
  }
  void get(const char* key, Vec3& out) {
    seen_.push_back(key);
    if (obj_.contains(key)) out = vec3_from(obj_.at(key));
  }
  void get(const char* key, Eigen::Vector2d& out) {
    seen_.push_back(key);
    if (obj_.contains(key)) out = vec2_from(obj_.at(key));
  }
  const json* sub(const char* key) {
    seen_.push_back(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where_);
      }
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace cohere::detail
