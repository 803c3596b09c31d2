// Strict JSON field reading (unknown keys are errors) and git-style content hashing.
#pragma once

#include "asrf/common.hpp"

#include <openssl/evp.h>

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace asrf {

using Json = nlohmann::ordered_json;

/// Reads named fields out of one JSON object, remembering which were consumed.
class JsonReader {
 public:
  JsonReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void require_field(const std::string& key, T& out) {
    if (!j_.contains(key)) throw ValidationError(where_ + ": missing field '" + key + "'");
    get(key, out);
  }

  /// Sub-object; callers pass it to a nested reader.
  const Json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string to_hex(const unsigned char* p, std::size_t n) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += d[p[i] >> 4];
    s += d[p[i] & 15];
  }
  return s;
}

/// SHA-1 of "blob <size>\0" + content, as `git hash-object` computes it.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: out of memory");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1 digest failed");
  return to_hex(md, len);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string git_blob_sha1_file(const std::string& path) { return git_blob_sha1(read_file_bytes(path)); }

inline Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec3(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(where + ": expected a 3-element array");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

}  // namespace asrf
