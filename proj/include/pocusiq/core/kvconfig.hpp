#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "pocusiq/core/error.hpp"

namespace pocusiq {

/// Flat `key=value` text configuration. Blank lines and `#` comments are
/// ignored; later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw DataError(std::string(origin) + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + trimmed + "'");
      }
      std::string key = trim(trimmed.substr(0, eq));
      if (key.empty()) {
        throw DataError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
      }
      cfg.values_[key] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? to_double(key, *v) : fallback;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto v = get(key);
    return v ? to_int(key, *v) : fallback;
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  static long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
      throw DataError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
  }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  std::map<std::string, std::string> values_;
};

}  // namespace pocusiq
