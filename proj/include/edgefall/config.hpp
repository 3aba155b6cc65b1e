#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "edgefall/errors.hpp"
#include "edgefall/io.hpp"

namespace edgefall {

// Flat `key = value` settings. Lines starting with '#' are comments. Later
// assignments override earlier ones, which is how defaults, config files
// and command-line flags are layered.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<text>") {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      line = trim(line);
      if (line.empty() || line.front() == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                          ": expected key = value");
      }
      auto key = trim(line.substr(0, eq));
      if (key.empty()) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                          ": empty key");
      }
      cfg.set(std::string(key), std::string(trim(line.substr(eq + 1))));
      if (nl == text.size()) break;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::string text;
    try {
      text = io::read_file(path);
    } catch (const DataError&) {
      throw ConfigError("cannot read config file " + path.string());
    }
    return parse(text, path.string());
  }

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

  void merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key, std::string fallback = {}) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0;
    if (!io::parse_double(it->second, v)) bad(key, it->second, "a number");
    return v;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    auto s = trim(it->second);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) bad(key, it->second, "an integer");
    return v;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    auto s = trim(it->second);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) bad(key, it->second, "an unsigned integer");
    return v;
  }

  std::size_t get_count(const std::string& key, std::size_t fallback) const {
    auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) bad(key, get_string(key), "a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "off" || s == "no") return false;
    bad(key, s, "a boolean");
  }

  // Integer list with inclusive ranges: "101-135, 140".
  std::set<int> get_int_set(const std::string& key) const {
    return parse_int_set(get_string(key), key);
  }

  static std::set<int> parse_int_set(std::string_view text, std::string_view what = "list") {
    std::set<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto comma = text.find(',', pos);
      if (comma == std::string_view::npos) comma = text.size();
      auto tok = trim(text.substr(pos, comma - pos));
      pos = comma + 1;
      if (tok.empty()) continue;
      auto dash = tok.find('-', 1);
      int lo = 0, hi = 0;
      if (!parse_int(trim(tok.substr(0, dash)), lo) ||
          (dash != std::string_view::npos && !parse_int(trim(tok.substr(dash + 1)), hi))) {
        throw ConfigError("malformed integer list for " + std::string(what) + ": \"" +
                          std::string(text) + "\"");
      }
      if (dash == std::string_view::npos) hi = lo;
      if (hi < lo) throw ConfigError("descending range in " + std::string(what));
      for (int v = lo; v <= hi; ++v) out.insert(v);
    }
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static bool parse_int(std::string_view s, int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value,
                               const char* expected) {
    throw ConfigError("config key " + key + " = \"" + value + "\" is not " + expected);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace edgefall
