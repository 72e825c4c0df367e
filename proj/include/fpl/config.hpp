#pragma once

// Flat `key = value` files with '#' comments. Readers record which keys
// were consumed so that leftovers can be reported as unknown.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fpl {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class KeyValues {
public:
  KeyValues() = default;

  static KeyValues parse(std::string_view text, const std::string& origin = "<config>") {
    KeyValues kv;
    kv.origin_ = origin;
    int line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
      ++line_no;
      const std::size_t end = std::min(text.find('\n', start), text.size());
      std::string_view line = text.substr(start, end - start);
      start = end + 1;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      if (!kv.values_.emplace(key, value).second)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return kv;
  }

  static KeyValues load(const std::string& path) { return parse(read_file(path), path); }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& origin() const { return origin_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    double v = 0.0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError(origin_ + ": '" + key + "' expects a number, got '" + s + "'");
    return v;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError(origin_ + ": '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
  }

  /// Throws on the first key nobody asked for.
  void reject_unknown() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }

private:
  std::string origin_ = "<config>";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

} // namespace fpl
