// INI-style configuration files: [section] headers, key = value pairs, '#'
// or ';' comments. The digest covers exactly the keys a command consumes
// (with their effective values), so cosmetic edits never change it and any
// semantically meaningful change does.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hesit/common.hpp"

namespace hesit {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key(key) {}
  std::string key;
};

class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path, "cannot open config file");
    return parse_stream(is, path);
  }

  static Config parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse_stream(is, "<string>");
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_str(const std::string& key, const std::string& def) const {
    const auto it = values_.find(key);
    const std::string v = it == values_.end() ? def : it->second;
    effective_[key] = v;
    return v;
  }

  std::string require_str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "missing required key");
    effective_[key] = it->second;
    return it->second;
  }

  long long get_int(const std::string& key, long long def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      effective_[key] = std::to_string(def);
      return def;
    }
    try {
      const long long v = std::stoll(it->second);
      effective_[key] = std::to_string(v);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "expected an integer, got '" + it->second + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      effective_[key] = std::to_string(def);
      return def;
    }
    try {
      const std::uint64_t v = std::stoull(it->second);
      effective_[key] = std::to_string(v);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "expected an unsigned integer, got '" + it->second + "'");
    }
  }

  double get_double(const std::string& key, double def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      effective_[key] = canonical_double(def);
      return def;
    }
    try {
      const double v = std::stod(it->second);
      effective_[key] = canonical_double(v);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a real number, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      effective_[key] = def ? "true" : "false";
      return def;
    }
    if (it->second == "true" || it->second == "1") {
      effective_[key] = "true";
      return true;
    }
    if (it->second == "false" || it->second == "0") {
      effective_[key] = "false";
      return false;
    }
    throw ConfigError(key, "expected true/false, got '" + it->second + "'");
  }

  std::vector<std::string> get_list(const std::string& key, const std::string& def) const {
    const std::string raw = get_str(key, def);
    std::vector<std::string> out;
    std::stringstream ss(raw);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::string trimmed = trim(tok);
      if (!trimmed.empty()) out.push_back(trimmed);
    }
    return out;
  }

  // FNV-1a over the sorted effective key=value pairs consumed so far.
  std::uint64_t digest() const {
    Fnv1a h;
    for (const auto& [k, v] : effective_) {
      h.update_str(k);
      h.update("=", 1);
      h.update_str(v);
      h.update("\n", 1);
    }
    return h.digest();
  }

  const std::map<std::string, std::string>& effective() const { return effective_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static std::string canonical_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  static Config parse_stream(std::istream& is, const std::string& origin) {
    Config cfg;
    std::string line, section;
    std::size_t row = 0;
    while (std::getline(is, line)) {
      ++row;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(row), "malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(row), "expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(row), "empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> effective_;
};

}  // namespace hesit
