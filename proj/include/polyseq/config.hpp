#pragma once

/// Flat `key = value` configuration with `#` comments. Keys must be defined
/// (with a default) before a file is loaded; anything unknown in the file is
/// rejected outright rather than silently ignored. The effective
/// configuration — including which values are still defaults — can be
/// printed, and commands do so at startup.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "polyseq/errors.hpp"

namespace polyseq::cfg {

class Config {
 public:
  void define(const std::string& key, const std::string& default_value) {
    if (index_.count(key)) raise(Errc::kConfigError, "config key defined twice: " + key);
    index_.emplace(key, entries_.size());
    entries_.push_back(Entry{key, default_value, false});
  }

  /// Applies a `key = value` file on top of the defaults.
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) raise(Errc::kIoError, "cannot read config " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        raise(Errc::kConfigError,
              path + ":" + std::to_string(line_no) + ": expected key = value");
      }
      set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
  }

  /// Sets one value; the key must have been defined. CLI overrides reuse
  /// this after load_file.
  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) raise(Errc::kConfigError, "unknown config key: " + key);
    entries_[it->second].value = value;
    entries_[it->second].overridden = true;
  }

  bool overridden(const std::string& key) const { return entry(key).overridden; }

  const std::string& str(const std::string& key) const { return entry(key).value; }

  std::int64_t integer(const std::string& key) const {
    const Entry& e = entry(key);
    try {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument(e.value);
      return v;
    } catch (const std::exception&) {
      raise(Errc::kConfigError, "config key " + key + " needs an integer, got '" + e.value + "'");
    }
  }

  double real(const std::string& key) const {
    const Entry& e = entry(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument(e.value);
      return v;
    } catch (const std::exception&) {
      raise(Errc::kConfigError, "config key " + key + " needs a number, got '" + e.value + "'");
    }
  }

  bool flag(const std::string& key) const {
    const std::string& v = entry(key).value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    raise(Errc::kConfigError, "config key " + key + " needs a boolean, got '" + v + "'");
  }

  /// Prints every key in definition order, flagging defaults.
  void print(std::ostream& os) const {
    for (const auto& e : entries_) {
      os << e.key << " = " << e.value << (e.overridden ? "" : "  # default") << "\n";
    }
  }

 private:
  struct Entry {
    std::string key, value;
    bool overridden;
  };

  static std::string trim(const std::string& s) {
    auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto e = std::find_if_not(s.rbegin(), s.rend(),
                              [](unsigned char c) { return std::isspace(c); })
                 .base();
    return b < e ? std::string(b, e) : std::string();
  }

  const Entry& entry(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) raise(Errc::kConfigError, "unknown config key: " + key);
    return entries_[it->second];
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace polyseq::cfg
