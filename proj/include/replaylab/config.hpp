// Line-oriented experiment config:
//
//   # comment
//   [train]
//   hidden = 40
//   epoch_scale = 0.1
//
// Keys are addressed as "section.key"; keys before any section header live in
// the unnamed section and are addressed by their bare name.
#pragma once

#include "core.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace replaylab {

class Config {
 public:
  static Config parse(std::istream& is) {
    Config cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string text = trim(line);
      if (text.empty()) continue;
      if (text.front() == '[') {
        require(text.back() == ']' && text.size() > 2, ErrorKind::parameter,
                "config line " + std::to_string(line_no) + ": bad section header");
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      require(eq != std::string::npos, ErrorKind::parameter,
              "config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(text.substr(0, eq));
      require(!key.empty(), ErrorKind::parameter,
              "config line " + std::to_string(line_no) + ": empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = trim(text.substr(eq + 1));
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open config " + path.string());
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> get_double(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    require(ec == std::errc{} && ptr == v->data() + v->size(), ErrorKind::parameter,
            "config key " + key + ": not a number");
    return out;
  }

  std::optional<long> get_int(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    long out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    require(ec == std::errc{} && ptr == v->data() + v->size(), ErrorKind::parameter,
            "config key " + key + ": not an integer");
    return out;
  }

  std::optional<bool> get_bool(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw Error(ErrorKind::parameter, "config key " + key + ": not a boolean");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace replaylab
