#pragma once

#include "ergow2/common.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace ergow2 {

// Key-value config with [table] sections:
//
//   [model]
//   kind = "ou"
//   theta = 1.0
//   box = [-5, 5]
//
// Values are numbers, booleans, strings (quoted or bare) or numeric arrays.
class Config {
 public:
  using Value = std::variant<double, bool, std::string, std::vector<double>>;

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), Err::ConfigError, "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  static Config parse(const std::string& text) {
    Config cfg;
    std::string section = "";
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        require(s.back() == ']', Err::ConfigError,
                "line " + std::to_string(lineno) + ": unterminated section header");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      require(eq != std::string::npos, Err::ConfigError,
              "line " + std::to_string(lineno) + ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string val = strip(s.substr(eq + 1));
      require(!key.empty(), Err::ConfigError, "line " + std::to_string(lineno) + ": empty key");
      cfg.tables_[section][key] = parse_value(section + "." + key, val);
    }
    return cfg;
  }

  bool has(const std::string& section, const std::string& key) const {
    auto t = tables_.find(section);
    return t != tables_.end() && t->second.count(key) > 0;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const Value& v = tables_.at(section).at(key);
    if (auto* d = std::get_if<double>(&v)) return *d;
    throw Error(Err::ConfigError, section + "." + key + ": expected a number");
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const Value& v = tables_.at(section).at(key);
    if (auto* b = std::get_if<bool>(&v)) return *b;
    throw Error(Err::ConfigError, section + "." + key + ": expected true/false");
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    if (!has(section, key)) return fallback;
    const Value& v = tables_.at(section).at(key);
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    throw Error(Err::ConfigError, section + "." + key + ": expected a string");
  }

  std::vector<double> get_array(const std::string& section, const std::string& key,
                                const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    const Value& v = tables_.at(section).at(key);
    if (auto* a = std::get_if<std::vector<double>>(&v)) return *a;
    if (auto* d = std::get_if<double>(&v)) return {*d};
    throw Error(Err::ConfigError, section + "." + key + ": expected an array");
  }

 private:
  static std::string strip(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static double parse_number(const std::string& where, const std::string& s) {
    try {
      std::size_t pos = 0;
      double d = std::stod(s, &pos);
      require(pos == s.size(), Err::ConfigError, where + ": bad number '" + s + "'");
      return d;
    } catch (const Error&) {
      throw;
    } catch (...) {
      throw Error(Err::ConfigError, where + ": bad number '" + s + "'");
    }
  }

  static Value parse_value(const std::string& where, const std::string& raw) {
    require(!raw.empty(), Err::ConfigError, where + ": empty value");
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '"') {
      require(raw.size() >= 2 && raw.back() == '"', Err::ConfigError,
              where + ": unterminated string");
      return raw.substr(1, raw.size() - 2);
    }
    if (raw.front() == '[') {
      require(raw.back() == ']', Err::ConfigError, where + ": unterminated array");
      std::vector<double> out;
      std::string body = raw.substr(1, raw.size() - 2);
      std::istringstream in(body);
      std::string item;
      while (std::getline(in, item, ',')) {
        std::string t = strip(item);
        if (!t.empty()) out.push_back(parse_number(where, t));
      }
      return out;
    }
    // bare token: number if it parses, string otherwise
    try {
      std::size_t pos = 0;
      double d = std::stod(raw, &pos);
      if (pos == raw.size()) return d;
    } catch (...) {
    }
    return raw;
  }

  std::map<std::string, std::map<std::string, Value>> tables_;
};

}  // namespace ergow2
