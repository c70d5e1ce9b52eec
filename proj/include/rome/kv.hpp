#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rome/error.hpp"

namespace rome {

/// Ordered `key = value` records, the format shared by manifests, config
/// echoes, and metrics files. Order is preserved so serialization is stable.
class KvFile {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items_)
      if (k == key) {
        v = value;
        return;
      }
    items_.emplace_back(key, value);
  }

  void set_i64(const std::string& key, int64_t v) { set(key, std::to_string(v)); }

  void set_f64(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    set(key, buf);
  }

  bool has(const std::string& key) const {
    for (auto& [k, v] : items_)
      if (k == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (auto& [k, v] : items_)
      if (k == key) return v;
    throw ConfigError("missing key '" + key + "'");
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  int64_t get_i64(const std::string& key) const {
    const std::string& s = get(key);
    try {
      size_t pos = 0;
      int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected integer, got '" + s + "'");
    }
  }

  double get_f64(const std::string& key) const {
    const std::string& s = get(key);
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected number, got '" + s + "'");
    }
  }

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  std::string serialize() const {
    std::ostringstream os;
    for (auto& [k, v] : items_) os << k << " = " << v << "\n";
    return os.str();
  }

  static KvFile parse(std::istream& in, const std::string& origin) {
    KvFile kv;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty())
        throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (kv.has(key))
        throw ParseError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      kv.set(key, val);
    }
    return kv;
  }

  static KvFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse(in, path);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << serialize();
    if (!out) throw IoError("write failed for " + path);
  }

  static std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  /// Comma-separated list helper for vocabulary and role lines.
  static std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
  }

  static std::string join_csv(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += v[i];
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace rome
