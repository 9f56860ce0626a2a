#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "proxyq/errors.hpp"

namespace proxyq {

// Flag values like "mock:dim=768,seed=42" — a kind name plus key=value
// pairs. Values may contain '=' (urls); they may not contain ','.
struct SpecString {
  std::string kind;
  std::map<std::string, std::string> params;

  static SpecString parse(const std::string& s) {
    SpecString out;
    size_t colon = s.find(':');
    out.kind = s.substr(0, colon);
    if (out.kind.empty()) throw DataError("empty spec string");
    if (colon == std::string::npos) return out;
    std::string rest = s.substr(colon + 1);
    size_t pos = 0;
    while (pos < rest.size()) {
      size_t comma = rest.find(',', pos);
      std::string pair = rest.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!pair.empty()) {
        size_t eq = pair.find('=');
        if (eq == std::string::npos || eq == 0)
          throw DataError("bad spec parameter \"" + pair + "\" in \"" + s +
                          "\"");
        out.params[pair.substr(0, eq)] = pair.substr(eq + 1);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return out;
  }

  bool has(const std::string& key) const { return params.count(key) != 0; }

  std::string get_str(const std::string& key,
                      const std::string& fallback = "") const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    try {
      size_t used = 0;
      int64_t v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trail");
      return v;
    } catch (const std::exception&) {
      throw DataError("parameter " + key + " must be an integer, got \"" +
                      it->second + "\"");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    try {
      size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trail");
      return v;
    } catch (const std::exception&) {
      throw DataError("parameter " + key + " must be a number, got \"" +
                      it->second + "\"");
    }
  }

  void check_keys(const std::set<std::string>& allowed,
                  const std::string& what) const {
    for (const auto& [k, v] : params)
      if (!allowed.count(k)) {
        std::string msg = "unknown " + what + " parameter \"" + k +
                          "\"; allowed:";
        for (const std::string& a : allowed) msg += " " + a;
        throw DataError(msg);
      }
  }
};

}  // namespace proxyq
