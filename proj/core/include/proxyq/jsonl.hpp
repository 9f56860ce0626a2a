#pragma once

#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"

#include "proxyq/errors.hpp"

namespace proxyq {

using json = nlohmann::json;

// Streams one parsed object per non-empty line; `fn` gets (line_no, obj),
// line numbers are 1-based.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(int, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ": malformed record on line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    fn(line_no, obj);
  }
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << body;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace proxyq
