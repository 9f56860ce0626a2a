#pragma once

#include <stdexcept>
#include <string>

namespace proxyq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// query text error carrying a 1-based source position
struct ParseError : Error {
  ParseError(const std::string& msg, int line, int col)
      : Error(msg + " at line " + std::to_string(line) + ", column " +
              std::to_string(col)),
        line(line),
        col(col) {}
  int line;
  int col;
};

struct BindError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct TransportError : Error {
  using Error::Error;
};

}  // namespace proxyq
