#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hitter {

using EntityId = int32_t;
using RelationId = int32_t;

enum class Mode { Train, Eval };

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and exit nonzero with the message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error("index error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

class VocabError : public Error {
 public:
  explicit VocabError(const std::string& msg) : Error("vocab error: " + msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace hitter
