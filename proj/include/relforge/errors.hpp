#pragma once

#include <stdexcept>
#include <string>

namespace relforge {

// Base for all library errors. Subclasses carry enough context to point at the
// offending file/record without a debugger.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Structural problem in an input document (missing key, wrong type, unknown field).
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& field,
              const std::string& detail = "")
      : Error("schema error in " + path + ": field '" + field + "'" +
              (detail.empty() ? "" : " (" + detail + ")")),
        path(path),
        field(field) {}
  std::string path;
  std::string field;
};

// A single malformed row in a tabular/line-oriented input.
class RowError : public Error {
 public:
  RowError(long line, const std::string& detail)
      : Error("row " + std::to_string(line) + ": " + detail), line(line) {}
  long line;
};

class OrderError : public Error {
 public:
  using Error::Error;
};

class InvalidBox : public Error {
 public:
  using Error::Error;
};

class InvalidPair : public Error {
 public:
  using Error::Error;
};

// Position-tracked failure from a text-format parser (relation DSL, rulesets).
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& expected)
      : Error("parse error at offset " + std::to_string(position) + ": expected " +
              expected),
        position(position),
        expected(expected) {}
  std::size_t position;
  std::string expected;
};

// A relation predicate referenced a field the record does not carry. Deliberately
// an error rather than "false": silent false would mislabel training pairs.
class MissingField : public Error {
 public:
  MissingField(const std::string& record_id, const std::string& field)
      : Error("record '" + record_id + "' has no field '" + field + "'"),
        record_id(record_id),
        field(field) {}
  std::string record_id;
  std::string field;
};

// Operator applied to a value of the wrong kind (set op on a scalar, etc.).
class TypeError : public Error {
 public:
  using Error::Error;
};

class EmptyStore : public Error {
 public:
  using Error::Error;
};

class EmptyEncoding : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  using Error::Error;
};

// Transform pushed the box (mostly) outside the unit frame.
class OutOfFrame : public Error {
 public:
  using Error::Error;
};

class TooFewFrames : public Error {
 public:
  using Error::Error;
};

class EmptyCaption : public Error {
 public:
  using Error::Error;
};

// Transport/auth failure talking to the generation endpoint, after retries.
class ClientError : public Error {
 public:
  ClientError(const std::string& detail, int status = 0)
      : Error("client error: " + detail +
              (status ? " (http " + std::to_string(status) + ")" : "")),
        status(status) {}
  int status;
};

class ImageIndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class PoolTooSmall : public Error {
 public:
  using Error::Error;
};

class EmptyEval : public Error {
 public:
  using Error::Error;
};

}  // namespace relforge
