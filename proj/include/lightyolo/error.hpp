#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace lightyolo {

enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kIo,
  kFormat,
  kParse,
  kGraph,
  kBlock,
};

// Single exception type for the library. Parse errors carry a 1-based
// line/column; graph errors carry the offending layer index.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  static Error at(int line, int column, const std::string& what) {
    Error e(ErrorKind::kParse,
            "line " + std::to_string(line) + ", col " + std::to_string(column) + ": " + what);
    e.line_ = line;
    e.column_ = column;
    return e;
  }

  static Error layer(int index, const std::string& what) {
    Error e(ErrorKind::kGraph, "layer " + std::to_string(index) + ": " + what);
    e.layer_ = index;
    return e;
  }

  ErrorKind kind() const { return kind_; }
  std::optional<int> line() const { return line_; }
  std::optional<int> column() const { return column_; }
  std::optional<int> layer_index() const { return layer_; }

 private:
  ErrorKind kind_;
  std::optional<int> line_;
  std::optional<int> column_;
  std::optional<int> layer_;
};

}  // namespace lightyolo
