#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lightyolo/blocks.hpp"

namespace lightyolo {

// One element of a bracketed list in a model-definition file.
struct Literal {
  enum class Type { kInt, kFloat, kIdent, kList };

  Type type = Type::kInt;
  int64_t i = 0;
  double f = 0.0;
  std::string ident;
  std::vector<Literal> list;
  int line = 0;  // source position, ignored by ==
  int column = 0;

  static Literal integer(int64_t v) { return Literal{Type::kInt, v, 0.0, {}, {}, 0, 0}; }
  static Literal identifier(std::string s) { return Literal{Type::kIdent, 0, 0.0, std::move(s), {}, 0, 0}; }

  bool operator==(const Literal& o) const;
};

struct LayerEntry {
  std::vector<int> from;
  bool from_is_list = false;  // `[-1, 6]` vs `-1`
  int repeats = 1;
  std::string module;
  std::vector<Literal> args;
  int line = 0;  // ignored by ==

  bool operator==(const LayerEntry& o) const {
    return from == o.from && from_is_list == o.from_is_list && repeats == o.repeats && module == o.module &&
           args == o.args;
  }
};

struct ModelConfig {
  int nc = 0;
  double depth_multiple = 1.0;
  double width_multiple = 1.0;
  AnchorTable anchors{};
  std::vector<LayerEntry> backbone;
  std::vector<LayerEntry> head;

  bool operator==(const ModelConfig&) const = default;
};

// Parses the restricted line-oriented grammar. Every rejection is an Error
// carrying a 1-based line and column.
ModelConfig parse_model_config(std::string_view text);

// Canonical text form; parse(serialize(c)) == c.
std::string serialize_model_config(const ModelConfig& cfg);

// Round-half-away-from-zero channel scaling to a multiple of 8 (minimum 8).
int64_t scale_width(int64_t c, double width_multiple);

// Repeat scaling; a single repeat is never scaled.
int scale_depth(int n, double depth_multiple);

}  // namespace lightyolo
