#include "lightyolo/model_config.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <set>

#include "lightyolo/error.hpp"

namespace lightyolo {

bool Literal::operator==(const Literal& o) const {
  if (type != o.type) return false;
  switch (type) {
    case Type::kInt:
      return i == o.i;
    case Type::kFloat:
      return f == o.f;
    case Type::kIdent:
      return ident == o.ident;
    case Type::kList:
      return list == o.list;
  }
  return false;
}

namespace {

constexpr int kMaxNesting = 8;
constexpr int kMaxRepeats = 64;
constexpr int kMaxFrom = 1000;
constexpr int64_t kMaxChannels = 65536;

bool is_ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Lexes one bracketed list from a single line.
class ListLexer {
 public:
  ListLexer(std::string_view line, int line_no, size_t pos) : s_(line), line_(line_no), pos_(pos) {}

  Literal parse_list(int depth = 0) {
    if (depth > kMaxNesting) throw error("lists nested too deeply");
    Literal lit;
    lit.type = Literal::Type::kList;
    lit.line = line_;
    lit.column = column();
    expect('[');
    skip_space();
    if (peek() == ']') throw error("empty list");
    while (true) {
      skip_space();
      lit.list.push_back(parse_element(depth));
      skip_space();
      const char c = peek();
      if (c == ',') {
        ++pos_;
        continue;
      }
      if (c == ']') {
        ++pos_;
        break;
      }
      if (c == '\0') throw error("unterminated list");
      throw error(std::string("unexpected character '") + c + "'");
    }
    return lit;
  }

  void expect_end() {
    skip_space();
    if (pos_ < s_.size()) throw error("trailing characters after list");
  }

 private:
  Literal parse_element(int depth) {
    const char c = peek();
    if (c == '[') return parse_list(depth + 1);
    if (is_ident_start(c)) {
      Literal lit;
      lit.type = Literal::Type::kIdent;
      lit.line = line_;
      lit.column = column();
      const size_t start = pos_;
      while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
      lit.ident = std::string(s_.substr(start, pos_ - start));
      return lit;
    }
    if (c == '-' || c == '+' || is_digit(c) || c == '.') return parse_number();
    if (c == '\0') throw error("expected list element");
    throw error(std::string("unexpected character '") + c + "'");
  }

  Literal parse_number() {
    Literal lit;
    lit.line = line_;
    lit.column = column();
    const size_t start = pos_;
    if (peek() == '-' || peek() == '+') ++pos_;
    bool is_float = false;
    size_t digits = 0;
    while (is_digit(peek())) ++pos_, ++digits;
    if (peek() == '.') {
      is_float = true;
      ++pos_;
      while (is_digit(peek())) ++pos_, ++digits;
    }
    if (digits == 0) throw error("malformed number");
    if (peek() == 'e' || peek() == 'E') {
      is_float = true;
      ++pos_;
      if (peek() == '-' || peek() == '+') ++pos_;
      if (!is_digit(peek())) throw error("malformed exponent");
      while (is_digit(peek())) ++pos_;
    }
    if (is_ident_char(peek())) throw error("malformed number");
    std::string_view tok = s_.substr(start, pos_ - start);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    if (is_float) {
      lit.type = Literal::Type::kFloat;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), lit.f);
      if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(lit.f)) {
        throw Error::at(lit.line, lit.column, "number out of range");
      }
    } else {
      lit.type = Literal::Type::kInt;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), lit.i);
      if (ec != std::errc() || p != tok.data() + tok.size()) {
        throw Error::at(lit.line, lit.column, "integer out of range");
      }
    }
    return lit;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_space() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  void expect(char c) {
    if (peek() != c) throw error(std::string("expected '") + c + "'");
    ++pos_;
  }
  int column() const { return static_cast<int>(pos_) + 1; }
  Error error(const std::string& what) const { return Error::at(line_, column(), what); }

  std::string_view s_;
  int line_;
  size_t pos_;
};

enum class Section { kNone, kAnchors, kBackbone, kHead };

struct ArgRule {
  std::string_view kinds;  // one code per position, see check_arg
  size_t min_args;
};

ArgRule rule_for(BlockKind kind) {
  switch (kind) {
    case BlockKind::kConvBnAct:
      return {"cksp", 1};
    case BlockKind::kBottleneck:
    case BlockKind::kC3:
    case BlockKind::kC3Ghost:
    case BlockKind::kC3Faster:
      return {"cb", 1};
    case BlockKind::kSPPF:
      return {"ck", 1};
    case BlockKind::kGhostConv:
    case BlockKind::kGhostBottleneck:
      return {"cks", 1};
    case BlockKind::kPConv:
      return {"ck", 1};
    case BlockKind::kFasterBlock:
      return {"c", 1};
    case BlockKind::kUpsample:
      return {"um", 2};
    case BlockKind::kConcat:
      return {"d", 1};
    case BlockKind::kDetect:
      return {"na", 2};
  }
  return {"", 0};
}

Error at(const Literal& lit, const std::string& what) { return Error::at(lit.line, lit.column, what); }

int64_t int_in(const Literal& lit, int64_t lo, int64_t hi, const char* what) {
  if (lit.type != Literal::Type::kInt) throw at(lit, std::string(what) + " must be an integer");
  if (lit.i < lo || lit.i > hi) {
    throw at(lit, std::string(what) + " " + std::to_string(lit.i) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
  return lit.i;
}

void check_anchor_row(const Literal& row) {
  if (row.type != Literal::Type::kList || row.list.size() != 6) {
    throw at(row, "anchor row must be a list of 6 integers (3 w,h pairs)");
  }
  for (const Literal& v : row.list) int_in(v, 1, 100000, "anchor");
}

void check_arg(const Literal& lit, char code) {
  switch (code) {
    case 'c':
      int_in(lit, 1, kMaxChannels, "channel count");
      break;
    case 'k':
      int_in(lit, 1, 15, "kernel size");
      break;
    case 's':
      int_in(lit, 1, 8, "stride");
      break;
    case 'p':
      int_in(lit, 0, 15, "padding");
      break;
    case 'b':
      if (lit.type != Literal::Type::kIdent || (lit.ident != "true" && lit.ident != "false" && lit.ident != "True" &&
                                                lit.ident != "False")) {
        throw at(lit, "expected true or false");
      }
      break;
    case 'u':
      int_in(lit, 2, 2, "upsample scale");
      break;
    case 'm':
      if (lit.type != Literal::Type::kIdent || lit.ident != "nearest") throw at(lit, "expected 'nearest'");
      break;
    case 'd':
      int_in(lit, 1, 1, "concat dimension");
      break;
    case 'n':
      if (lit.type == Literal::Type::kIdent) {
        if (lit.ident != "nc") throw at(lit, "expected 'nc' or an integer class count");
      } else {
        int_in(lit, 1, 10000, "class count");
      }
      break;
    case 'a':
      if (lit.type == Literal::Type::kIdent) {
        if (lit.ident != "anchors") throw at(lit, "expected 'anchors' or an anchor table");
      } else if (lit.type == Literal::Type::kList && lit.list.size() == 3) {
        for (const Literal& row : lit.list) check_anchor_row(row);
      } else {
        throw at(lit, "anchor table must list 3 scales");
      }
      break;
    default:
      break;
  }
}

LayerEntry parse_layer(const Literal& item) {
  if (item.list.size() != 4) throw at(item, "layer must be [from, repeats, module, args]");
  LayerEntry e;
  e.line = item.line;
  const Literal& from = item.list[0];
  if (from.type == Literal::Type::kInt) {
    e.from.push_back(static_cast<int>(int_in(from, -kMaxFrom, kMaxFrom, "from index")));
  } else if (from.type == Literal::Type::kList) {
    e.from_is_list = true;
    for (const Literal& f : from.list) e.from.push_back(static_cast<int>(int_in(f, -kMaxFrom, kMaxFrom, "from index")));
  } else {
    throw at(from, "from must be an integer or list of integers");
  }
  e.repeats = static_cast<int>(int_in(item.list[1], 1, kMaxRepeats, "repeats"));
  const Literal& mod = item.list[2];
  if (mod.type != Literal::Type::kIdent) throw at(mod, "module must be a bare identifier");
  const auto kind = kind_from_name(mod.ident);
  if (!kind) throw at(mod, "unknown module name '" + mod.ident + "'");
  e.module = mod.ident;
  const Literal& args = item.list[3];
  if (args.type != Literal::Type::kList) throw at(args, "args must be a list");
  const ArgRule rule = rule_for(*kind);
  if (args.list.size() < rule.min_args || args.list.size() > rule.kinds.size()) {
    throw at(args, "arity mismatch for " + mod.ident + ": got " + std::to_string(args.list.size()) +
                       " args, expected " + std::to_string(rule.min_args) + ".." + std::to_string(rule.kinds.size()));
  }
  for (size_t i = 0; i < args.list.size(); ++i) check_arg(args.list[i], rule.kinds[i]);
  e.args = args.list;
  return e;
}

}  // namespace

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig cfg;
  std::set<std::string> seen;
  Section section = Section::kNone;
  int section_line = 0;
  std::vector<Literal> anchor_rows;
  int anchors_line = 0;
  int line_no = 0;
  size_t start = 0;

  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    const bool last = end == text.size();
    start = end + 1;

    if (const size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    while (!line.empty() && line.back() == ' ') line.remove_suffix(1);
    for (size_t i = 0; i < line.size(); ++i) {
      const auto ch = static_cast<unsigned char>(line[i]);
      if (ch == '\t') throw Error::at(line_no, static_cast<int>(i) + 1, "tab characters are not allowed");
      if (ch < 0x20 || ch >= 0x7f) throw Error::at(line_no, static_cast<int>(i) + 1, "unexpected character");
    }
    if (line.empty()) {
      if (last) break;
      continue;
    }

    if (line.front() == ' ') {
      if (line.size() <= 4 || line.substr(0, 4) != "  - " || line[4] == ' ') {
        if (line.size() >= 3 && line[2] == ' ') throw Error::at(line_no, 1, "indentation must be exactly two spaces");
        throw Error::at(line_no, 1, "expected list item '  - [...]'");
      }
      if (section == Section::kNone) throw Error::at(line_no, 3, "list item outside of a section");
      ListLexer lex(line, line_no, 4);
      Literal item = lex.parse_list();
      lex.expect_end();
      if (section == Section::kAnchors) {
        check_anchor_row(item);
        anchor_rows.push_back(std::move(item));
        if (anchor_rows.size() > 3) throw Error::at(line_no, 5, "exactly 3 anchor scales are required");
      } else {
        LayerEntry e = parse_layer(item);
        (section == Section::kBackbone ? cfg.backbone : cfg.head).push_back(std::move(e));
      }
      if (last) break;
      continue;
    }

    // Top-level "key:" or "key: value".
    if (!is_ident_start(line.front())) throw Error::at(line_no, 1, "expected a key");
    size_t pos = 0;
    while (pos < line.size() && is_ident_char(line[pos])) ++pos;
    const std::string key(line.substr(0, pos));
    if (pos >= line.size() || line[pos] != ':') throw Error::at(line_no, static_cast<int>(pos) + 1, "expected ':'");
    ++pos;
    if (!seen.insert(key).second) throw Error::at(line_no, 1, "duplicate top-level key '" + key + "'");

    // A section ends when the next top-level key starts.
    if (section == Section::kAnchors || section == Section::kBackbone || section == Section::kHead) {
      const size_t count = section == Section::kAnchors ? anchor_rows.size()
                           : section == Section::kBackbone ? cfg.backbone.size()
                                                           : cfg.head.size();
      if (count == 0) throw Error::at(section_line, 1, "section has no items");
    }
    section = Section::kNone;

    const bool is_section = key == "anchors" || key == "backbone" || key == "head";
    const bool is_pair = key == "nc" || key == "depth_multiple" || key == "width_multiple";
    if (!is_section && !is_pair) throw Error::at(line_no, 1, "unknown key '" + key + "'");
    size_t vpos = pos;
    while (vpos < line.size() && line[vpos] == ' ') ++vpos;
    const bool has_value = vpos < line.size();

    if (is_section) {
      if (has_value) throw Error::at(line_no, static_cast<int>(vpos) + 1, "section '" + key + "' takes no value");
      section = key == "anchors" ? Section::kAnchors : key == "backbone" ? Section::kBackbone : Section::kHead;
      section_line = line_no;
      if (section == Section::kAnchors) anchors_line = line_no;
      if (last) break;
      continue;
    }

    if (!has_value) throw Error::at(line_no, static_cast<int>(pos) + 1, "missing value for '" + key + "'");
    if (vpos == pos) throw Error::at(line_no, static_cast<int>(pos) + 1, "expected a space after ':'");
    // Reuse the list lexer for the scalar by wrapping it in brackets.
    const std::string wrapped = std::string(vpos - 1, ' ') + "[" + std::string(line.substr(vpos)) + "]";
    ListLexer lex(wrapped, line_no, vpos - 1);
    Literal lit = lex.parse_list();
    lex.expect_end();
    if (lit.list.size() != 1 || lit.list.front().type == Literal::Type::kList) {
      throw Error::at(line_no, static_cast<int>(vpos) + 1, "expected a scalar value");
    }
    const Literal& v = lit.list.front();
    if (key == "nc") {
      cfg.nc = static_cast<int>(int_in(v, 1, 10000, "nc"));
    } else {
      double d = 0.0;
      if (v.type == Literal::Type::kInt) {
        d = static_cast<double>(v.i);
      } else if (v.type == Literal::Type::kFloat) {
        d = v.f;
      } else {
        throw at(v, key + " must be a number");
      }
      if (!(d > 0.0 && d <= 2.0)) throw at(v, key + " must be in (0, 2]");
      (key == "depth_multiple" ? cfg.depth_multiple : cfg.width_multiple) = d;
    }
    if (last) break;
  }

  if (section != Section::kNone) {
    const size_t count = section == Section::kAnchors ? anchor_rows.size()
                         : section == Section::kBackbone ? cfg.backbone.size()
                                                         : cfg.head.size();
    if (count == 0) throw Error::at(section_line, 1, "section has no items");
  }
  for (const char* key : {"nc", "depth_multiple", "width_multiple", "anchors", "backbone", "head"}) {
    if (!seen.count(key)) throw Error::at(line_no, 1, std::string("missing required key ") + key);
  }
  if (anchor_rows.size() != 3) throw Error::at(anchors_line, 1, "exactly 3 anchor scales are required");
  for (size_t r = 0; r < 3; ++r) {
    for (size_t j = 0; j < 6; ++j) cfg.anchors[r][j] = static_cast<int>(anchor_rows[r].list[j].i);
  }
  return cfg;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void append_literal(std::string& out, const Literal& lit) {
  switch (lit.type) {
    case Literal::Type::kInt:
      out += std::to_string(lit.i);
      break;
    case Literal::Type::kFloat:
      out += format_double(lit.f);
      break;
    case Literal::Type::kIdent:
      out += lit.ident;
      break;
    case Literal::Type::kList:
      out += '[';
      for (size_t i = 0; i < lit.list.size(); ++i) {
        if (i) out += ", ";
        append_literal(out, lit.list[i]);
      }
      out += ']';
      break;
  }
}

void append_layers(std::string& out, const char* name, const std::vector<LayerEntry>& layers) {
  out += name;
  out += ":\n";
  for (const LayerEntry& e : layers) {
    out += "  - [";
    if (e.from_is_list) {
      out += '[';
      for (size_t i = 0; i < e.from.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(e.from[i]);
      }
      out += ']';
    } else {
      out += std::to_string(e.from.front());
    }
    out += ", " + std::to_string(e.repeats) + ", " + e.module + ", [";
    for (size_t i = 0; i < e.args.size(); ++i) {
      if (i) out += ", ";
      append_literal(out, e.args[i]);
    }
    out += "]]\n";
  }
}

}  // namespace

std::string serialize_model_config(const ModelConfig& cfg) {
  std::string out;
  out += "nc: " + std::to_string(cfg.nc) + "\n";
  out += "depth_multiple: " + format_double(cfg.depth_multiple) + "\n";
  out += "width_multiple: " + format_double(cfg.width_multiple) + "\n";
  out += "anchors:\n";
  for (const auto& row : cfg.anchors) {
    out += "  - [";
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out += ", ";
      out += std::to_string(row[j]);
    }
    out += "]\n";
  }
  append_layers(out, "backbone", cfg.backbone);
  append_layers(out, "head", cfg.head);
  return out;
}

int64_t scale_width(int64_t c, double width_multiple) {
  const double scaled = std::round(static_cast<double>(c) * width_multiple / 8.0);
  return std::max<int64_t>(8 * static_cast<int64_t>(scaled), 8);
}

int scale_depth(int n, double depth_multiple) {
  if (n == 1) return 1;
  return std::max(static_cast<int>(std::round(static_cast<double>(n) * depth_multiple)), 1);
}

}  // namespace lightyolo
