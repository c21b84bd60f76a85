#include "lightyolo/dataset.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <fstream>
#include <sstream>
#include <vector>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace fs = std::filesystem;
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void bad_line(const std::string& source, int line_no, const std::string& what) {
  throw Error(ErrorKind::kFormat, source + ":" + std::to_string(line_no) + ": " + what);
}

double to_double(const std::string& tok, const std::string& source, int line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    bad_line(source, line_no, "not a number: '" + tok + "'");
  }
  return v;
}

int to_class(const std::string& tok, const std::string& source, int line_no) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
    bad_line(source, line_no, "bad class id: '" + tok + "'");
  }
  return v;
}

std::ifstream open(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + p.string());
  return in;
}

std::optional<ImageSize> read_size_file(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in = open(p);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 2) bad_line(p.string(), line_no, "expected 'W H'");
    ImageSize size{to_double(f[0], p.string(), line_no), to_double(f[1], p.string(), line_no)};
    if (size.width <= 0 || size.height <= 0) bad_line(p.string(), line_no, "image size must be positive");
    return size;
  }
  bad_line(p.string(), line_no, "empty size file");
}

}  // namespace

BBox denormalize(double cx, double cy, double w, double h, ImageSize size) {
  return BBox::from_center(cx * size.width, cy * size.height, w * size.width, h * size.height);
}

LabelFile parse_labels(std::istream& in, const std::string& source) {
  struct Raw {
    int cls;
    double cx, cy, w, h;
  };
  std::vector<Raw> raw;
  LabelFile out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() == 2) {
      if (out.has_size) bad_line(source, line_no, "duplicate size line");
      out.size = {to_double(f[0], source, line_no), to_double(f[1], source, line_no)};
      if (out.size.width <= 0 || out.size.height <= 0) bad_line(source, line_no, "image size must be positive");
      out.has_size = true;
      continue;
    }
    if (f.size() != 5) bad_line(source, line_no, "expected 'class cx cy w h'");
    Raw r{to_class(f[0], source, line_no), to_double(f[1], source, line_no), to_double(f[2], source, line_no),
          to_double(f[3], source, line_no), to_double(f[4], source, line_no)};
    if (r.w < 0 || r.h < 0) bad_line(source, line_no, "negative box size");
    raw.push_back(r);
  }
  for (const Raw& r : raw) out.gts.push_back(GroundTruth{denormalize(r.cx, r.cy, r.w, r.h, out.size), r.cls});
  return out;
}

std::vector<Detection> parse_predictions(std::istream& in, const std::string& source, ImageSize size) {
  std::vector<Detection> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 6) bad_line(source, line_no, "expected 'class conf cx cy w h'");
    const int cls = to_class(f[0], source, line_no);
    const double conf = to_double(f[1], source, line_no);
    if (conf < 0.0 || conf > 1.0) bad_line(source, line_no, "confidence outside [0, 1]");
    const double w = to_double(f[4], source, line_no);
    const double h = to_double(f[5], source, line_no);
    if (w < 0 || h < 0) bad_line(source, line_no, "negative box size");
    out.push_back(Detection{denormalize(to_double(f[2], source, line_no), to_double(f[3], source, line_no), w, h, size),
                            cls, conf});
  }
  return out;
}

Dataset load_dataset(const fs::path& labels_dir, const fs::path& preds_dir) {
  for (const fs::path& d : {labels_dir, preds_dir}) {
    if (!fs::is_directory(d)) throw Error(ErrorKind::kIo, "not a directory: " + d.string());
  }
  Dataset ds;
  std::map<std::string, ImageSize> sizes;
  for (const auto& entry : fs::directory_iterator(labels_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    const std::string stem = entry.path().stem().string();
    std::ifstream in = open(entry.path());
    LabelFile lf = parse_labels(in, entry.path().string());
    if (!lf.has_size) {
      if (auto s = read_size_file(labels_dir / (stem + ".size"))) {
        for (GroundTruth& g : lf.gts) {
          g.box = {g.box.x1 * s->width, g.box.y1 * s->height, g.box.x2 * s->width, g.box.y2 * s->height};
        }
        lf.size = *s;
      }
    }
    sizes[stem] = lf.size;
    ds.gts[stem] = std::move(lf.gts);
  }
  for (const auto& entry : fs::directory_iterator(preds_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    const std::string stem = entry.path().stem().string();
    ImageSize size;
    if (auto it = sizes.find(stem); it != sizes.end()) {
      size = it->second;
    } else if (auto s = read_size_file(preds_dir / (stem + ".size"))) {
      size = *s;
    }
    std::ifstream in = open(entry.path());
    ds.preds[stem] = parse_predictions(in, entry.path().string(), size);
  }
  return ds;
}

}  // namespace lightyolo
