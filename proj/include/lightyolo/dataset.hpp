#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "lightyolo/evaluate.hpp"

namespace lightyolo {

struct ImageSize {
  double width = 1.0;
  double height = 1.0;
};

// Box from normalized YOLO (cx, cy, w, h) to absolute xyxy.
BBox denormalize(double cx, double cy, double w, double h, ImageSize size);

// Label lines are "class cx cy w h" (normalized). A two-field "W H" line sets
// the image size; without one the boxes stay in normalized units.
struct LabelFile {
  std::vector<GroundTruth> gts;
  bool has_size = false;
  ImageSize size;
};
LabelFile parse_labels(std::istream& in, const std::string& source);

// Prediction lines are "class conf cx cy w h" (normalized).
std::vector<Detection> parse_predictions(std::istream& in, const std::string& source, ImageSize size);

struct Dataset {
  GtsByImage gts;
  PredsByImage preds;
};

// Pairs labels/<stem>.txt with preds/<stem>.txt. The image size comes from the
// label file's "W H" line or, failing that, a <stem>.size file next to it.
Dataset load_dataset(const std::filesystem::path& labels_dir, const std::filesystem::path& preds_dir);

}  // namespace lightyolo
