#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lightyolo/detection.hpp"

namespace lightyolo {

struct GroundTruth {
  BBox box;
  int class_id = 0;

  bool operator==(const GroundTruth&) const = default;
};

// Keyed by image stem; iteration order (lexicographic) is the image order used
// for tie-breaking.
using PredsByImage = std::map<std::string, std::vector<Detection>>;
using GtsByImage = std::map<std::string, std::vector<GroundTruth>>;

// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct PrPoint {
  double confidence = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ClassAp {
  int class_id = 0;
  int64_t num_gt = 0;
  int64_t num_pred = 0;
  std::vector<double> ap;  // one per threshold; empty when num_gt == 0
};

struct Metrics {
  std::vector<double> thresholds;
  std::vector<ClassAp> classes;
  std::vector<double> map;  // mean over classes with GT, per threshold

  // At IoU 0.5 over every prediction; 0 when there is nothing to divide by.
  double precision = 0.0;
  double recall = 0.0;
  int64_t true_positives = 0;
  int64_t num_preds = 0;
  int64_t num_gts = 0;

  double map50 = 0.0;
  double map50_95 = 0.0;  // mean of `map` over all thresholds

  // Pooled over classes at IoU 0.5, one point per prediction in rank order.
  std::vector<PrPoint> pr_curve;
  PrPoint best_f1_point;
  double best_f1 = 0.0;
};

// Area under the precision envelope for rank-ordered TP flags.
double average_precision(std::span<const uint8_t> tp_in_rank_order, int64_t num_gt);

// Greedy matching per class and threshold. thresholds must contain 0.5.
Metrics evaluate(const PredsByImage& preds, const GtsByImage& gts, int nc,
                 const std::vector<double>& thresholds = coco_iou_thresholds());

}  // namespace lightyolo
