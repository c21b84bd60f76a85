#pragma once

#include <span>
#include <vector>

#include "lightyolo/blocks.hpp"
#include "lightyolo/box_loss.hpp"
#include "lightyolo/tensor.hpp"

namespace lightyolo {

struct Detection {
  BBox box;
  int class_id = 0;
  double confidence = 0.0;

  bool operator==(const Detection&) const = default;
};

inline constexpr double kDefaultConfThresh = 0.25;
inline constexpr double kDefaultNmsIou = 0.45;

// Raw head maps (1, na*(nc+5), h, w) per scale to absolute-pixel detections.
// Channels per anchor: tx, ty, tw, th, obj, cls[0..nc). Detections are
// emitted in (scale, anchor, row, column) order.
std::vector<Detection> decode(std::span<const Tensor> raw_maps, const AnchorTable& anchors,
                              std::span<const int> strides, int nc, double conf_thresh = kDefaultConfThresh);

// Class-aware greedy suppression. Candidates are visited by confidence
// (descending, stable on input order) and dropped when their IoU with a kept
// box of the same class exceeds iou_thresh.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh = kDefaultNmsIou);

}  // namespace lightyolo
