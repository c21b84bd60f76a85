#include "lightyolo/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Detection> decode(std::span<const Tensor> raw_maps, const AnchorTable& anchors,
                              std::span<const int> strides, int nc, double conf_thresh) {
  if (nc < 1) throw Error(ErrorKind::kInvalidArgument, "decode: nc must be >= 1");
  if (raw_maps.size() != anchors.size() || strides.size() != anchors.size()) {
    throw Error(ErrorKind::kShape, "decode: expected " + std::to_string(anchors.size()) + " maps and strides, got " +
                                       std::to_string(raw_maps.size()) + " and " + std::to_string(strides.size()));
  }
  const int64_t per_anchor = nc + 5;
  std::vector<Detection> out;
  for (size_t s = 0; s < raw_maps.size(); ++s) {
    const Tensor& map = raw_maps[s];
    if (map.n() != 1 || map.c() != kAnchorsPerScale * per_anchor) {
      throw Error(ErrorKind::kShape, "decode: scale " + std::to_string(s) + " map " + map.shape().str() +
                                         " does not have shape (1, " +
                                         std::to_string(kAnchorsPerScale * per_anchor) + ", h, w)");
    }
    const double stride = strides[s];
    for (int a = 0; a < kAnchorsPerScale; ++a) {
      const double anchor_w = anchors[s][static_cast<size_t>(2 * a)];
      const double anchor_h = anchors[s][static_cast<size_t>(2 * a + 1)];
      const int64_t base = a * per_anchor;
      for (int64_t gy = 0; gy < map.h(); ++gy) {
        for (int64_t gx = 0; gx < map.w(); ++gx) {
          const double obj = sigmoid(map.at(0, base + 4, gy, gx));
          int best = 0;
          double best_logit = map.at(0, base + 5, gy, gx);
          for (int c = 1; c < nc; ++c) {
            const double logit = map.at(0, base + 5 + c, gy, gx);
            if (logit > best_logit) {
              best_logit = logit;
              best = c;
            }
          }
          const double score = obj * sigmoid(best_logit);
          if (!(score > conf_thresh)) continue;
          const double cx = (2.0 * sigmoid(map.at(0, base + 0, gy, gx)) - 0.5 + static_cast<double>(gx)) * stride;
          const double cy = (2.0 * sigmoid(map.at(0, base + 1, gy, gx)) - 0.5 + static_cast<double>(gy)) * stride;
          const double tw = 2.0 * sigmoid(map.at(0, base + 2, gy, gx));
          const double th = 2.0 * sigmoid(map.at(0, base + 3, gy, gx));
          out.push_back(Detection{BBox::from_center(cx, cy, tw * tw * anchor_w, th * th * anchor_h), best, score});
        }
      }
    }
  }
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh) {
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<Detection> kept;
  for (size_t idx : order) {
    const Detection& d = dets[idx];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace lightyolo
