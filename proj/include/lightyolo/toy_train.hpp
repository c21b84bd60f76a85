#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lightyolo/box_loss.hpp"

namespace lightyolo {

struct ToyTrainConfig {
  LossKind kind = LossKind::kWiouV3;
  int steps = 1000;
  double lr = 0.01;
  WiouState state;  // initial focusing state; only the WIoU v2/v3 kinds update it
};

struct TrajectoryRow {
  int step = 0;  // 1-based iteration; values are measured before that iteration's update
  double mean_iou = 0.0;
  double mean_loss = 0.0;
  double mean_r = 0.0;
};

struct ToyTrainResult {
  std::vector<TrajectoryRow> rows;
  std::vector<BBox> boxes;  // after the final update
  // Per-sample outlier degree and gain from the last iteration.
  std::vector<double> last_beta;
  std::vector<double> last_gain;
  std::vector<double> last_iou;
  WiouState state;
};

// Plain gradient descent on each box's (x1, y1, x2, y2). Samples are visited
// in order every iteration and share one focusing state.
ToyTrainResult toy_train(std::span<const BBox> targets, std::span<const BBox> init, const ToyTrainConfig& config);

struct BoxMixture {
  std::vector<BBox> targets;
  std::vector<BBox> init;
  std::vector<bool> outlier;
};

// Unit-scale targets (sides in [0.5, 1]) scattered over [0, 4]^2. Easy
// samples start within 0.3 box sizes of their target with +-20% size jitter;
// outliers start 1.5-2.5 box sizes away with sides rescaled by 0.5-2x, so they
// do not overlap the target. The first round(count * outlier_fraction)
// samples are outliers.
BoxMixture make_easy_outlier_mixture(int count, double outlier_fraction, uint64_t seed);

struct GainSplit {
  double outlier_mean_gain = 0.0;
  double moderate_mean_gain = 0.0;
  int outliers = 0;
  int moderates = 0;
};

// Moderate samples are the non-outliers whose last IoU loss is at or above
// the median IoU loss of the non-outliers.
GainSplit split_gains(const ToyTrainResult& result, const std::vector<bool>& outlier);

// CSV with header "step,mean_iou,mean_loss,mean_r".
void write_trajectory_csv(std::ostream& out, const ToyTrainResult& result);

}  // namespace lightyolo
