#include "lightyolo/toy_train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "lightyolo/error.hpp"

namespace lightyolo {

ToyTrainResult toy_train(std::span<const BBox> targets, std::span<const BBox> init, const ToyTrainConfig& config) {
  if (targets.size() != init.size()) {
    throw Error(ErrorKind::kInvalidArgument, "toy_train: " + std::to_string(targets.size()) + " targets but " +
                                                 std::to_string(init.size()) + " initial boxes");
  }
  constexpr double kMinSide = 1e-6;
  ToyTrainResult result;
  result.boxes.assign(init.begin(), init.end());
  result.state = config.state;
  const size_t n = targets.size();
  result.last_beta.assign(n, 0.0);
  result.last_gain.assign(n, 1.0);
  result.last_iou.assign(n, 0.0);
  if (n == 0) return result;

  for (int step = 1; step <= config.steps; ++step) {
    TrajectoryRow row;
    row.step = step;
    for (size_t i = 0; i < n; ++i) {
      BBox& box = result.boxes[i];
      const FocusedLoss f = evaluate_loss(config.kind, box, targets[i], result.state);
      result.state = f.next;
      const double v = iou(box, targets[i]);
      row.mean_iou += v;
      row.mean_loss += f.loss.value;
      row.mean_r += f.gain;
      result.last_beta[i] = f.beta;
      result.last_gain[i] = f.gain;
      result.last_iou[i] = v;
      box.x1 -= config.lr * f.loss.grad[0];
      box.y1 -= config.lr * f.loss.grad[1];
      box.x2 -= config.lr * f.loss.grad[2];
      box.y2 -= config.lr * f.loss.grad[3];
      box.x2 = std::max(box.x2, box.x1 + kMinSide);
      box.y2 = std::max(box.y2, box.y1 + kMinSide);
    }
    row.mean_iou /= static_cast<double>(n);
    row.mean_loss /= static_cast<double>(n);
    row.mean_r /= static_cast<double>(n);
    result.rows.push_back(row);
  }
  return result;
}

BoxMixture make_easy_outlier_mixture(int count, double outlier_fraction, uint64_t seed) {
  Rng rng(seed);
  BoxMixture mix;
  const int outliers = static_cast<int>(std::lround(count * outlier_fraction));
  for (int i = 0; i < count; ++i) {
    const double w = rng.uniform(0.5, 1.0);
    const double h = rng.uniform(0.5, 1.0);
    const double cx = rng.uniform(0.0, 4.0);
    const double cy = rng.uniform(0.0, 4.0);
    const bool is_outlier = i < outliers;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double dist = 0.0;
    double pw = 0.0;
    double ph = 0.0;
    if (is_outlier) {
      dist = rng.uniform(1.5, 2.5) * std::max(w, h);
      pw = w * rng.uniform(0.5, 2.0);
      ph = h * rng.uniform(0.5, 2.0);
    } else {
      dist = rng.uniform(0.0, 0.3) * std::max(w, h);
      pw = w * std::exp(rng.uniform(-0.2, 0.2));
      ph = h * std::exp(rng.uniform(-0.2, 0.2));
    }
    mix.targets.push_back(BBox::from_center(cx, cy, w, h));
    mix.init.push_back(BBox::from_center(cx + dist * std::cos(angle), cy + dist * std::sin(angle), pw, ph));
    mix.outlier.push_back(is_outlier);
  }
  return mix;
}

GainSplit split_gains(const ToyTrainResult& result, const std::vector<bool>& outlier) {
  GainSplit split;
  std::vector<double> easy_losses;
  for (size_t i = 0; i < outlier.size() && i < result.last_iou.size(); ++i) {
    if (!outlier[i]) easy_losses.push_back(1.0 - result.last_iou[i]);
  }
  double median = 0.0;
  if (!easy_losses.empty()) {
    std::vector<double> sorted = easy_losses;
    std::sort(sorted.begin(), sorted.end());
    const size_t m = sorted.size();
    median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  for (size_t i = 0; i < outlier.size() && i < result.last_gain.size(); ++i) {
    if (outlier[i]) {
      split.outlier_mean_gain += result.last_gain[i];
      ++split.outliers;
    } else if (1.0 - result.last_iou[i] >= median) {
      split.moderate_mean_gain += result.last_gain[i];
      ++split.moderates;
    }
  }
  if (split.outliers) split.outlier_mean_gain /= split.outliers;
  if (split.moderates) split.moderate_mean_gain /= split.moderates;
  return split;
}

void write_trajectory_csv(std::ostream& out, const ToyTrainResult& result) {
  out << "step,mean_iou,mean_loss,mean_r\n";
  for (const TrajectoryRow& r : result.rows) {
    out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", r.step, r.mean_iou, r.mean_loss, r.mean_r);
  }
}

}  // namespace lightyolo
