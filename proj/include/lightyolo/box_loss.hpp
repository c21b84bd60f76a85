#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "lightyolo/random.hpp"

namespace lightyolo {

// Added to every division in the loss family.
inline constexpr double kLossEps = 1e-9;

struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double area() const { return width() * height(); }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
  bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);
BBox enclosing(const BBox& a, const BBox& b);

// Loss value and its gradient w.r.t. the predicted (x1, y1, x2, y2).
struct LossValueGrad {
  double value = 0.0;
  std::array<double, 4> grad{};
};

enum class LossKind { kIou, kCiou, kWiouV1, kWiouV2, kWiouV3 };

std::string_view loss_name(LossKind kind);
std::optional<LossKind> loss_from_name(std::string_view name);

// Running state of the dynamic focusing mechanism. `mean` is the EMA of the
// IoU loss (1 - IoU) over all evaluated samples.
struct WiouState {
  double mean = 1.0;
  double momentum = 0.01;
  double alpha = 1.9;
  double delta = 3.0;
  double gamma = 0.5;  // monotonic (v2) exponent
  int64_t updates = 0;

  WiouState updated(double iou_loss) const {
    WiouState next = *this;
    next.mean = (1.0 - momentum) * mean + momentum * iou_loss;
    ++next.updates;
    return next;
  }
};

LossValueGrad iou_loss(const BBox& pred, const BBox& gt);

// 1 - IoU + rho^2 / c^2 + alpha_c * v with alpha_c held constant.
LossValueGrad ciou_loss(const BBox& pred, const BBox& gt);

// exp(rho^2 / (Wg^2 + Hg^2)) * (1 - IoU); the enclosing-box normalizer is
// held constant.
LossValueGrad wiou_v1_loss(const BBox& pred, const BBox& gt);

struct FocusedLoss {
  LossValueGrad loss;
  double beta = 0.0;  // outlier degree, read before the state update
  double gain = 1.0;  // multiplier applied to the v1 loss
  WiouState next;
};

// Non-monotonic gain r = beta / (delta * alpha^(beta - delta)).
double focusing_gain(double beta, double alpha, double delta);

FocusedLoss wiou_v2_loss(const BBox& pred, const BBox& gt, const WiouState& state);
FocusedLoss wiou_v3_loss(const BBox& pred, const BBox& gt, const WiouState& state);

// Evaluates any kind; stateless kinds pass the state through unchanged with
// gain 1.
FocusedLoss evaluate_loss(LossKind kind, const BBox& pred, const BBox& gt, const WiouState& state);

// Value-only forms with every detached quantity supplied by the caller.
// Used by the finite-difference check.
double ciou_value_frozen(const BBox& pred, const BBox& gt, double alpha_c);
double wiou_v1_value_frozen(const BBox& pred, const BBox& gt, double denominator);

// Draws a (pred, gt) pair with IoU > 0.01 whose edges are all at least
// `margin` apart, so a central difference never straddles a kink.
std::pair<BBox, BBox> sample_box_pair(Rng& rng, double margin = 1e-3);

inline constexpr double kDefaultFdStep = 1e-4;

struct GradCheckReport {
  int trials = 0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  int worst_trial = -1;
};

// Per trial: ||g - g_fd||_inf / max(||g||_inf, ||g_fd||_inf).
GradCheckReport grad_check(LossKind kind, int trials, double h, uint64_t seed, const WiouState& state = {});

}  // namespace lightyolo
