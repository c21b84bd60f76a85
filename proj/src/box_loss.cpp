#include "lightyolo/box_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lightyolo {
namespace {

using Vec4 = std::array<double, 4>;

Vec4 operator*(double s, const Vec4& v) { return {s * v[0], s * v[1], s * v[2], s * v[3]}; }
Vec4 operator+(const Vec4& a, const Vec4& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]}; }
Vec4 operator-(const Vec4& a, const Vec4& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]}; }

// 1 when the predicted edge `a` is the active one of a min/max against `b`
// (a > b), 0 when it is not, and the midpoint subgradient 0.5 on a tie.
double edge_weight(double a, double b) { return a > b ? 1.0 : (a == b ? 0.5 : 0.0); }

struct IouTerms {
  double iou = 0.0;
  Vec4 d_iou{};
};

IouTerms iou_terms(const BBox& p, const BBox& g) {
  const double iw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
  const double ih = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
  double inter = 0.0;
  Vec4 d_inter{};
  if (iw > 0.0 && ih > 0.0) {
    inter = iw * ih;
    const double dw_x1 = -edge_weight(p.x1, g.x1);
    const double dw_x2 = edge_weight(g.x2, p.x2);
    const double dh_y1 = -edge_weight(p.y1, g.y1);
    const double dh_y2 = edge_weight(g.y2, p.y2);
    d_inter = {dw_x1 * ih, dh_y1 * iw, dw_x2 * ih, dh_y2 * iw};
  }
  const double wp = p.width();
  const double hp = p.height();
  const double uni = p.area() + g.area() - inter + kLossEps;
  const Vec4 d_area{-hp, -wp, hp, wp};
  const Vec4 d_uni = d_area - d_inter;
  IouTerms t;
  t.iou = inter / uni;
  t.d_iou = (1.0 / (uni * uni)) * (uni * d_inter - inter * d_uni);
  return t;
}

// Squared center distance and its gradient w.r.t. the prediction.
double center_dist2(const BBox& p, const BBox& g, Vec4* grad) {
  const double dx = p.cx() - g.cx();
  const double dy = p.cy() - g.cy();
  if (grad) *grad = {dx, dy, dx, dy};
  return dx * dx + dy * dy;
}

// Squared diagonal of the enclosing box (without epsilon) and its gradient.
double enclosing_diag2(const BBox& p, const BBox& g, Vec4* grad) {
  const double wc = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
  const double hc = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
  if (grad) {
    const double dw_x1 = -edge_weight(g.x1, p.x1);
    const double dw_x2 = edge_weight(p.x2, g.x2);
    const double dh_y1 = -edge_weight(g.y1, p.y1);
    const double dh_y2 = edge_weight(p.y2, g.y2);
    *grad = {2.0 * wc * dw_x1, 2.0 * hc * dh_y1, 2.0 * wc * dw_x2, 2.0 * hc * dh_y2};
  }
  return wc * wc + hc * hc;
}

constexpr double kAspectScale = 4.0 / (std::numbers::pi * std::numbers::pi);

double aspect_v(const BBox& p, const BBox& g, Vec4* grad) {
  const double wp = p.width();
  const double hp = p.height() + kLossEps;
  const double diff = std::atan(g.width() / (g.height() + kLossEps)) - std::atan(wp / hp);
  if (grad) {
    const double denom = wp * wp + hp * hp;
    const double dv_dw = -2.0 * kAspectScale * diff * hp / denom;
    const double dv_dh = 2.0 * kAspectScale * diff * wp / denom;
    *grad = {-dv_dw, -dv_dh, dv_dw, dv_dh};
  }
  return kAspectScale * diff * diff;
}

LossValueGrad wiou_v1_impl(const BBox& pred, const BBox& gt, double* iou_out) {
  const IouTerms t = iou_terms(pred, gt);
  Vec4 d_rho{};
  const double rho2 = center_dist2(pred, gt, &d_rho);
  const double denom = enclosing_diag2(pred, gt, nullptr) + kLossEps;
  const double r = std::exp(rho2 / denom);
  LossValueGrad out;
  out.value = r * (1.0 - t.iou);
  out.grad = (-r) * t.d_iou + ((1.0 - t.iou) * r / denom) * d_rho;
  if (iou_out) *iou_out = t.iou;
  return out;
}

}  // namespace

double iou(const BBox& a, const BBox& b) { return iou_terms(a, b).iou; }

BBox enclosing(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kIou:
      return "iou";
    case LossKind::kCiou:
      return "ciou";
    case LossKind::kWiouV1:
      return "wiou_v1";
    case LossKind::kWiouV2:
      return "wiou_v2";
    case LossKind::kWiouV3:
      return "wiou_v3";
  }
  return "?";
}

std::optional<LossKind> loss_from_name(std::string_view name) {
  for (LossKind k : {LossKind::kIou, LossKind::kCiou, LossKind::kWiouV1, LossKind::kWiouV2, LossKind::kWiouV3}) {
    if (loss_name(k) == name) return k;
  }
  return std::nullopt;
}

LossValueGrad iou_loss(const BBox& pred, const BBox& gt) {
  const IouTerms t = iou_terms(pred, gt);
  return {1.0 - t.iou, (-1.0) * t.d_iou};
}

LossValueGrad ciou_loss(const BBox& pred, const BBox& gt) {
  Vec4 d_c2{};
  const double c2_raw = enclosing_diag2(pred, gt, &d_c2);
  // Both boxes collapsed onto the same point.
  if (c2_raw <= kLossEps) return {};
  const double c2 = c2_raw + kLossEps;
  const IouTerms t = iou_terms(pred, gt);
  Vec4 d_rho{};
  const double rho2 = center_dist2(pred, gt, &d_rho);
  Vec4 d_v{};
  const double v = aspect_v(pred, gt, &d_v);
  const double alpha_c = v / ((1.0 - t.iou) + v + kLossEps);

  LossValueGrad out;
  out.value = 1.0 - t.iou + rho2 / c2 + alpha_c * v;
  const Vec4 d_dist = (1.0 / (c2 * c2)) * (c2 * d_rho - rho2 * d_c2);
  out.grad = (-1.0) * t.d_iou + d_dist + alpha_c * d_v;
  return out;
}

double ciou_value_frozen(const BBox& pred, const BBox& gt, double alpha_c) {
  const double c2_raw = enclosing_diag2(pred, gt, nullptr);
  if (c2_raw <= kLossEps) return 0.0;
  return 1.0 - iou(pred, gt) + center_dist2(pred, gt, nullptr) / (c2_raw + kLossEps) +
         alpha_c * aspect_v(pred, gt, nullptr);
}

LossValueGrad wiou_v1_loss(const BBox& pred, const BBox& gt) { return wiou_v1_impl(pred, gt, nullptr); }

double wiou_v1_value_frozen(const BBox& pred, const BBox& gt, double denominator) {
  return std::exp(center_dist2(pred, gt, nullptr) / denominator) * (1.0 - iou(pred, gt));
}

double focusing_gain(double beta, double alpha, double delta) { return beta / (delta * std::pow(alpha, beta - delta)); }

FocusedLoss wiou_v3_loss(const BBox& pred, const BBox& gt, const WiouState& state) {
  double iou_value = 0.0;
  const LossValueGrad v1 = wiou_v1_impl(pred, gt, &iou_value);
  FocusedLoss out;
  out.beta = (1.0 - iou_value) / (state.mean + kLossEps);
  out.gain = focusing_gain(out.beta, state.alpha, state.delta);
  out.loss.value = out.gain * v1.value;
  out.loss.grad = out.gain * v1.grad;
  out.next = state.updated(1.0 - iou_value);
  return out;
}

FocusedLoss wiou_v2_loss(const BBox& pred, const BBox& gt, const WiouState& state) {
  double iou_value = 0.0;
  const LossValueGrad v1 = wiou_v1_impl(pred, gt, &iou_value);
  FocusedLoss out;
  out.beta = (1.0 - iou_value) / (state.mean + kLossEps);
  out.gain = std::pow(out.beta, state.gamma);
  out.loss.value = out.gain * v1.value;
  out.loss.grad = out.gain * v1.grad;
  out.next = state.updated(1.0 - iou_value);
  return out;
}

FocusedLoss evaluate_loss(LossKind kind, const BBox& pred, const BBox& gt, const WiouState& state) {
  switch (kind) {
    case LossKind::kWiouV2:
      return wiou_v2_loss(pred, gt, state);
    case LossKind::kWiouV3:
      return wiou_v3_loss(pred, gt, state);
    default:
      break;
  }
  FocusedLoss out;
  out.next = state;
  switch (kind) {
    case LossKind::kIou:
      out.loss = iou_loss(pred, gt);
      break;
    case LossKind::kCiou:
      out.loss = ciou_loss(pred, gt);
      break;
    default:
      out.loss = wiou_v1_loss(pred, gt);
      break;
  }
  return out;
}

std::pair<BBox, BBox> sample_box_pair(Rng& rng, double margin) {
  while (true) {
    const double gw = rng.uniform(0.5, 4.0);
    const double gh = rng.uniform(0.5, 4.0);
    const BBox gt = BBox::from_center(rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), gw, gh);
    const double pw = gw * std::exp(rng.uniform(-0.7, 0.7));
    const double ph = gh * std::exp(rng.uniform(-0.7, 0.7));
    const BBox pred = BBox::from_center(gt.cx() + rng.uniform(-0.6, 0.6) * gw, gt.cy() + rng.uniform(-0.6, 0.6) * gh,
                                        pw, ph);
    if (iou(pred, gt) <= 0.01) continue;
    const double gaps[] = {std::abs(pred.x1 - gt.x1), std::abs(pred.x2 - gt.x2), std::abs(pred.y1 - gt.y1),
                           std::abs(pred.y2 - gt.y2), std::abs(pred.x1 - gt.x2), std::abs(pred.x2 - gt.x1),
                           std::abs(pred.y1 - gt.y2), std::abs(pred.y2 - gt.y1)};
    if (*std::min_element(std::begin(gaps), std::end(gaps)) < margin) continue;
    return {pred, gt};
  }
}

GradCheckReport grad_check(LossKind kind, int trials, double h, uint64_t seed, const WiouState& initial) {
  GradCheckReport report;
  if (trials <= 0) return report;
  Rng rng(seed);
  WiouState state = initial;
  double sum = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto [pred, gt] = sample_box_pair(rng);
    const FocusedLoss analytic = evaluate_loss(kind, pred, gt, state);

    // Freeze the detached quantities at the unperturbed point.
    double alpha_c = 0.0;
    if (kind == LossKind::kCiou) {
      const double v = aspect_v(pred, gt, nullptr);
      alpha_c = v / ((1.0 - iou(pred, gt)) + v + kLossEps);
    }
    const double denom = enclosing_diag2(pred, gt, nullptr) + kLossEps;
    auto value_at = [&](const BBox& p) {
      switch (kind) {
        case LossKind::kIou:
          return 1.0 - iou(p, gt);
        case LossKind::kCiou:
          return ciou_value_frozen(p, gt, alpha_c);
        default:
          return analytic.gain * wiou_v1_value_frozen(p, gt, denom);
      }
    };

    Vec4 fd{};
    for (int i = 0; i < 4; ++i) {
      BBox plus = pred;
      BBox minus = pred;
      double* cp = i == 0 ? &plus.x1 : i == 1 ? &plus.y1 : i == 2 ? &plus.x2 : &plus.y2;
      double* cm = i == 0 ? &minus.x1 : i == 1 ? &minus.y1 : i == 2 ? &minus.x2 : &minus.y2;
      *cp += h;
      *cm -= h;
      fd[static_cast<size_t>(i)] = (value_at(plus) - value_at(minus)) / (2.0 * h);
    }
    double diff = 0.0;
    double scale = 0.0;
    for (size_t i = 0; i < 4; ++i) {
      diff = std::max(diff, std::abs(analytic.loss.grad[i] - fd[i]));
      scale = std::max({scale, std::abs(analytic.loss.grad[i]), std::abs(fd[i])});
    }
    const double rel = scale > 0.0 ? diff / scale : diff;
    sum += rel;
    if (report.worst_trial < 0 || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_trial = trial;
    }
    state = analytic.next;
  }
  report.trials = trials;
  report.mean_rel_err = sum / trials;
  return report;
}

}  // namespace lightyolo
