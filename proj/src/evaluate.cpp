#include "lightyolo/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace {

struct RankedPred {
  size_t image = 0;
  size_t index = 0;
  const Detection* det = nullptr;
};

void check_class(int class_id, int nc, const std::string& image, const char* what) {
  if (class_id < 0 || class_id >= nc) {
    throw Error(ErrorKind::kInvalidArgument, std::string(what) + " in '" + image + "' has class " +
                                                 std::to_string(class_id) + " outside [0, " + std::to_string(nc) +
                                                 ")");
  }
}

// TP flags, in rank order, for one threshold across all classes.
std::vector<uint8_t> match(const std::vector<RankedPred>& ranked, const std::vector<const std::vector<GroundTruth>*>& gts,
                           double thresh) {
  std::vector<std::vector<uint8_t>> taken(gts.size());
  for (size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i] ? gts[i]->size() : 0, 0);
  std::vector<uint8_t> tp(ranked.size(), 0);
  for (size_t k = 0; k < ranked.size(); ++k) {
    const RankedPred& p = ranked[k];
    const auto* image_gts = gts[p.image];
    if (!image_gts) continue;
    double best = -1.0;
    size_t best_j = 0;
    for (size_t j = 0; j < image_gts->size(); ++j) {
      const GroundTruth& g = (*image_gts)[j];
      if (taken[p.image][j] || g.class_id != p.det->class_id) continue;
      const double v = iou(p.det->box, g.box);
      if (v >= thresh && v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best >= 0.0) {
      taken[p.image][best_j] = 1;
      tp[k] = 1;
    }
  }
  return tp;
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

double average_precision(std::span<const uint8_t> tp, int64_t num_gt) {
  if (num_gt <= 0 || tp.empty()) return 0.0;
  std::vector<double> recall(tp.size() + 2);
  std::vector<double> precision(tp.size() + 2);
  int64_t hits = 0;
  for (size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    recall[i + 1] = static_cast<double>(hits) / static_cast<double>(num_gt);
    precision[i + 1] = static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  recall.front() = 0.0;
  precision.front() = 0.0;
  recall.back() = recall[tp.size()];
  precision.back() = 0.0;
  for (size_t i = precision.size() - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double area = 0.0;
  for (size_t i = 1; i < recall.size(); ++i) area += (recall[i] - recall[i - 1]) * precision[i];
  return area;
}

Metrics evaluate(const PredsByImage& preds, const GtsByImage& gts, int nc, const std::vector<double>& thresholds) {
  if (nc < 1) throw Error(ErrorKind::kInvalidArgument, "evaluate: nc must be >= 1");
  const auto half = std::find_if(thresholds.begin(), thresholds.end(),
                                 [](double t) { return std::abs(t - 0.5) < 1e-12; });
  if (half == thresholds.end()) throw Error(ErrorKind::kInvalidArgument, "evaluate: thresholds must include 0.5");
  const size_t half_index = static_cast<size_t>(half - thresholds.begin());

  // Union of stems gives the image order.
  std::vector<std::string> stems;
  for (const auto& [stem, _] : gts) stems.push_back(stem);
  for (const auto& [stem, _] : preds) {
    if (!gts.contains(stem)) stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());

  Metrics m;
  m.thresholds = thresholds;
  std::vector<const std::vector<GroundTruth>*> gt_of(stems.size(), nullptr);
  std::vector<RankedPred> ranked;
  std::vector<int64_t> gt_count(static_cast<size_t>(nc), 0);
  std::vector<int64_t> pred_count(static_cast<size_t>(nc), 0);
  for (size_t i = 0; i < stems.size(); ++i) {
    if (auto it = gts.find(stems[i]); it != gts.end()) {
      gt_of[i] = &it->second;
      for (const GroundTruth& g : it->second) {
        check_class(g.class_id, nc, stems[i], "ground truth");
        ++gt_count[static_cast<size_t>(g.class_id)];
      }
    }
    if (auto it = preds.find(stems[i]); it != preds.end()) {
      for (size_t k = 0; k < it->second.size(); ++k) {
        check_class(it->second[k].class_id, nc, stems[i], "prediction");
        ++pred_count[static_cast<size_t>(it->second[k].class_id)];
        ranked.push_back(RankedPred{i, k, &it->second[k]});
      }
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPred& a, const RankedPred& b) {
    return a.det->confidence > b.det->confidence;
  });

  m.num_preds = static_cast<int64_t>(ranked.size());
  m.num_gts = std::accumulate(gt_count.begin(), gt_count.end(), int64_t{0});
  for (int c = 0; c < nc; ++c) {
    m.classes.push_back(ClassAp{c, gt_count[static_cast<size_t>(c)], pred_count[static_cast<size_t>(c)], {}});
  }

  m.map.assign(thresholds.size(), 0.0);
  const int64_t classes_with_gt =
      std::count_if(gt_count.begin(), gt_count.end(), [](int64_t n) { return n > 0; });
  std::vector<uint8_t> tp_half;
  for (size_t t = 0; t < thresholds.size(); ++t) {
    const std::vector<uint8_t> tp = match(ranked, gt_of, thresholds[t]);
    if (t == half_index) tp_half = tp;
    double sum = 0.0;
    for (ClassAp& cls : m.classes) {
      if (cls.num_gt == 0) continue;
      std::vector<uint8_t> flags;
      for (size_t k = 0; k < ranked.size(); ++k) {
        if (ranked[k].det->class_id == cls.class_id) flags.push_back(tp[k]);
      }
      const double ap = average_precision(flags, cls.num_gt);
      cls.ap.push_back(ap);
      sum += ap;
    }
    m.map[t] = classes_with_gt > 0 ? sum / static_cast<double>(classes_with_gt) : 0.0;
  }
  m.map50 = m.map[half_index];
  m.map50_95 = std::accumulate(m.map.begin(), m.map.end(), 0.0) / static_cast<double>(m.map.size());

  int64_t hits = 0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    hits += tp_half[k];
    PrPoint pt;
    pt.confidence = ranked[k].det->confidence;
    pt.precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    pt.recall = m.num_gts > 0 ? static_cast<double>(hits) / static_cast<double>(m.num_gts) : 0.0;
    const double f1 = pt.precision + pt.recall > 0.0 ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall) : 0.0;
    if (f1 > m.best_f1) {
      m.best_f1 = f1;
      m.best_f1_point = pt;
    }
    m.pr_curve.push_back(pt);
  }
  m.true_positives = hits;
  m.precision = m.num_preds > 0 ? static_cast<double>(hits) / static_cast<double>(m.num_preds) : 0.0;
  m.recall = m.num_gts > 0 ? static_cast<double>(hits) / static_cast<double>(m.num_gts) : 0.0;
  return m;
}

}  // namespace lightyolo
