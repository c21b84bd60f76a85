#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lightyolo/graph.hpp"

namespace lightyolo {

struct CostRow {
  int index = 0;
  std::string kind;
  int64_t c_in = 0;
  int64_t c_out = 0;
  int64_t out_h = 0;  // Detect: the first (finest) scale
  int64_t out_w = 0;
  int64_t params = 0;
  int64_t macs = 0;

  bool operator==(const CostRow&) const = default;
};

struct CostReport {
  int64_t input_h = 0;
  int64_t input_w = 0;
  std::vector<CostRow> rows;
  int64_t params = 0;
  int64_t macs = 0;

  // 2 * MACs / 1e9.
  double gflops() const { return 2.0 * static_cast<double>(macs) / 1e9; }
  bool operator==(const CostReport&) const = default;
};

CostReport count_model(const ModelGraph& graph, int64_t input_h, int64_t input_w);

struct CostDiffRow {
  int index = 0;
  std::string kind_a;
  std::string kind_b;
  int64_t params_a = 0;
  int64_t params_b = 0;
  int64_t macs_a = 0;
  int64_t macs_b = 0;
  bool matched = true;  // false when only one side has this index

  int64_t params_delta() const { return params_b - params_a; }
  int64_t macs_delta() const { return macs_b - macs_a; }
};

struct CostDiff {
  std::vector<CostDiffRow> rows;
  int64_t params_a = 0;
  int64_t params_b = 0;
  int64_t macs_a = 0;
  int64_t macs_b = 0;
  bool shapes_match = true;  // same node count and input size

  // Relative change b vs a in percent; negative means b is smaller.
  double params_change_pct() const;
  double gflops_change_pct() const;
};

CostDiff diff_reports(const CostReport& a, const CostReport& b);

std::string render_report(const CostReport& report);
std::string render_diff(const CostDiff& diff);

// {"input": [h, w], "rows": [{"i", "kind", ...}], "totals": {"params", "macs", "gflops"}}
nlohmann::json report_to_json(const CostReport& report);
CostReport report_from_json(const nlohmann::json& j);
nlohmann::json diff_to_json(const CostDiff& diff);

}  // namespace lightyolo
