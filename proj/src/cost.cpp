#include "lightyolo/cost.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lightyolo/error.hpp"

namespace lightyolo {

CostReport count_model(const ModelGraph& graph, int64_t input_h, int64_t input_w) {
  const GraphShapes shapes = infer_shapes(graph, Shape{1, kImageChannels, input_h, input_w});
  CostReport report;
  report.input_h = input_h;
  report.input_w = input_w;
  for (const LayerNode& node : graph.nodes) {
    CostRow row;
    row.index = node.index;
    row.kind = std::string(kind_name(node.kind));
    row.c_in = node.blocks.front().total_c_in();
    row.c_out = node.c_out;
    const Shape& out = shapes.outputs[static_cast<size_t>(node.index)].front();
    row.out_h = out.h;
    row.out_w = out.w;
    for (const BlockSpec& spec : node.blocks) row.params += block_params(spec);
    row.macs = shapes.macs[static_cast<size_t>(node.index)];
    report.params += row.params;
    report.macs += row.macs;
    report.rows.push_back(std::move(row));
  }
  return report;
}

double CostDiff::params_change_pct() const {
  return params_a == 0 ? 0.0 : 100.0 * static_cast<double>(params_b - params_a) / static_cast<double>(params_a);
}

double CostDiff::gflops_change_pct() const {
  return macs_a == 0 ? 0.0 : 100.0 * static_cast<double>(macs_b - macs_a) / static_cast<double>(macs_a);
}

CostDiff diff_reports(const CostReport& a, const CostReport& b) {
  CostDiff diff;
  diff.params_a = a.params;
  diff.params_b = b.params;
  diff.macs_a = a.macs;
  diff.macs_b = b.macs;
  diff.shapes_match = a.rows.size() == b.rows.size() && a.input_h == b.input_h && a.input_w == b.input_w;
  const size_t n = std::max(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < n; ++i) {
    CostDiffRow row;
    row.index = static_cast<int>(i);
    if (i < a.rows.size()) {
      row.kind_a = a.rows[i].kind;
      row.params_a = a.rows[i].params;
      row.macs_a = a.rows[i].macs;
    }
    if (i < b.rows.size()) {
      row.kind_b = b.rows[i].kind;
      row.params_b = b.rows[i].params;
      row.macs_b = b.rows[i].macs;
    }
    row.matched = i < a.rows.size() && i < b.rows.size();
    diff.rows.push_back(std::move(row));
  }
  return diff;
}

std::string render_report(const CostReport& report) {
  std::string out = fmt::format("input {}x{}\n", report.input_h, report.input_w);
  out += fmt::format("{:>4} {:<16} {:>7} {:>7} {:>11} {:>12} {:>16}\n", "i", "kind", "c_in", "c_out", "out_hw",
                     "params", "macs");
  for (const CostRow& r : report.rows) {
    out += fmt::format("{:>4} {:<16} {:>7} {:>7} {:>11} {:>12} {:>16}\n", r.index, r.kind, r.c_in, r.c_out,
                       fmt::format("{}x{}", r.out_h, r.out_w), r.params, r.macs);
  }
  out += fmt::format("total params {} ({:.3f}M), macs {}, GFLOPs {:.2f}\n", report.params,
                     static_cast<double>(report.params) / 1e6, report.macs, report.gflops());
  return out;
}

std::string render_diff(const CostDiff& diff) {
  std::string out = fmt::format("{:>4} {:<16} {:<16} {:>12} {:>12} {:>12} {:>16}\n", "i", "kind_a", "kind_b",
                                "params_a", "params_b", "d_params", "d_macs");
  for (const CostDiffRow& r : diff.rows) {
    out += fmt::format("{:>4} {:<16} {:<16} {:>12} {:>12} {:>12} {:>16}{}\n", r.index, r.kind_a, r.kind_b, r.params_a,
                       r.params_b, r.params_delta(), r.macs_delta(), r.matched ? "" : "  (unmatched)");
  }
  out += fmt::format("params {} -> {} ({:+.2f}%)\n", diff.params_a, diff.params_b, diff.params_change_pct());
  out += fmt::format("GFLOPs {:.2f} -> {:.2f} ({:+.2f}%)\n", 2.0 * static_cast<double>(diff.macs_a) / 1e9,
                     2.0 * static_cast<double>(diff.macs_b) / 1e9, diff.gflops_change_pct());
  if (!diff.shapes_match) out += "warning: reports differ in node count or input size\n";
  return out;
}

nlohmann::json report_to_json(const CostReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const CostRow& r : report.rows) {
    rows.push_back({{"i", r.index},
                    {"kind", r.kind},
                    {"c_in", r.c_in},
                    {"c_out", r.c_out},
                    {"out_h", r.out_h},
                    {"out_w", r.out_w},
                    {"params", r.params},
                    {"macs", r.macs}});
  }
  return {{"input", {report.input_h, report.input_w}},
          {"rows", rows},
          {"totals", {{"params", report.params}, {"macs", report.macs}, {"gflops", report.gflops()}}}};
}

CostReport report_from_json(const nlohmann::json& j) {
  try {
    CostReport report;
    report.input_h = j.at("input").at(0).get<int64_t>();
    report.input_w = j.at("input").at(1).get<int64_t>();
    for (const auto& r : j.at("rows")) {
      CostRow row;
      row.index = r.at("i").get<int>();
      row.kind = r.at("kind").get<std::string>();
      row.c_in = r.value("c_in", int64_t{0});
      row.c_out = r.value("c_out", int64_t{0});
      row.out_h = r.value("out_h", int64_t{0});
      row.out_w = r.value("out_w", int64_t{0});
      row.params = r.at("params").get<int64_t>();
      row.macs = r.at("macs").get<int64_t>();
      report.rows.push_back(std::move(row));
    }
    report.params = j.at("totals").at("params").get<int64_t>();
    report.macs = j.at("totals").at("macs").get<int64_t>();
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("bad cost report JSON: ") + e.what());
  }
}

nlohmann::json diff_to_json(const CostDiff& diff) {
  nlohmann::json rows = nlohmann::json::array();
  for (const CostDiffRow& r : diff.rows) {
    rows.push_back({{"i", r.index},
                    {"kind_a", r.kind_a},
                    {"kind_b", r.kind_b},
                    {"params_a", r.params_a},
                    {"params_b", r.params_b},
                    {"params_delta", r.params_delta()},
                    {"macs_a", r.macs_a},
                    {"macs_b", r.macs_b},
                    {"macs_delta", r.macs_delta()},
                    {"matched", r.matched}});
  }
  return {{"rows", rows},
          {"totals",
           {{"params_a", diff.params_a},
            {"params_b", diff.params_b},
            {"macs_a", diff.macs_a},
            {"macs_b", diff.macs_b},
            {"gflops_a", 2.0 * static_cast<double>(diff.macs_a) / 1e9},
            {"gflops_b", 2.0 * static_cast<double>(diff.macs_b) / 1e9},
            {"params_change_pct", diff.params_change_pct()},
            {"gflops_change_pct", diff.gflops_change_pct()}}},
          {"shapes_match", diff.shapes_match}};
}

}  // namespace lightyolo
