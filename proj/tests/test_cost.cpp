#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "lightyolo/builtin_models.hpp"
#include "lightyolo/cost.hpp"
#include "lightyolo/error.hpp"

namespace ly = lightyolo;
using ly::BlockKind;

namespace {

ly::ModelGraph graph_of(const char* model) { return ly::build_graph(ly::load_model_config(model)); }

}  // namespace

TEST(Cost, RowsSumToTotals) {
  const auto r = ly::count_model(graph_of("builtin:baseline"), 640, 640);
  ASSERT_EQ(r.rows.size(), 25u);
  int64_t p = 0;
  int64_t m = 0;
  for (const auto& row : r.rows) {
    p += row.params;
    m += row.macs;
  }
  EXPECT_EQ(p, r.params);
  EXPECT_EQ(m, r.macs);
  EXPECT_DOUBLE_EQ(r.gflops(), 2.0 * static_cast<double>(r.macs) / 1e9);
}

TEST(Cost, HandCountedLayers) {
  const auto r = ly::count_model(graph_of("builtin:baseline"), 640, 640);
  // Stem: 6x6 stride 2, 3 -> 32 at 320x320.
  EXPECT_EQ(r.rows[0].macs, int64_t{3} * 32 * 36 * 320 * 320);
  EXPECT_EQ(r.rows[0].params, 3 * 32 * 36 + 64);
  // SPPF: 512 -> 256 1x1, then 1024 -> 512 1x1, both at 20x20.
  EXPECT_EQ(r.rows[9].macs, int64_t{512} * 256 * 400 + int64_t{1024} * 512 * 400);
  EXPECT_EQ(r.rows[9].params, 512 * 256 + 512 + 1024 * 512 + 1024);
  // Detect: 1x1 with bias to 27 channels on 128/256/512 inputs.
  EXPECT_EQ(r.rows[24].params, (128 + 256 + 512) * 27 + 3 * 27);
  EXPECT_EQ(r.rows[24].macs, int64_t{128} * 27 * 6400 + int64_t{256} * 27 * 1600 + int64_t{512} * 27 * 400);
  EXPECT_EQ(r.rows[11].params, 0);
  EXPECT_EQ(r.rows[11].macs, 0);
}

TEST(Cost, ParamsEqualStoredWeights) {
  for (const char* model : {"builtin:baseline", "builtin:fostc3net"}) {
    const auto g = graph_of(model);
    EXPECT_EQ(ly::count_model(g, 640, 640).params, ly::init_graph_weights(g, 1).stored_floats()) << model;
  }
}

TEST(Cost, MacsScaleWithPixelCount) {
  for (const char* model : {"builtin:baseline", "builtin:fostc3net"}) {
    const auto g = graph_of(model);
    const auto a = ly::count_model(g, 640, 640);
    const auto b = ly::count_model(g, 1280, 1280);
    EXPECT_EQ(b.macs, 4 * a.macs) << model;
    EXPECT_EQ(b.params, a.params) << model;
    const auto c = ly::count_model(g, 320, 640);
    EXPECT_EQ(2 * c.macs, a.macs) << model;
  }
}

TEST(Cost, DiffWithSelfIsZero) {
  const auto r = ly::count_model(graph_of("builtin:fostc3net"), 640, 640);
  const auto d = ly::diff_reports(r, r);
  EXPECT_EQ(d.params_change_pct(), 0.0);
  EXPECT_EQ(d.gflops_change_pct(), 0.0);
  EXPECT_TRUE(d.shapes_match);
  for (const auto& row : d.rows) {
    EXPECT_EQ(row.params_delta(), 0);
    EXPECT_EQ(row.macs_delta(), 0);
  }
}

TEST(Cost, DiffLocalizesChangedLayers) {
  const auto a = ly::count_model(graph_of("builtin:baseline"), 640, 640);
  const auto b = ly::count_model(graph_of("builtin:fostc3net"), 640, 640);
  const auto d = ly::diff_reports(a, b);
  for (const auto& row : d.rows) {
    const bool swapped = row.kind_a != row.kind_b;
    EXPECT_EQ(swapped, row.params_delta() != 0) << row.index;
    if (swapped) EXPECT_LT(row.params_delta(), 0) << row.index;
  }
  EXPECT_LT(d.params_change_pct(), 0.0);
  EXPECT_LT(d.gflops_change_pct(), 0.0);
}

TEST(Cost, GhostSubstitutionNeverAddsParams) {
  const auto base_cfg = ly::load_model_config("builtin:baseline");
  const int64_t base = ly::count_model(ly::build_graph(base_cfg), 640, 640).params;
  int positions = 0;
  for (size_t i = 0; i < base_cfg.head.size(); ++i) {
    if (base_cfg.head[i].module != "C3") continue;
    ++positions;
    auto cfg = base_cfg;
    cfg.head[i].module = "C3Ghost";
    const auto r = ly::count_model(ly::build_graph(cfg), 640, 640);
    EXPECT_LE(r.params, base) << "head entry " << i;
    EXPECT_LE(r.macs, ly::count_model(ly::build_graph(base_cfg), 640, 640).macs) << "head entry " << i;
  }
  EXPECT_EQ(positions, 4);
}

TEST(Cost, JsonRoundTrip) {
  const auto r = ly::count_model(graph_of("builtin:baseline"), 640, 640);
  const nlohmann::json j = ly::report_to_json(r);
  EXPECT_EQ(j.at("totals").at("params").get<int64_t>(), r.params);
  EXPECT_EQ(j.at("input"), nlohmann::json({640, 640}));
  EXPECT_EQ(j.at("rows").size(), 25u);
  EXPECT_EQ(ly::report_from_json(nlohmann::json::parse(j.dump())), r);
  EXPECT_THROW(ly::report_from_json(nlohmann::json{{"rows", 3}}), ly::Error);
}

TEST(Cost, DiffJsonHasTotals) {
  const auto a = ly::count_model(graph_of("builtin:baseline"), 640, 640);
  const auto b = ly::count_model(graph_of("builtin:fostc3net"), 640, 640);
  const auto j = ly::diff_to_json(ly::diff_reports(a, b));
  EXPECT_EQ(j.at("totals").at("params_a").get<int64_t>(), a.params);
  EXPECT_EQ(j.at("totals").at("params_b").get<int64_t>(), b.params);
  EXPECT_EQ(j.at("rows").size(), 25u);
}

TEST(Cost, RenderedReportNamesEveryLayer) {
  const auto r = ly::count_model(graph_of("builtin:fostc3net"), 640, 640);
  const std::string text = ly::render_report(r);
  EXPECT_NE(text.find("C3Faster"), std::string::npos);
  EXPECT_NE(text.find("C3Ghost"), std::string::npos);
  EXPECT_NE(text.find("total params " + std::to_string(r.params)), std::string::npos);
}
