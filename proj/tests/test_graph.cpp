#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "lightyolo/builtin_models.hpp"
#include "lightyolo/error.hpp"
#include "lightyolo/graph.hpp"
#include "lightyolo/model_config.hpp"
#include "support/fuzz.hpp"

namespace ly = lightyolo;
using ly::BlockKind;
using ly::Shape;

namespace {

std::string builtin(const char* name) { return std::string(*ly::builtin_model_text(name)); }

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string drop_line_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) out += line + "\n";
  }
  return out;
}

ly::Error parse_error(const std::string& text) {
  try {
    ly::parse_model_config(text);
  } catch (const ly::Error& e) {
    return e;
  }
  ADD_FAILURE() << "parse unexpectedly succeeded";
  return ly::Error(ly::ErrorKind::kParse, "none");
}

}  // namespace

TEST(ModelConfig, BuiltinsParse) {
  for (const char* name : {"baseline", "fostc3net"}) {
    const auto cfg = ly::parse_model_config(builtin(name));
    EXPECT_EQ(cfg.backbone.size(), 10u) << name;
    EXPECT_EQ(cfg.head.size(), 15u) << name;
    EXPECT_EQ(cfg.nc, 4);
    EXPECT_EQ(cfg.depth_multiple, 0.33);
    EXPECT_EQ(cfg.width_multiple, 0.50);
    EXPECT_EQ(cfg.anchors[0][0], 10);
    EXPECT_EQ(cfg.anchors[2][5], 326);
  }
}

TEST(ModelConfig, BuiltinsMatchShippedFiles) {
  for (auto [name, file] : {std::pair{"baseline", "yolov5s.cfg"}, std::pair{"fostc3net", "fostc3net.cfg"}}) {
    std::ifstream in(std::string(LIGHTYOLO_MODELS_DIR) + "/" + file);
    ASSERT_TRUE(in) << file;
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), builtin(name));
    EXPECT_EQ(ly::load_model_config(std::string(LIGHTYOLO_MODELS_DIR) + "/" + file),
              ly::load_model_config(std::string("builtin:") + name));
  }
  EXPECT_THROW(ly::load_model_config("builtin:nope"), ly::Error);
}

TEST(ModelConfig, VariantIsKindSubstitution) {
  std::string text = builtin("baseline");
  const auto head_at = text.find("head:");
  std::string backbone = replace_all(text.substr(0, head_at), " C3,", " C3Faster,");
  std::string head = replace_all(text.substr(head_at), " C3,", " C3Ghost,");
  auto swapped = ly::parse_model_config(backbone + head);
  auto variant = ly::parse_model_config(builtin("fostc3net"));
  EXPECT_EQ(swapped, variant);
}

TEST(ModelConfig, MissingNcIsReported) {
  const ly::Error e = parse_error(drop_line_starting(builtin("baseline"), "nc:"));
  EXPECT_NE(std::string(e.what()).find("missing required key nc"), std::string::npos) << e.what();
  EXPECT_TRUE(e.line().has_value());
}

TEST(ModelConfig, DepthMultipleRoundTrips) {
  const auto cfg = ly::parse_model_config(builtin("baseline"));
  EXPECT_EQ(cfg.depth_multiple, 0.33);
  const auto again = ly::parse_model_config(ly::serialize_model_config(cfg));
  EXPECT_EQ(again.depth_multiple, 0.33);
}

TEST(ModelConfig, SerializeIsFixedPoint) {
  for (const char* name : {"baseline", "fostc3net"}) {
    const auto cfg = ly::parse_model_config(builtin(name));
    const std::string s1 = ly::serialize_model_config(cfg);
    const auto cfg2 = ly::parse_model_config(s1);
    EXPECT_EQ(cfg, cfg2);
    EXPECT_EQ(s1, ly::serialize_model_config(cfg2));
  }
}

TEST(ModelConfig, RejectionsCarryPositions) {
  const std::string base = builtin("baseline");
  const std::vector<std::string> bad = {
      replace_all(base, "nc: 4", "nc: 4\nnc: 4"),
      replace_all(base, "nc: 4", "classes: 4"),
      replace_all(base, "[64, 6, 2, 2]", "[64, 6, 2, 2"),
      replace_all(base, "Conv, [64", "Conve, [64"),
      replace_all(base, "SPPF, [1024, 5]", "SPPF, [1024, 5, 7]"),
      replace_all(base, "  - [10, 13, 16, 30, 33, 23]", "  - [10, 13, 16, 30, 33]"),
      replace_all(base, "  - [-1, 1, Conv, [64", "\t- [-1, 1, Conv, [64"),
      replace_all(base, "depth_multiple: 0.33", "depth_multiple: 3.5"),
      replace_all(base, "width_multiple: 0.50", "width_multiple: 0"),
      base + "extra: 1\n",
      "",
  };
  for (const auto& text : bad) {
    const ly::Error e = parse_error(text);
    EXPECT_EQ(e.kind(), ly::ErrorKind::kParse) << e.what();
    EXPECT_TRUE(e.line().has_value() && e.column().has_value()) << e.what();
    EXPECT_GE(*e.line(), 1);
    EXPECT_GE(*e.column(), 1);
  }
}

TEST(Scaling, WidthExamples) {
  EXPECT_EQ(ly::scale_width(64, 0.50), 32);
  EXPECT_EQ(ly::scale_width(1024, 0.50), 512);
  EXPECT_EQ(ly::scale_width(8, 0.25), 8);
  for (int64_t c = 8; c <= 2048; c += 8) EXPECT_EQ(ly::scale_width(c, 1.0), c);
  // 20 * 0.5 = 10 -> 10/8 = 1.25 -> 8; 28 * 0.5 = 14 -> 1.75 -> 16; 24 * 0.5 = 12 -> 1.5 -> 16
  EXPECT_EQ(ly::scale_width(20, 0.5), 8);
  EXPECT_EQ(ly::scale_width(28, 0.5), 16);
  EXPECT_EQ(ly::scale_width(24, 0.5), 16);
}

TEST(Scaling, DepthExamples) {
  EXPECT_EQ(ly::scale_depth(3, 0.33), 1);
  EXPECT_EQ(ly::scale_depth(6, 0.33), 2);
  EXPECT_EQ(ly::scale_depth(9, 0.33), 3);
  EXPECT_EQ(ly::scale_depth(1, 0.01), 1);
  EXPECT_EQ(ly::scale_depth(1, 2.0), 1);
  EXPECT_EQ(ly::scale_depth(3, 1.0), 3);
  EXPECT_EQ(ly::scale_depth(3, 0.5), 2);
}

TEST(BuildGraph, BaselineChannelPlan) {
  const auto g = ly::build_graph(ly::load_model_config("builtin:baseline"));
  ASSERT_EQ(g.nodes.size(), 25u);
  EXPECT_EQ(g.nodes[0].kind, BlockKind::kConvBnAct);
  EXPECT_EQ(g.nodes[0].c_out, 32);
  EXPECT_EQ(g.nodes[9].kind, BlockKind::kSPPF);
  EXPECT_EQ(g.nodes[9].c_out, 512);
  EXPECT_EQ(g.detect_index, 24);
  EXPECT_EQ(g.nodes[24].c_out, 27);
  EXPECT_EQ(g.nodes[12].c_out, 512);  // Concat of 256 + 256
  EXPECT_EQ(g.nodes[2].blocks.front().hyper.n, 1);
  EXPECT_EQ(g.nodes[4].blocks.front().hyper.n, 2);
  EXPECT_EQ(g.nodes[6].blocks.front().hyper.n, 3);
  EXPECT_EQ(g.nodes[24].from, (std::vector<int>{17, 20, 23}));
  EXPECT_EQ(g.nodes[0].from, (std::vector<int>{-1}));
}

TEST(BuildGraph, VariantKeepsNodeCountAndChannels) {
  const auto a = ly::build_graph(ly::load_model_config("builtin:baseline"));
  const auto b = ly::build_graph(ly::load_model_config("builtin:fostc3net"));
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].c_out, b.nodes[i].c_out) << i;
    EXPECT_EQ(a.nodes[i].from, b.nodes[i].from) << i;
    if (a.nodes[i].kind == BlockKind::kC3) {
      EXPECT_EQ(b.nodes[i].kind, a.nodes[i].in_backbone ? BlockKind::kC3Faster : BlockKind::kC3Ghost) << i;
    } else {
      EXPECT_EQ(a.nodes[i].kind, b.nodes[i].kind) << i;
    }
  }
}

TEST(BuildGraph, NonC3RepeatsBecomeSequence) {
  std::string text = replace_all(builtin("baseline"), "[-1, 1, SPPF, [1024, 5]]", "[-1, 6, Conv, [1024, 1, 1]]");
  const auto g = ly::build_graph(ly::parse_model_config(text));
  EXPECT_EQ(g.nodes[9].blocks.size(), 2u);
  EXPECT_EQ(g.nodes[9].blocks[1].c_in, (std::vector<int64_t>{512}));
}

TEST(BuildGraph, ForwardReferenceRejected) {
  const std::string text = replace_all(builtin("baseline"), "[[-1, 6], 1, Concat, [1]]", "[[-1, 16], 1, Concat, [1]]");
  try {
    ly::build_graph(ly::parse_model_config(text));
    FAIL() << "expected an error";
  } catch (const ly::Error& e) {
    EXPECT_EQ(e.layer_index(), 12);
  }
}

TEST(BuildGraph, DetectMustBeLastAndUnique) {
  const std::string base = builtin("baseline");
  EXPECT_THROW(ly::build_graph(ly::parse_model_config(base + "  - [-1, 1, Conv, [8, 1, 1]]\n")), ly::Error);
  EXPECT_THROW(
      ly::build_graph(ly::parse_model_config(base + "  - [[17, 20, 23], 1, Detect, [nc, anchors]]\n")), ly::Error);
}

TEST(InferShapes, ConcatSpatialMismatchNamesTheLayer) {
  const std::string text = replace_all(builtin("baseline"), "[[-1, 6], 1, Concat, [1]]", "[[-1, 4], 1, Concat, [1]]");
  const auto g = ly::build_graph(ly::parse_model_config(text));
  try {
    ly::infer_shapes(g, Shape{1, 3, 64, 64});
    FAIL() << "expected an error";
  } catch (const ly::Error& e) {
    EXPECT_EQ(e.layer_index(), 12) << e.what();
  }
}

TEST(InferShapes, DetectMapsAtTwoResolutions) {
  for (const char* model : {"builtin:baseline", "builtin:fostc3net"}) {
    const auto g = ly::build_graph(ly::load_model_config(model));
    for (int64_t hw : {64, 640}) {
      const auto shapes = ly::infer_shapes(g, Shape{1, 3, hw, hw});
      const auto& maps = shapes.outputs.back();
      ASSERT_EQ(maps.size(), 3u);
      EXPECT_EQ(maps[0], (Shape{1, 27, hw / 8, hw / 8}));
      EXPECT_EQ(maps[1], (Shape{1, 27, hw / 16, hw / 16}));
      EXPECT_EQ(maps[2], (Shape{1, 27, hw / 32, hw / 32}));
    }
    EXPECT_EQ(ly::detect_strides(g), (std::vector<int>{8, 16, 32}));
  }
}

TEST(InferShapes, RejectsIndivisibleInput) {
  const auto g = ly::build_graph(ly::load_model_config("builtin:baseline"));
  EXPECT_THROW(ly::infer_shapes(g, Shape{1, 3, 65, 64}), ly::Error);
  EXPECT_THROW(ly::infer_shapes(g, Shape{1, 3, 64, 48}), ly::Error);
  EXPECT_THROW(ly::infer_shapes(g, Shape{1, 4, 64, 64}), ly::Error);
  const auto w = ly::init_graph_weights(g, 0);
  EXPECT_THROW(ly::forward_graph(g, w, ly::Tensor(Shape{1, 3, 65, 65})), ly::Error);
}

TEST(ForwardGraph, MapsAt64AndNodeChannelsMatch) {
  for (const char* model : {"builtin:baseline", "builtin:fostc3net"}) {
    const auto g = ly::build_graph(ly::load_model_config(model));
    const auto w = ly::init_graph_weights(g, 3);
    ly::Tensor x(Shape{1, 3, 64, 64});
    ly::Rng rng(1);
    for (float& v : x.data()) v = static_cast<float>(rng.uniform());

    const auto maps = ly::forward_graph(g, w, x);
    ASSERT_EQ(maps.size(), 3u);
    EXPECT_EQ(maps[0].shape(), (Shape{1, 27, 8, 8}));
    EXPECT_EQ(maps[1].shape(), (Shape{1, 27, 4, 4}));
    EXPECT_EQ(maps[2].shape(), (Shape{1, 27, 2, 2}));

    // Re-run node by node and compare every declared width.
    std::vector<std::vector<ly::Tensor>> outs;
    for (const auto& node : g.nodes) {
      std::vector<ly::Tensor> in;
      for (int r : node.from) in.push_back(r < 0 ? x : outs[static_cast<size_t>(r)].front());
      for (size_t b = 0; b < node.blocks.size(); ++b) in = ly::block_forward(node.blocks[b], w.nodes[node.index][b], in);
      for (const auto& t : in) EXPECT_EQ(t.c(), node.c_out) << model << " node " << node.index;
      outs.push_back(std::move(in));
    }
    for (size_t i = 0; i < 3; ++i) EXPECT_EQ(outs.back()[i], maps[i]);
  }
}

TEST(ForwardGraph, WeightsStoreExactlyTheCountedParams) {
  const auto g = ly::build_graph(ly::load_model_config("builtin:fostc3net"));
  int64_t counted = 0;
  for (const auto& node : g.nodes) {
    for (const auto& spec : node.blocks) counted += ly::block_params(spec);
  }
  EXPECT_EQ(ly::init_graph_weights(g, 0).stored_floats(), counted);
}

TEST(Fuzz, MutatedConfigsNeverEscapeAsOtherErrors) {
  const std::string sources[] = {builtin("baseline"), builtin("fostc3net")};
  ly::Rng rng(2024);
  int rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string text = fuzz::mutate(sources[i % 2], rng);
    try {
      const auto cfg = ly::parse_model_config(text);
      try {
        ly::build_graph(cfg);
      } catch (const ly::Error& e) {
        ASSERT_TRUE(e.layer_index().has_value()) << e.what();
      }
    } catch (const ly::Error& e) {
      ++rejected;
      ASSERT_TRUE(e.line().has_value() && e.column().has_value()) << "mutant " << i << ": " << e.what();
    }
  }
  EXPECT_GT(rejected, 1000);
}
