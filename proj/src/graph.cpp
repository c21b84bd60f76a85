#include "lightyolo/graph.hpp"

#include <algorithm>
#include <optional>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace {

int64_t arg_int(const LayerEntry& e, size_t i, int64_t fallback) {
  if (i >= e.args.size()) return fallback;
  return e.args[i].i;
}

bool arg_bool(const LayerEntry& e, size_t i, bool fallback) {
  if (i >= e.args.size()) return fallback;
  return e.args[i].ident == "true" || e.args[i].ident == "True";
}

AnchorTable detect_anchors(const ModelConfig& cfg, const LayerEntry& e) {
  if (e.args.size() < 2 || e.args[1].type == Literal::Type::kIdent) return cfg.anchors;
  AnchorTable table{};
  for (size_t r = 0; r < 3; ++r) {
    for (size_t j = 0; j < 6; ++j) table[r][j] = static_cast<int>(e.args[1].list[r].list[j].i);
  }
  return table;
}

int detect_nc(const ModelConfig& cfg, const LayerEntry& e) {
  if (e.args.empty() || e.args[0].type == Literal::Type::kIdent) return cfg.nc;
  return static_cast<int>(e.args[0].i);
}

LayerNode build_node(const ModelConfig& cfg, const LayerEntry& e, int index, const std::vector<int64_t>& channels) {
  LayerNode node;
  node.index = index;
  node.kind = *kind_from_name(e.module);
  node.in_backbone = index < static_cast<int>(cfg.backbone.size());

  for (int f : e.from) {
    const int r = f < 0 ? index + f : f;
    const bool image = r == -1 && index == 0;
    if (!image && (r < 0 || r >= index)) {
      throw Error::layer(index, "from index " + std::to_string(f) + " does not refer to an earlier layer");
    }
    node.from.push_back(r);
  }
  const bool multi = node.kind == BlockKind::kConcat || node.kind == BlockKind::kDetect;
  if (!multi && node.from.size() != 1) throw Error::layer(index, e.module + " takes exactly one input");
  if (multi && node.kind == BlockKind::kConcat && node.from.size() < 2) {
    throw Error::layer(index, "Concat needs at least two inputs");
  }

  std::vector<int64_t> c_in;
  for (int r : node.from) c_in.push_back(r == -1 ? kImageChannels : channels[static_cast<size_t>(r)]);

  const double gw = cfg.width_multiple;
  const int n = scale_depth(e.repeats, cfg.depth_multiple);
  auto scaled = [&](size_t i) { return scale_width(arg_int(e, i, 0), gw); };

  BlockSpec spec;
  int sequence = n;
  switch (node.kind) {
    case BlockKind::kConvBnAct: {
      const int64_t p = arg_int(e, 3, -1);
      spec = make_conv(c_in[0], scaled(0), static_cast<int>(arg_int(e, 1, 1)), static_cast<int>(arg_int(e, 2, 1)),
                       static_cast<int>(p));
      break;
    }
    case BlockKind::kBottleneck:
      spec = make_bottleneck(c_in[0], scaled(0), arg_bool(e, 1, true));
      break;
    case BlockKind::kC3:
    case BlockKind::kC3Ghost:
    case BlockKind::kC3Faster:
      spec = make_c3(node.kind, c_in[0], scaled(0), n, arg_bool(e, 1, true));
      sequence = 1;
      break;
    case BlockKind::kSPPF:
      spec = make_sppf(c_in[0], scaled(0), static_cast<int>(arg_int(e, 1, 5)));
      break;
    case BlockKind::kGhostConv:
      spec = make_ghost_conv(c_in[0], scaled(0), static_cast<int>(arg_int(e, 1, 1)),
                             static_cast<int>(arg_int(e, 2, 1)));
      break;
    case BlockKind::kGhostBottleneck:
      spec = make_ghost_bottleneck(c_in[0]);
      spec.c_out = scaled(0);
      spec.hyper.k = static_cast<int>(arg_int(e, 1, 3));
      spec.hyper.s = static_cast<int>(arg_int(e, 2, 1));
      break;
    case BlockKind::kPConv:
      spec = make_pconv(c_in[0]);
      spec.c_out = scaled(0);
      spec.hyper.k = static_cast<int>(arg_int(e, 1, 3));
      break;
    case BlockKind::kFasterBlock:
      spec = make_faster_block(c_in[0]);
      spec.c_out = scaled(0);
      break;
    case BlockKind::kUpsample:
      spec = make_upsample(c_in[0]);
      break;
    case BlockKind::kConcat:
      spec = make_concat(c_in);
      if (e.repeats != 1) throw Error::layer(index, "Concat cannot be repeated");
      sequence = 1;
      break;
    case BlockKind::kDetect:
      spec = make_detect(c_in, detect_nc(cfg, e), detect_anchors(cfg, e));
      if (e.repeats != 1) throw Error::layer(index, "Detect cannot be repeated");
      sequence = 1;
      break;
  }

  try {
    validate_block(spec);
    node.blocks.push_back(spec);
    for (int i = 1; i < sequence; ++i) {
      BlockSpec next = spec;
      next.c_in = {spec.c_out};
      validate_block(next);
      node.blocks.push_back(next);
    }
  } catch (const Error& err) {
    throw Error::layer(index, err.what());
  }
  node.c_out = spec.c_out;
  return node;
}

}  // namespace

ModelGraph build_graph(const ModelConfig& cfg) {
  ModelGraph graph;
  graph.nc = cfg.nc;
  graph.anchors = cfg.anchors;
  std::vector<const LayerEntry*> entries;
  for (const auto& e : cfg.backbone) entries.push_back(&e);
  for (const auto& e : cfg.head) entries.push_back(&e);
  if (entries.empty()) throw Error::layer(0, "model has no layers");

  std::vector<int64_t> channels;
  for (size_t i = 0; i < entries.size(); ++i) {
    const int index = static_cast<int>(i);
    if (!kind_from_name(entries[i]->module)) {
      throw Error::layer(index, "unknown module name '" + entries[i]->module + "'");
    }
    LayerNode node = build_node(cfg, *entries[i], index, channels);
    for (int r : node.from) {
      if (r >= 0 && graph.nodes[static_cast<size_t>(r)].kind == BlockKind::kDetect) {
        throw Error::layer(index, "Detect output cannot feed another layer");
      }
    }
    if (node.kind == BlockKind::kDetect) {
      if (graph.detect_index >= 0) throw Error::layer(index, "more than one Detect layer");
      graph.detect_index = index;
    }
    channels.push_back(node.c_out);
    graph.nodes.push_back(std::move(node));
  }
  const int last = static_cast<int>(graph.nodes.size()) - 1;
  if (graph.detect_index < 0) throw Error::layer(last, "model has no Detect layer");
  if (graph.detect_index != last) throw Error::layer(graph.detect_index, "Detect must be the last layer");
  graph.nc = graph.nodes.back().blocks.front().hyper.nc;
  graph.anchors = graph.nodes.back().blocks.front().hyper.anchors;
  return graph;
}

GraphShapes infer_shapes(const ModelGraph& graph, Shape input) {
  if (input.c != kImageChannels) {
    throw Error(ErrorKind::kShape, "input must have 3 channels, got " + std::to_string(input.c));
  }
  if (input.h < kMaxStride || input.w < kMaxStride || input.h % kMaxStride != 0 || input.w % kMaxStride != 0) {
    throw Error(ErrorKind::kShape, "input H and W must be positive multiples of 32, got " +
                                       std::to_string(input.h) + "x" + std::to_string(input.w));
  }
  GraphShapes result;
  result.outputs.reserve(graph.nodes.size());
  for (const LayerNode& node : graph.nodes) {
    std::vector<Shape> in;
    for (int r : node.from) {
      in.push_back(r == -1 ? input : result.outputs[static_cast<size_t>(r)].front());
    }
    int64_t macs = 0;
    try {
      for (const BlockSpec& spec : node.blocks) {
        BlockShapes bs = block_shapes(spec, in);
        macs += bs.macs;
        in = std::move(bs.outputs);
      }
    } catch (const Error& err) {
      throw Error::layer(node.index, err.what());
    }
    result.outputs.push_back(std::move(in));
    result.macs.push_back(macs);
  }
  return result;
}

std::vector<int> detect_strides(const ModelGraph& graph) {
  constexpr int64_t kProbe = 256;
  const GraphShapes shapes = infer_shapes(graph, Shape{1, kImageChannels, kProbe, kProbe});
  std::vector<int> strides;
  for (int r : graph.nodes[static_cast<size_t>(graph.detect_index)].from) {
    strides.push_back(static_cast<int>(kProbe / shapes.outputs[static_cast<size_t>(r)].front().h));
  }
  return strides;
}

int64_t GraphWeights::stored_floats() const {
  int64_t total = 0;
  for (const auto& node : nodes) {
    for (const BlockWeights& w : node) total += w.stored_floats();
  }
  return total;
}

GraphWeights init_graph_weights(const ModelGraph& graph, uint64_t seed) {
  Rng rng(seed);
  GraphWeights weights;
  for (const LayerNode& node : graph.nodes) {
    std::vector<BlockWeights> seq;
    for (const BlockSpec& spec : node.blocks) seq.push_back(init_block_weights(spec, rng));
    weights.nodes.push_back(std::move(seq));
  }
  return weights;
}

std::vector<Tensor> forward_graph(const ModelGraph& graph, const GraphWeights& weights, const Tensor& input) {
  infer_shapes(graph, input.shape());
  if (weights.nodes.size() != graph.nodes.size()) {
    throw Error(ErrorKind::kShape, "weights cover " + std::to_string(weights.nodes.size()) + " layers, graph has " +
                                       std::to_string(graph.nodes.size()));
  }
  // Release each intermediate after its last consumer.
  std::vector<int> last_use(graph.nodes.size(), -1);
  for (const LayerNode& node : graph.nodes) {
    for (int r : node.from) {
      if (r >= 0) last_use[static_cast<size_t>(r)] = node.index;
    }
  }
  std::vector<std::vector<Tensor>> cache(graph.nodes.size());
  for (const LayerNode& node : graph.nodes) {
    const auto& node_weights = weights.nodes[static_cast<size_t>(node.index)];
    if (node_weights.size() != node.blocks.size()) throw Error::layer(node.index, "weight/block count mismatch");
    std::vector<Tensor> in;
    for (int r : node.from) in.push_back(r == -1 ? input : cache[static_cast<size_t>(r)].front());
    try {
      for (size_t b = 0; b < node.blocks.size(); ++b) {
        check_block_weights(node.blocks[b], node_weights[b]);
        in = block_forward(node.blocks[b], node_weights[b], in);
      }
    } catch (const Error& err) {
      throw Error::layer(node.index, err.what());
    }
    cache[static_cast<size_t>(node.index)] = std::move(in);
    for (int r : node.from) {
      if (r >= 0 && last_use[static_cast<size_t>(r)] == node.index) cache[static_cast<size_t>(r)].clear();
    }
  }
  return std::move(cache.back());
}

}  // namespace lightyolo
