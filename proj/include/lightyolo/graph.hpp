#pragma once

#include <cstdint>
#include <vector>

#include "lightyolo/blocks.hpp"
#include "lightyolo/model_config.hpp"
#include "lightyolo/tensor.hpp"

namespace lightyolo {

inline constexpr int64_t kImageChannels = 3;
inline constexpr int64_t kMaxStride = 32;

struct LayerNode {
  int index = 0;
  BlockKind kind = BlockKind::kConvBnAct;
  std::vector<int> from;          // absolute producer indices; -1 is the image
  std::vector<BlockSpec> blocks;  // executed in sequence (repeats of non-C3 kinds)
  int64_t c_out = 0;
  bool in_backbone = true;
};

struct ModelGraph {
  std::vector<LayerNode> nodes;
  int detect_index = -1;
  int nc = 0;
  AnchorTable anchors{};
};

// Scales, resolves and validates a config. Errors carry the layer index.
ModelGraph build_graph(const ModelConfig& cfg);

struct GraphShapes {
  std::vector<std::vector<Shape>> outputs;  // per node; Detect has one per scale
  std::vector<int64_t> macs;                // per node
};

// Shape propagation without tensors; requires H, W divisible by 32.
GraphShapes infer_shapes(const ModelGraph& graph, Shape input);

// Per-scale downsampling factors of the Detect inputs.
std::vector<int> detect_strides(const ModelGraph& graph);

struct GraphWeights {
  std::vector<std::vector<BlockWeights>> nodes;  // [node][block in sequence]

  int64_t stored_floats() const;
};

GraphWeights init_graph_weights(const ModelGraph& graph, uint64_t seed);

// Returns Detect's raw per-scale maps.
std::vector<Tensor> forward_graph(const ModelGraph& graph, const GraphWeights& weights, const Tensor& input);

}  // namespace lightyolo
