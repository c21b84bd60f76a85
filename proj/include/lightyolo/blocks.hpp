#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lightyolo/random.hpp"
#include "lightyolo/tensor.hpp"

namespace lightyolo {

enum class BlockKind {
  kConvBnAct,
  kBottleneck,
  kC3,
  kSPPF,
  kGhostConv,
  kGhostBottleneck,
  kC3Ghost,
  kPConv,
  kFasterBlock,
  kC3Faster,
  kUpsample,
  kConcat,
  kDetect,
};

// Names as written in model-definition files ("Conv" for ConvBnAct).
std::string_view kind_name(BlockKind kind);
std::optional<BlockKind> kind_from_name(std::string_view name);
bool is_c3_family(BlockKind kind);

// Three scales of three (w, h) anchor pairs.
using AnchorTable = std::array<std::array<int, 6>, 3>;
inline constexpr int kAnchorsPerScale = 3;

struct BlockHyper {
  int k = 1;
  int s = 1;
  int p = -1;  // -1: k / 2
  int n = 1;   // inner units for C3-family blocks
  bool shortcut = true;
  double e = 0.5;
  int partial_div = 4;  // PConv processes c / partial_div channels
  int ghost_kernel = 5;  // depthwise cheap-op kernel
  bool act = true;       // GhostConv: SiLU after both convs
  int faster_expansion = 2;
  int pool_k = 5;
  int nc = 0;
  AnchorTable anchors{};

  bool operator==(const BlockHyper&) const = default;
};

struct BlockSpec {
  BlockKind kind = BlockKind::kConvBnAct;
  std::vector<int64_t> c_in;  // one entry per input; Concat and Detect take several
  int64_t c_out = 0;          // Detect: channels of each per-scale output
  BlockHyper hyper;

  int64_t total_c_in() const;
  int padding() const { return hyper.p >= 0 ? hyper.p : hyper.k / 2; }
  bool operator==(const BlockSpec&) const = default;
};

BlockSpec make_conv(int64_t c_in, int64_t c_out, int k, int s, int p = -1);
BlockSpec make_bottleneck(int64_t c_in, int64_t c_out, bool shortcut, double e = 0.5);
BlockSpec make_c3(BlockKind kind, int64_t c_in, int64_t c_out, int n, bool shortcut = true);
BlockSpec make_sppf(int64_t c_in, int64_t c_out, int k = 5);
BlockSpec make_ghost_conv(int64_t c_in, int64_t c_out, int k = 1, int s = 1);
BlockSpec make_ghost_bottleneck(int64_t c);
BlockSpec make_pconv(int64_t c);
BlockSpec make_faster_block(int64_t c);
BlockSpec make_upsample(int64_t c);
BlockSpec make_concat(std::vector<int64_t> c_in);
BlockSpec make_detect(std::vector<int64_t> c_in, int nc, const AnchorTable& anchors);

// Throws Error(kBlock) naming the block and the violated constraint.
void validate_block(const BlockSpec& spec);

// ---- primitive expansion -------------------------------------------------

enum class StepOp { kConv, kMaxPool, kUpsample, kConcat, kSlice, kAdd };

struct ConvStep {
  int64_t c_in = 0;
  int64_t c_out = 0;
  int k = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
  bool bn = true;
  bool act = true;
  bool bias = false;

  int64_t params() const;
  bool operator==(const ConvStep&) const = default;
};

struct Step {
  StepOp op = StepOp::kConv;
  std::vector<int> inputs;  // value ids
  ConvStep conv;            // kConv
  int pool_k = 0;           // kMaxPool
  int pool_stride = 1;
  int pool_pad = 0;
  int64_t lo = 0;  // kSlice
  int64_t hi = 0;

  bool operator==(const Step&) const = default;
};

// Dataflow program. Values 0..num_inputs-1 are the block inputs; step i
// produces value num_inputs + i. `outputs` lists the result value ids.
struct Program {
  int num_inputs = 1;
  std::vector<Step> steps;
  std::vector<int> outputs;

  int value_of_step(size_t i) const { return num_inputs + static_cast<int>(i); }
  size_t count(StepOp op) const;
  bool operator==(const Program&) const = default;
};

Program expand_block(const BlockSpec& spec);

// ---- costing ----------------------------------------------------------------

// Closed-form trainable parameter count: conv weights, conv biases and 2c per
// batch-norm.
int64_t block_params(const BlockSpec& spec);

struct BlockShapes {
  std::vector<Shape> outputs;
  int64_t macs = 0;
};

// Shape propagation through the expansion without allocating tensors.
BlockShapes block_shapes(const BlockSpec& spec, std::span<const Shape> inputs);
int64_t block_macs(const BlockSpec& spec, std::span<const Shape> inputs);

// ---- weights and execution -------------------------------------------------

struct ConvUnit {
  ConvWeights conv;
  std::vector<float> gamma;  // empty when the step has no batch-norm
  std::vector<float> beta;
};

// One ConvUnit per kConv step, in program order.
struct BlockWeights {
  std::vector<ConvUnit> units;

  int64_t stored_floats() const;
};

BlockWeights init_block_weights(const BlockSpec& spec, Rng& rng);

// Throws if the weights do not match the expansion of `spec`.
void check_block_weights(const BlockSpec& spec, const BlockWeights& weights);

// Runs the expansion. Detect returns one map per scale, everything else one.
std::vector<Tensor> run_program(const Program& program, const BlockWeights& weights, std::span<const Tensor> inputs);
std::vector<Tensor> block_forward(const BlockSpec& spec, const BlockWeights& weights, std::span<const Tensor> inputs);

}  // namespace lightyolo
