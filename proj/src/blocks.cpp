#include "lightyolo/blocks.hpp"

#include <cmath>
#include <numeric>
#include <optional>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace {

struct KindName {
  BlockKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {BlockKind::kConvBnAct, "Conv"},
    {BlockKind::kBottleneck, "Bottleneck"},
    {BlockKind::kC3, "C3"},
    {BlockKind::kSPPF, "SPPF"},
    {BlockKind::kGhostConv, "GhostConv"},
    {BlockKind::kGhostBottleneck, "GhostBottleneck"},
    {BlockKind::kC3Ghost, "C3Ghost"},
    {BlockKind::kPConv, "PConv"},
    {BlockKind::kFasterBlock, "FasterBlock"},
    {BlockKind::kC3Faster, "C3Faster"},
    {BlockKind::kUpsample, "Upsample"},
    {BlockKind::kConcat, "Concat"},
    {BlockKind::kDetect, "Detect"},
};

[[noreturn]] void fail(const BlockSpec& spec, const std::string& what) {
  throw Error(ErrorKind::kBlock, std::string(kind_name(spec.kind)) + ": " + what);
}

int64_t c3_hidden(const BlockSpec& spec) {
  return static_cast<int64_t>(static_cast<double>(spec.c_out) * spec.hyper.e);
}

int64_t partial_channels(int64_t c, int div) { return c / div; }

// Appends steps to a program under construction.
class Emitter {
 public:
  explicit Emitter(int num_inputs) { program_.num_inputs = num_inputs; }

  int conv(int x, const ConvStep& c) {
    Step s;
    s.op = StepOp::kConv;
    s.inputs = {x};
    s.conv = c;
    return push(std::move(s));
  }
  int conv_bn_act(int x, int64_t c_in, int64_t c_out, int k, int stride, int pad, int groups = 1, bool act = true) {
    return conv(x, ConvStep{c_in, c_out, k, stride, pad, groups, true, act, false});
  }
  int pool(int x, int k, int stride, int pad) {
    Step s;
    s.op = StepOp::kMaxPool;
    s.inputs = {x};
    s.pool_k = k;
    s.pool_stride = stride;
    s.pool_pad = pad;
    return push(std::move(s));
  }
  int upsample(int x) {
    Step s;
    s.op = StepOp::kUpsample;
    s.inputs = {x};
    return push(std::move(s));
  }
  int concat(std::vector<int> xs) {
    Step s;
    s.op = StepOp::kConcat;
    s.inputs = std::move(xs);
    return push(std::move(s));
  }
  int slice(int x, int64_t lo, int64_t hi) {
    Step s;
    s.op = StepOp::kSlice;
    s.inputs = {x};
    s.lo = lo;
    s.hi = hi;
    return push(std::move(s));
  }
  int add(int a, int b) {
    Step s;
    s.op = StepOp::kAdd;
    s.inputs = {a, b};
    return push(std::move(s));
  }

  Program finish(std::vector<int> outputs) {
    program_.outputs = std::move(outputs);
    return std::move(program_);
  }

 private:
  int push(Step s) {
    program_.steps.push_back(std::move(s));
    return program_.value_of_step(program_.steps.size() - 1);
  }
  Program program_;
};

std::vector<int> emit(Emitter& em, const BlockSpec& spec, const std::vector<int>& in);

int emit_one(Emitter& em, const BlockSpec& spec, int x) { return emit(em, spec, {x}).front(); }

std::vector<int> emit(Emitter& em, const BlockSpec& spec, const std::vector<int>& in) {
  validate_block(spec);
  const BlockHyper& h = spec.hyper;
  const int64_t ci = spec.total_c_in();
  const int64_t co = spec.c_out;
  const int x = in.front();
  switch (spec.kind) {
    case BlockKind::kConvBnAct:
      return {em.conv_bn_act(x, ci, co, h.k, h.s, spec.padding())};
    case BlockKind::kBottleneck: {
      const int64_t hidden = static_cast<int64_t>(static_cast<double>(co) * h.e);
      int y = em.conv_bn_act(x, ci, hidden, 1, 1, 0);
      y = em.conv_bn_act(y, hidden, co, 3, 1, 1);
      if (h.shortcut && ci == co) y = em.add(x, y);
      return {y};
    }
    case BlockKind::kC3:
    case BlockKind::kC3Ghost:
    case BlockKind::kC3Faster: {
      const int64_t hidden = c3_hidden(spec);
      int a = em.conv_bn_act(x, ci, hidden, 1, 1, 0);
      const int b = em.conv_bn_act(x, ci, hidden, 1, 1, 0);
      for (int i = 0; i < h.n; ++i) {
        BlockSpec inner;
        if (spec.kind == BlockKind::kC3) {
          inner = make_bottleneck(hidden, hidden, h.shortcut, 1.0);
        } else if (spec.kind == BlockKind::kC3Ghost) {
          inner = make_ghost_bottleneck(hidden);
          inner.hyper.ghost_kernel = h.ghost_kernel;
        } else {
          inner = make_faster_block(hidden);
          inner.hyper.partial_div = h.partial_div;
          inner.hyper.faster_expansion = h.faster_expansion;
        }
        a = emit_one(em, inner, a);
      }
      const int cat = em.concat({a, b});
      return {em.conv_bn_act(cat, 2 * hidden, co, 1, 1, 0)};
    }
    case BlockKind::kSPPF: {
      const int64_t hidden = ci / 2;
      const int y0 = em.conv_bn_act(x, ci, hidden, 1, 1, 0);
      const int y1 = em.pool(y0, h.pool_k, 1, h.pool_k / 2);
      const int y2 = em.pool(y1, h.pool_k, 1, h.pool_k / 2);
      const int y3 = em.pool(y2, h.pool_k, 1, h.pool_k / 2);
      const int cat = em.concat({y0, y1, y2, y3});
      return {em.conv_bn_act(cat, 4 * hidden, co, 1, 1, 0)};
    }
    case BlockKind::kGhostConv: {
      const int64_t half = co / 2;
      const int primary = em.conv_bn_act(x, ci, half, h.k, h.s, spec.padding(), 1, h.act);
      const int cheap =
          em.conv_bn_act(primary, half, half, h.ghost_kernel, 1, h.ghost_kernel / 2, static_cast<int>(half), h.act);
      return {em.concat({primary, cheap})};
    }
    case BlockKind::kGhostBottleneck: {
      BlockSpec first = make_ghost_conv(ci, co / 2, 1, 1);
      BlockSpec second = make_ghost_conv(co / 2, co, 1, 1);
      first.hyper.ghost_kernel = h.ghost_kernel;
      second.hyper.ghost_kernel = h.ghost_kernel;
      second.hyper.act = false;
      int y = emit_one(em, first, x);
      y = emit_one(em, second, y);
      return {em.add(x, y)};
    }
    case BlockKind::kPConv: {
      const int64_t cp = partial_channels(ci, h.partial_div);
      const int part = em.slice(x, 0, cp);
      const int conved = em.conv(part, ConvStep{cp, cp, h.k, 1, h.k / 2, 1, false, false, false});
      const int rest = em.slice(x, cp, ci);
      return {em.concat({conved, rest})};
    }
    case BlockKind::kFasterBlock: {
      BlockSpec pconv = make_pconv(ci);
      pconv.hyper.partial_div = h.partial_div;
      const int64_t wide = static_cast<int64_t>(h.faster_expansion) * ci;
      int y = emit_one(em, pconv, x);
      y = em.conv_bn_act(y, ci, wide, 1, 1, 0);
      y = em.conv(y, ConvStep{wide, co, 1, 1, 0, 1, true, false, false});
      return {em.add(x, y)};
    }
    case BlockKind::kUpsample:
      return {em.upsample(x)};
    case BlockKind::kConcat:
      return {em.concat(in)};
    case BlockKind::kDetect: {
      std::vector<int> outs;
      for (size_t i = 0; i < in.size(); ++i) {
        outs.push_back(em.conv(in[i], ConvStep{spec.c_in[i], co, 1, 1, 0, 1, false, false, true}));
      }
      return outs;
    }
  }
  fail(spec, "unknown block kind");
}

int64_t conv_params(int64_t c_in, int64_t c_out, int64_t k, int64_t groups = 1, bool bn = true, bool bias = false) {
  return k * k * (c_in / groups) * c_out + (bn ? 2 * c_out : 0) + (bias ? c_out : 0);
}

int64_t ghost_conv_params(int64_t c_in, int64_t c_out, int64_t k, int64_t cheap_k) {
  const int64_t half = c_out / 2;
  return conv_params(c_in, half, k) + conv_params(half, half, cheap_k, half);
}

int64_t pconv_params(int64_t c, int div, int k) {
  const int64_t cp = c / div;
  return conv_params(cp, cp, k, 1, false);
}

int64_t faster_params(int64_t c, int div, int expansion) {
  const int64_t wide = expansion * c;
  return pconv_params(c, div, 3) + conv_params(c, wide, 1) + conv_params(wide, c, 1);
}

int64_t ghost_bottleneck_params(int64_t c, int cheap_k) {
  return ghost_conv_params(c, c / 2, 1, cheap_k) + ghost_conv_params(c / 2, c, 1, cheap_k);
}

}  // namespace

std::string_view kind_name(BlockKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

std::optional<BlockKind> kind_from_name(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  return std::nullopt;
}

bool is_c3_family(BlockKind kind) {
  return kind == BlockKind::kC3 || kind == BlockKind::kC3Ghost || kind == BlockKind::kC3Faster;
}

int64_t BlockSpec::total_c_in() const { return std::accumulate(c_in.begin(), c_in.end(), int64_t{0}); }

BlockSpec make_conv(int64_t c_in, int64_t c_out, int k, int s, int p) {
  BlockSpec b{BlockKind::kConvBnAct, {c_in}, c_out, {}};
  b.hyper.k = k;
  b.hyper.s = s;
  b.hyper.p = p;
  return b;
}

BlockSpec make_bottleneck(int64_t c_in, int64_t c_out, bool shortcut, double e) {
  BlockSpec b{BlockKind::kBottleneck, {c_in}, c_out, {}};
  b.hyper.shortcut = shortcut;
  b.hyper.e = e;
  return b;
}

BlockSpec make_c3(BlockKind kind, int64_t c_in, int64_t c_out, int n, bool shortcut) {
  BlockSpec b{kind, {c_in}, c_out, {}};
  b.hyper.n = n;
  b.hyper.shortcut = shortcut;
  return b;
}

BlockSpec make_sppf(int64_t c_in, int64_t c_out, int k) {
  BlockSpec b{BlockKind::kSPPF, {c_in}, c_out, {}};
  b.hyper.pool_k = k;
  return b;
}

BlockSpec make_ghost_conv(int64_t c_in, int64_t c_out, int k, int s) {
  BlockSpec b{BlockKind::kGhostConv, {c_in}, c_out, {}};
  b.hyper.k = k;
  b.hyper.s = s;
  return b;
}

BlockSpec make_ghost_bottleneck(int64_t c) {
  BlockSpec b{BlockKind::kGhostBottleneck, {c}, c, {}};
  b.hyper.k = 3;
  return b;
}

BlockSpec make_pconv(int64_t c) {
  BlockSpec b{BlockKind::kPConv, {c}, c, {}};
  b.hyper.k = 3;
  return b;
}

BlockSpec make_faster_block(int64_t c) { return BlockSpec{BlockKind::kFasterBlock, {c}, c, {}}; }

BlockSpec make_upsample(int64_t c) { return BlockSpec{BlockKind::kUpsample, {c}, c, {}}; }

BlockSpec make_concat(std::vector<int64_t> c_in) {
  const int64_t total = std::accumulate(c_in.begin(), c_in.end(), int64_t{0});
  return BlockSpec{BlockKind::kConcat, std::move(c_in), total, {}};
}

BlockSpec make_detect(std::vector<int64_t> c_in, int nc, const AnchorTable& anchors) {
  BlockSpec b{BlockKind::kDetect, std::move(c_in), int64_t{kAnchorsPerScale} * (nc + 5), {}};
  b.hyper.nc = nc;
  b.hyper.anchors = anchors;
  return b;
}

void validate_block(const BlockSpec& spec) {
  const BlockHyper& h = spec.hyper;
  if (spec.c_in.empty()) fail(spec, "no inputs");
  for (int64_t c : spec.c_in) {
    if (c < 1) fail(spec, "input channels must be >= 1, got " + std::to_string(c));
  }
  if (spec.c_out < 1) fail(spec, "output channels must be >= 1, got " + std::to_string(spec.c_out));
  const bool multi_input = spec.kind == BlockKind::kConcat || spec.kind == BlockKind::kDetect;
  if (!multi_input && spec.c_in.size() != 1) fail(spec, "expects exactly one input");
  const int64_t ci = spec.total_c_in();
  const int64_t co = spec.c_out;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) fail(spec, what);
  };
  switch (spec.kind) {
    case BlockKind::kConvBnAct:
      need(h.k >= 1 && h.s >= 1, "kernel and stride must be >= 1");
      need(h.p >= -1, "padding must be >= 0");
      break;
    case BlockKind::kBottleneck: {
      const auto hidden = static_cast<int64_t>(static_cast<double>(co) * h.e);
      need(hidden >= 1, "hidden channels e*c must be >= 1");
      break;
    }
    case BlockKind::kC3:
    case BlockKind::kC3Ghost:
    case BlockKind::kC3Faster: {
      need(h.n >= 1, "inner unit count must be >= 1");
      const int64_t hidden = c3_hidden(spec);
      need(hidden >= 1, "hidden channels e*c must be >= 1");
      if (spec.kind == BlockKind::kC3Ghost) {
        need(hidden % 4 == 0, "hidden channels " + std::to_string(hidden) +
                                  " must be divisible by 4 for GhostBottleneck inner units");
      }
      if (spec.kind == BlockKind::kC3Faster) {
        need(h.partial_div >= 1 && hidden % h.partial_div == 0,
             "hidden channels " + std::to_string(hidden) + " must be divisible by the partial denominator " +
                 std::to_string(h.partial_div));
      }
      break;
    }
    case BlockKind::kSPPF:
      need(ci % 2 == 0, "input channels must be even");
      need(h.pool_k >= 1 && h.pool_k % 2 == 1, "pool kernel must be odd");
      break;
    case BlockKind::kGhostConv:
      need(h.k >= 1 && h.s >= 1, "kernel and stride must be >= 1");
      need(co % 2 == 0, "output channels " + std::to_string(co) + " must be even");
      need(h.ghost_kernel >= 1 && h.ghost_kernel % 2 == 1, "cheap-op kernel must be odd");
      break;
    case BlockKind::kGhostBottleneck:
      need(ci == co, "requires c_in == c_out for the residual add");
      need(co % 4 == 0, "channels " + std::to_string(co) + " must be divisible by 4");
      need(h.s == 1, "only stride 1 is supported");
      break;
    case BlockKind::kPConv:
      need(ci == co, "requires c_in == c_out");
      need(h.partial_div >= 1 && ci % h.partial_div == 0,
           "channels " + std::to_string(ci) + " not divisible by partial denominator " + std::to_string(h.partial_div));
      need(h.k >= 1 && h.k % 2 == 1, "kernel must be odd");
      break;
    case BlockKind::kFasterBlock:
      need(ci == co, "requires c_in == c_out for the residual add");
      need(h.partial_div >= 1 && ci % h.partial_div == 0,
           "channels " + std::to_string(ci) + " not divisible by partial denominator " + std::to_string(h.partial_div));
      need(h.faster_expansion >= 1, "expansion must be >= 1");
      break;
    case BlockKind::kUpsample:
      need(ci == co, "requires c_in == c_out");
      break;
    case BlockKind::kConcat:
      need(co == ci, "output channels must equal the sum of inputs");
      break;
    case BlockKind::kDetect:
      need(h.nc >= 1, "nc must be >= 1");
      need(spec.c_in.size() == h.anchors.size(),
           "expects " + std::to_string(h.anchors.size()) + " inputs, got " + std::to_string(spec.c_in.size()));
      need(co == int64_t{kAnchorsPerScale} * (h.nc + 5), "output channels must be na*(nc+5)");
      break;
  }
}

int64_t ConvStep::params() const { return conv_params(c_in, c_out, k, groups, bn, bias); }

size_t Program::count(StepOp op) const {
  size_t n = 0;
  for (const Step& s : steps) n += s.op == op ? 1 : 0;
  return n;
}

Program expand_block(const BlockSpec& spec) {
  validate_block(spec);
  const int num_inputs = static_cast<int>(spec.c_in.size());
  Emitter em(num_inputs);
  std::vector<int> in(static_cast<size_t>(num_inputs));
  std::iota(in.begin(), in.end(), 0);
  std::vector<int> outs = emit(em, spec, in);
  return em.finish(std::move(outs));
}

int64_t block_params(const BlockSpec& spec) {
  validate_block(spec);
  const BlockHyper& h = spec.hyper;
  const int64_t ci = spec.total_c_in();
  const int64_t co = spec.c_out;
  switch (spec.kind) {
    case BlockKind::kConvBnAct:
      return conv_params(ci, co, h.k);
    case BlockKind::kBottleneck: {
      const auto hidden = static_cast<int64_t>(static_cast<double>(co) * h.e);
      return conv_params(ci, hidden, 1) + conv_params(hidden, co, 3);
    }
    case BlockKind::kC3:
    case BlockKind::kC3Ghost:
    case BlockKind::kC3Faster: {
      const int64_t hidden = c3_hidden(spec);
      int64_t inner = 0;
      if (spec.kind == BlockKind::kC3) {
        inner = conv_params(hidden, hidden, 1) + conv_params(hidden, hidden, 3);
      } else if (spec.kind == BlockKind::kC3Ghost) {
        inner = ghost_bottleneck_params(hidden, h.ghost_kernel);
      } else {
        inner = faster_params(hidden, h.partial_div, h.faster_expansion);
      }
      return 2 * conv_params(ci, hidden, 1) + conv_params(2 * hidden, co, 1) + h.n * inner;
    }
    case BlockKind::kSPPF:
      return conv_params(ci, ci / 2, 1) + conv_params(2 * ci, co, 1);
    case BlockKind::kGhostConv:
      return ghost_conv_params(ci, co, h.k, h.ghost_kernel);
    case BlockKind::kGhostBottleneck:
      return ghost_bottleneck_params(co, h.ghost_kernel);
    case BlockKind::kPConv:
      return pconv_params(ci, h.partial_div, h.k);
    case BlockKind::kFasterBlock:
      return faster_params(ci, h.partial_div, h.faster_expansion);
    case BlockKind::kUpsample:
    case BlockKind::kConcat:
      return 0;
    case BlockKind::kDetect: {
      int64_t total = 0;
      for (int64_t c : spec.c_in) total += conv_params(c, co, 1, 1, false, true);
      return total;
    }
  }
  return 0;
}

namespace {

BlockShapes walk_shapes(const Program& program, std::span<const Shape> inputs, const BlockSpec* spec) {
  auto err = [&](const std::string& what) -> Error {
    const std::string prefix = spec ? std::string(kind_name(spec->kind)) + ": " : std::string();
    return Error(ErrorKind::kShape, prefix + what);
  };
  if (static_cast<int>(inputs.size()) != program.num_inputs) {
    throw err("expected " + std::to_string(program.num_inputs) + " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<Shape> values(inputs.begin(), inputs.end());
  values.reserve(values.size() + program.steps.size());
  int64_t macs = 0;
  for (const Step& step : program.steps) {
    const Shape& x = values[static_cast<size_t>(step.inputs.front())];
    Shape y = x;
    switch (step.op) {
      case StepOp::kConv: {
        const ConvStep& c = step.conv;
        if (x.c != c.c_in) {
          throw err("conv expects " + std::to_string(c.c_in) + " input channels, got " + std::to_string(x.c));
        }
        y.c = c.c_out;
        y.h = conv_out_dim(x.h, c.k, c.stride, c.pad);
        y.w = conv_out_dim(x.w, c.k, c.stride, c.pad);
        if (x.h > 0 && x.w > 0 && (y.h < 1 || y.w < 1)) throw err("conv kernel larger than input " + x.str());
        macs += int64_t{c.k} * c.k * (c.c_in / c.groups) * c.c_out * y.h * y.w * y.n;
        break;
      }
      case StepOp::kMaxPool:
        y.h = conv_out_dim(x.h, step.pool_k, step.pool_stride, step.pool_pad);
        y.w = conv_out_dim(x.w, step.pool_k, step.pool_stride, step.pool_pad);
        break;
      case StepOp::kUpsample:
        y.h = 2 * x.h;
        y.w = 2 * x.w;
        break;
      case StepOp::kConcat: {
        y.c = 0;
        for (int id : step.inputs) {
          const Shape& part = values[static_cast<size_t>(id)];
          if (part.n != x.n || part.h != x.h || part.w != x.w) {
            throw err("concat spatial mismatch " + part.str() + " vs " + x.str());
          }
          y.c += part.c;
        }
        break;
      }
      case StepOp::kSlice:
        if (step.lo < 0 || step.lo >= step.hi || step.hi > x.c) throw err("slice out of range for " + x.str());
        y.c = step.hi - step.lo;
        break;
      case StepOp::kAdd: {
        const Shape& other = values[static_cast<size_t>(step.inputs[1])];
        if (other != x) throw err("add shape mismatch " + x.str() + " vs " + other.str());
        break;
      }
    }
    values.push_back(y);
  }
  BlockShapes result;
  result.macs = macs;
  for (int id : program.outputs) result.outputs.push_back(values[static_cast<size_t>(id)]);
  return result;
}

}  // namespace

BlockShapes block_shapes(const BlockSpec& spec, std::span<const Shape> inputs) {
  return walk_shapes(expand_block(spec), inputs, &spec);
}

int64_t block_macs(const BlockSpec& spec, std::span<const Shape> inputs) { return block_shapes(spec, inputs).macs; }

int64_t BlockWeights::stored_floats() const {
  int64_t total = 0;
  for (const ConvUnit& u : units) {
    total += u.conv.kernel.numel() + static_cast<int64_t>(u.conv.bias.size() + u.gamma.size() + u.beta.size());
  }
  return total;
}

BlockWeights init_block_weights(const BlockSpec& spec, Rng& rng) {
  const Program program = expand_block(spec);
  BlockWeights weights;
  for (const Step& step : program.steps) {
    if (step.op != StepOp::kConv) continue;
    const ConvStep& c = step.conv;
    ConvUnit unit;
    const int64_t cin_g = c.c_in / c.groups;
    unit.conv.kernel = Tensor(Shape{c.c_out, cin_g, c.k, c.k});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin_g * c.k * c.k));
    for (float& v : unit.conv.kernel.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    unit.conv.stride_h = unit.conv.stride_w = c.stride;
    unit.conv.pad_h = unit.conv.pad_w = c.pad;
    unit.conv.groups = c.groups;
    if (c.bias) {
      unit.conv.bias.resize(static_cast<size_t>(c.c_out));
      for (float& v : unit.conv.bias) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    if (c.bn) {
      unit.gamma.resize(static_cast<size_t>(c.c_out));
      unit.beta.resize(static_cast<size_t>(c.c_out));
      for (float& v : unit.gamma) v = static_cast<float>(rng.uniform(0.5, 1.5));
      for (float& v : unit.beta) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    weights.units.push_back(std::move(unit));
  }
  return weights;
}

namespace {

void check_program_weights(const Program& program, const BlockWeights& weights, std::string_view name) {
  auto err = [&](const std::string& what) { return Error(ErrorKind::kBlock, std::string(name) + ": " + what); };
  const size_t convs = program.count(StepOp::kConv);
  if (weights.units.size() != convs) {
    throw err("expected " + std::to_string(convs) + " conv units, got " + std::to_string(weights.units.size()));
  }
  size_t u = 0;
  for (const Step& step : program.steps) {
    if (step.op != StepOp::kConv) continue;
    const ConvStep& c = step.conv;
    const ConvUnit& unit = weights.units[u];
    const Shape want{c.c_out, c.c_in / c.groups, c.k, c.k};
    if (unit.conv.kernel.shape() != want) {
      throw err("conv unit " + std::to_string(u) + " kernel " + unit.conv.kernel.shape().str() + ", expected " +
                want.str());
    }
    if (unit.conv.groups != c.groups || unit.conv.stride_h != c.stride || unit.conv.stride_w != c.stride ||
        unit.conv.pad_h != c.pad || unit.conv.pad_w != c.pad) {
      throw err("conv unit " + std::to_string(u) + " stride/padding/groups mismatch");
    }
    const size_t nb = c.bias ? static_cast<size_t>(c.c_out) : 0;
    const size_t nbn = c.bn ? static_cast<size_t>(c.c_out) : 0;
    if (unit.conv.bias.size() != nb || unit.gamma.size() != nbn || unit.beta.size() != nbn) {
      throw err("conv unit " + std::to_string(u) + " bias/batch-norm length mismatch");
    }
    ++u;
  }
}

}  // namespace

void check_block_weights(const BlockSpec& spec, const BlockWeights& weights) {
  check_program_weights(expand_block(spec), weights, kind_name(spec.kind));
}

std::vector<Tensor> run_program(const Program& program, const BlockWeights& weights, std::span<const Tensor> inputs) {
  if (static_cast<int>(inputs.size()) != program.num_inputs) {
    throw Error(ErrorKind::kShape, "program expects " + std::to_string(program.num_inputs) + " inputs, got " +
                                       std::to_string(inputs.size()));
  }
  check_program_weights(program, weights, "program");
  std::vector<Tensor> produced;
  produced.reserve(program.steps.size());
  auto value = [&](int id) -> const Tensor& {
    return id < program.num_inputs ? inputs[static_cast<size_t>(id)]
                                   : produced[static_cast<size_t>(id - program.num_inputs)];
  };
  size_t unit = 0;
  for (const Step& step : program.steps) {
    const Tensor& x = value(step.inputs.front());
    switch (step.op) {
      case StepOp::kConv: {
        const ConvUnit& u = weights.units[unit++];
        if (x.c() != step.conv.c_in) {
          throw Error(ErrorKind::kShape, "conv expects " + std::to_string(step.conv.c_in) +
                                             " input channels, got " + std::to_string(x.c()));
        }
        Tensor y = conv2d(x, u.conv);
        if (step.conv.bn) y = channel_affine(y, u.gamma, u.beta);
        if (step.conv.act) y = silu(y);
        produced.push_back(std::move(y));
        break;
      }
      case StepOp::kMaxPool:
        produced.push_back(maxpool2d(x, step.pool_k, step.pool_stride, step.pool_pad));
        break;
      case StepOp::kUpsample:
        produced.push_back(upsample_nearest2x(x));
        break;
      case StepOp::kConcat: {
        std::vector<Tensor> parts;
        parts.reserve(step.inputs.size());
        for (int id : step.inputs) parts.push_back(value(id));
        produced.push_back(concat_channels(parts));
        break;
      }
      case StepOp::kSlice:
        produced.push_back(slice_channels(x, step.lo, step.hi));
        break;
      case StepOp::kAdd:
        produced.push_back(add(x, value(step.inputs[1])));
        break;
    }
  }
  std::vector<Tensor> outs;
  for (int id : program.outputs) outs.push_back(value(id));
  return outs;
}

std::vector<Tensor> block_forward(const BlockSpec& spec, const BlockWeights& weights, std::span<const Tensor> inputs) {
  const Program program = expand_block(spec);
  for (size_t i = 0; i < inputs.size() && i < spec.c_in.size(); ++i) {
    if (inputs[i].c() != spec.c_in[i]) {
      throw Error(ErrorKind::kShape, std::string(kind_name(spec.kind)) + ": input " + std::to_string(i) + " has " +
                                         std::to_string(inputs[i].c()) + " channels, expected " +
                                         std::to_string(spec.c_in[i]));
    }
  }
  return run_program(program, weights, inputs);
}

}  // namespace lightyolo
