#include "lightyolo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lightyolo/error.hpp"
#include "parallel.hpp"

namespace lightyolo {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw Error(ErrorKind::kShape, "negative dimension in shape " + shape.str());
  }
  data_.assign(static_cast<size_t>(shape.numel()), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw Error(ErrorKind::kShape, "negative dimension in shape " + shape.str());
  }
  if (static_cast<int64_t>(data_.size()) != shape.numel()) {
    throw Error(ErrorKind::kShape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                       shape.str());
  }
}

void ConvWeights::validate() const {
  if (groups < 1) throw Error(ErrorKind::kInvalidArgument, "conv groups must be >= 1");
  if (stride_h < 1 || stride_w < 1) throw Error(ErrorKind::kInvalidArgument, "conv stride must be >= 1");
  if (pad_h < 0 || pad_w < 0) throw Error(ErrorKind::kInvalidArgument, "conv padding must be >= 0");
  if (kernel.h() < 1 || kernel.w() < 1) throw Error(ErrorKind::kShape, "conv kernel must be at least 1x1");
  if (kernel.n() % groups != 0) {
    throw Error(ErrorKind::kShape,
                "c_out " + std::to_string(kernel.n()) + " not divisible by groups " + std::to_string(groups));
  }
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != kernel.n()) {
    throw Error(ErrorKind::kShape, "bias length " + std::to_string(bias.size()) + " != c_out " +
                                       std::to_string(kernel.n()));
  }
}

int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  const int64_t span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

Tensor conv2d(const Tensor& input, const ConvWeights& w) {
  w.validate();
  const int64_t groups = w.groups;
  const int64_t c_out = w.c_out();
  const int64_t cin_g = w.kernel.c();
  const int64_t cout_g = c_out / groups;
  const int64_t kh = w.kernel.h();
  const int64_t kw = w.kernel.w();
  if (input.c() != cin_g * groups) {
    throw Error(ErrorKind::kShape, "conv2d: input channels " + std::to_string(input.c()) + " != groups " +
                                       std::to_string(groups) + " x kernel c_in/groups " + std::to_string(cin_g));
  }
  const int64_t oh = conv_out_dim(input.h(), kh, w.stride_h, w.pad_h);
  const int64_t ow = conv_out_dim(input.w(), kw, w.stride_w, w.pad_w);
  if (input.numel() > 0 && (oh < 1 || ow < 1)) {
    throw Error(ErrorKind::kShape, "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                       " larger than padded input " + input.shape().str());
  }
  Tensor out(Shape{input.n(), c_out, oh, ow});
  if (out.numel() == 0) return out;

  const int64_t ih = input.h();
  const int64_t iw = input.w();
  const int64_t sh = w.stride_h;
  const int64_t sw = w.stride_w;
  const int64_t ph = w.pad_h;
  const int64_t pw = w.pad_w;
  const float* kdata = w.kernel.data().data();

  // Valid output range for a kernel tap: out index o maps to input o*s - p + t.
  auto valid_range = [](int64_t out_len, int64_t in_len, int64_t s, int64_t p, int64_t t, int64_t& lo, int64_t& hi) {
    // smallest o with o*s - p + t >= 0
    const int64_t need = p - t;
    lo = need <= 0 ? 0 : (need + s - 1) / s;
    // largest o with o*s - p + t <= in_len - 1
    const int64_t top = in_len - 1 + p - t;
    hi = top < 0 ? -1 : std::min(out_len - 1, top / s);
  };

  const int64_t jobs = input.n() * c_out;
  detail::parallel_for(jobs, 4, [&](int64_t job) {
    const int64_t b = job / c_out;
    const int64_t oc = job % c_out;
    const int64_t g = oc / cout_g;
    std::vector<double> acc(static_cast<size_t>(oh * ow), 0.0);
    for (int64_t icg = 0; icg < cin_g; ++icg) {
      const int64_t ic = g * cin_g + icg;
      const float* in_plane = input.plane(b, ic).data();
      for (int64_t ky = 0; ky < kh; ++ky) {
        int64_t y_lo, y_hi;
        valid_range(oh, ih, sh, ph, ky, y_lo, y_hi);
        if (y_lo > y_hi) continue;
        for (int64_t kx = 0; kx < kw; ++kx) {
          int64_t x_lo, x_hi;
          valid_range(ow, iw, sw, pw, kx, x_lo, x_hi);
          if (x_lo > x_hi) continue;
          const double wv = kdata[((oc * cin_g + icg) * kh + ky) * kw + kx];
          if (wv == 0.0) continue;
          for (int64_t y = y_lo; y <= y_hi; ++y) {
            const float* row = in_plane + (y * sh - ph + ky) * iw;
            double* arow = acc.data() + y * ow;
            if (sw == 1) {
              const float* src = row - pw + kx;
              for (int64_t x = x_lo; x <= x_hi; ++x) arow[x] += wv * static_cast<double>(src[x]);
            } else {
              for (int64_t x = x_lo; x <= x_hi; ++x) {
                arow[x] += wv * static_cast<double>(row[x * sw - pw + kx]);
              }
            }
          }
        }
      }
    }
    const double bias = w.bias.empty() ? 0.0 : static_cast<double>(w.bias[static_cast<size_t>(oc)]);
    float* dst = out.plane(b, oc).data();
    for (int64_t i = 0; i < oh * ow; ++i) dst[i] = static_cast<float>(acc[static_cast<size_t>(i)] + bias);
  });
  return out;
}

Tensor maxpool2d(const Tensor& input, int k, int stride, int pad) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "maxpool2d: k must be >= 1");
  if (stride < 1) throw Error(ErrorKind::kInvalidArgument, "maxpool2d: stride must be >= 1");
  if (pad < 0) throw Error(ErrorKind::kInvalidArgument, "maxpool2d: padding must be >= 0");
  const int64_t oh = conv_out_dim(input.h(), k, stride, pad);
  const int64_t ow = conv_out_dim(input.w(), k, stride, pad);
  if (input.numel() > 0 && (oh < 1 || ow < 1)) {
    throw Error(ErrorKind::kShape, "maxpool2d: window larger than padded input " + input.shape().str());
  }
  Tensor out(Shape{input.n(), input.c(), oh, ow});
  for (int64_t b = 0; b < input.n(); ++b) {
    for (int64_t ch = 0; ch < input.c(); ++ch) {
      for (int64_t y = 0; y < oh; ++y) {
        const int64_t y0 = std::max<int64_t>(0, y * stride - pad);
        const int64_t y1 = std::min<int64_t>(input.h(), y * stride - pad + k);
        for (int64_t x = 0; x < ow; ++x) {
          const int64_t x0 = std::max<int64_t>(0, x * stride - pad);
          const int64_t x1 = std::min<int64_t>(input.w(), x * stride - pad + k);
          float m = -std::numeric_limits<float>::infinity();
          for (int64_t yy = y0; yy < y1; ++yy) {
            for (int64_t xx = x0; xx < x1; ++xx) m = std::max(m, input.at(b, ch, yy, xx));
          }
          out.at(b, ch, y, x) = m;
        }
      }
    }
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
  Tensor out(Shape{input.n(), input.c(), input.h() * 2, input.w() * 2});
  for (int64_t b = 0; b < input.n(); ++b) {
    for (int64_t ch = 0; ch < input.c(); ++ch) {
      for (int64_t y = 0; y < out.h(); ++y) {
        for (int64_t x = 0; x < out.w(); ++x) out.at(b, ch, y, x) = input.at(b, ch, y / 2, x / 2);
      }
    }
  }
  return out;
}

Tensor silu(const Tensor& input) {
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) {
    const double x = src[i];
    dst[i] = static_cast<float>(x / (1.0 + std::exp(-x)));
  }
  return out;
}

Tensor channel_affine(const Tensor& input, std::span<const float> gamma, std::span<const float> beta) {
  if (static_cast<int64_t>(gamma.size()) != input.c() || static_cast<int64_t>(beta.size()) != input.c()) {
    throw Error(ErrorKind::kShape, "channel_affine: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                                       std::to_string(beta.size()) + " != channels " + std::to_string(input.c()));
  }
  Tensor out(input.shape());
  for (int64_t b = 0; b < input.n(); ++b) {
    for (int64_t ch = 0; ch < input.c(); ++ch) {
      auto src = input.plane(b, ch);
      auto dst = out.plane(b, ch);
      const float g = gamma[static_cast<size_t>(ch)];
      const float be = beta[static_cast<size_t>(ch)];
      for (size_t i = 0; i < src.size(); ++i) dst[i] = g * src[i] + be;
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::kInvalidArgument, "concat_channels: no inputs");
  const Shape& ref = parts.front().shape();
  int64_t total_c = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (s.n != ref.n || s.h != ref.h || s.w != ref.w) {
      throw Error(ErrorKind::kShape, "concat_channels: part " + std::to_string(i) + " has shape " + s.str() +
                                         ", expected n,h,w of " + ref.str());
    }
    total_c += s.c;
  }
  Tensor out(Shape{ref.n, total_c, ref.h, ref.w});
  for (int64_t b = 0; b < ref.n; ++b) {
    int64_t offset = 0;
    for (const Tensor& part : parts) {
      for (int64_t ch = 0; ch < part.c(); ++ch) {
        auto src = part.plane(b, ch);
        std::copy(src.begin(), src.end(), out.plane(b, offset + ch).begin());
      }
      offset += part.c();
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& input, int64_t lo, int64_t hi) {
  if (lo < 0 || lo >= hi || hi > input.c()) {
    throw Error(ErrorKind::kShape, "slice_channels: range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                       ") invalid for " + std::to_string(input.c()) + " channels");
  }
  Tensor out(Shape{input.n(), hi - lo, input.h(), input.w()});
  for (int64_t b = 0; b < input.n(); ++b) {
    for (int64_t ch = lo; ch < hi; ++ch) {
      auto src = input.plane(b, ch);
      std::copy(src.begin(), src.end(), out.plane(b, ch - lo).begin());
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShape, "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  for (size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  return out;
}

}  // namespace lightyolo
