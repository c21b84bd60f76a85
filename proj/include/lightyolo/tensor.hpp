#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lightyolo {

struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense NCHW float tensor. Storage is row-major with w fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  int64_t n() const { return shape_.n; }
  int64_t c() const { return shape_.c; }
  int64_t h() const { return shape_.h; }
  int64_t w() const { return shape_.w; }
  int64_t numel() const { return shape_.numel(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }

  // Contiguous h*w plane for (n, c).
  std::span<float> plane(int64_t n, int64_t c) {
    return std::span<float>(data_).subspan(static_cast<size_t>((n * shape_.c + c) * shape_.h * shape_.w),
                                           static_cast<size_t>(shape_.h * shape_.w));
  }
  std::span<const float> plane(int64_t n, int64_t c) const {
    return std::span<const float>(data_).subspan(
        static_cast<size_t>((n * shape_.c + c) * shape_.h * shape_.w), static_cast<size_t>(shape_.h * shape_.w));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Kernel is (c_out, c_in / groups, k_h, k_w); bias is empty or length c_out.
struct ConvWeights {
  Tensor kernel;
  std::vector<float> bias;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int groups = 1;

  int64_t c_out() const { return kernel.n(); }
  int64_t c_in() const { return kernel.c() * groups; }
  void validate() const;
};

int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad);

// Cross-correlation with zero padding. Each output element is accumulated in
// double over (input channel, kernel row, kernel column) in ascending order.
Tensor conv2d(const Tensor& input, const ConvWeights& w);

// Padded cells never win the max.
Tensor maxpool2d(const Tensor& input, int k, int stride, int pad);

Tensor upsample_nearest2x(const Tensor& input);

Tensor silu(const Tensor& input);

// Per-channel y = gamma * x + beta (inference-form batch norm).
Tensor channel_affine(const Tensor& input, std::span<const float> gamma, std::span<const float> beta);

Tensor concat_channels(std::span<const Tensor> parts);

Tensor slice_channels(const Tensor& input, int64_t lo, int64_t hi);

Tensor add(const Tensor& a, const Tensor& b);

}  // namespace lightyolo
