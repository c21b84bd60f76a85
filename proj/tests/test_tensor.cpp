#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "lightyolo/error.hpp"
#include "lightyolo/tensor.hpp"
#include "lightyolo/tensor_io.hpp"
#include "support/oracles.hpp"

namespace ly = lightyolo;
using ly::Shape;
using ly::Tensor;

namespace {

Tensor random_tensor(Shape s, ly::Rng& rng) {
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

}  // namespace

TEST(Tensor, ConstructorChecksLength) {
  EXPECT_THROW(Tensor(Shape{1, 2, 2, 2}, std::vector<float>(7)), ly::Error);
  Tensor t(Shape{1, 2, 2, 2}, std::vector<float>(8, 1.5f));
  EXPECT_EQ(t.numel(), 8);
  EXPECT_EQ(t.at(0, 1, 1, 1), 1.5f);
}

TEST(Conv2d, OneByOneAllOnesSumsChannels) {
  Tensor x(Shape{1, 3, 2, 2});
  for (int c = 0; c < 3; ++c) {
    for (float& v : x.plane(0, c)) v = static_cast<float>(c + 1);
  }
  ly::ConvWeights w;
  w.kernel = Tensor(Shape{1, 3, 1, 1}, 1.0f);
  const Tensor y = ly::conv2d(x, w);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 6.0f);
}

TEST(Conv2d, MatchesDirectOracleOnRandomCases) {
  ly::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto c = oracle::random_conv_case(rng, i);
    const Tensor got = ly::conv2d(c.input, c.weights);
    const Tensor want = oracle::direct_conv2d(c.input, c.weights);
    ASSERT_EQ(got.shape(), want.shape()) << "case " << i;
    EXPECT_LE(oracle::max_rel_diff(got, want), 1e-6) << "case " << i;
  }
}

TEST(Conv2d, DepthwiseKeepsChannelsSeparate) {
  ly::Rng rng(3);
  Tensor x = random_tensor({1, 4, 5, 5}, rng);
  ly::ConvWeights w;
  w.groups = 4;
  w.pad_h = w.pad_w = 1;
  w.kernel = Tensor({4, 1, 3, 3});
  // Identity kernel on channel 2 only.
  w.kernel.at(2, 0, 1, 1) = 1.0f;
  const Tensor y = ly::conv2d(x, w);
  for (int64_t h = 0; h < 5; ++h) {
    for (int64_t ww = 0; ww < 5; ++ww) {
      EXPECT_EQ(y.at(0, 2, h, ww), x.at(0, 2, h, ww));
      EXPECT_EQ(y.at(0, 0, h, ww), 0.0f);
    }
  }
}

TEST(Conv2d, ShapeErrorsAreStructured) {
  Tensor x({1, 3, 4, 4});
  ly::ConvWeights w;
  w.kernel = Tensor({2, 2, 3, 3});
  try {
    ly::conv2d(x, w);
    FAIL() << "expected a shape error";
  } catch (const ly::Error& e) {
    EXPECT_EQ(e.kind(), ly::ErrorKind::kShape);
  }
  w.kernel = Tensor({4, 1, 3, 3});
  w.groups = 3;
  EXPECT_THROW(ly::conv2d(x, w), ly::Error);
  w.kernel = Tensor({2, 3, 5, 5});
  w.groups = 1;
  EXPECT_THROW(ly::conv2d(x, w), ly::Error);
}

TEST(Conv2d, OutputDimFormula) {
  EXPECT_EQ(ly::conv_out_dim(640, 6, 2, 2), 320);
  EXPECT_EQ(ly::conv_out_dim(80, 3, 2, 1), 40);
  EXPECT_EQ(ly::conv_out_dim(7, 1, 1, 0), 7);
}

TEST(MaxPool, MatchesBruteForceAndIgnoresPadding) {
  ly::Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const int s = 1 + static_cast<int>(rng.below(2));
    const int p = static_cast<int>(rng.below(static_cast<uint64_t>(k / 2 + 1)));
    const int64_t h = k + static_cast<int64_t>(rng.below(6));
    Tensor x = random_tensor({1, 2, h, h + 1}, rng);
    for (float& v : x.data()) v -= 5.0f;  // all negative: a zero pad would win
    const Tensor y = ly::maxpool2d(x, k, s, p);
    for (int64_t c = 0; c < 2; ++c) {
      for (int64_t oy = 0; oy < y.h(); ++oy) {
        for (int64_t ox = 0; ox < y.w(); ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const int64_t iy = oy * s - p + dy;
              const int64_t ix = ox * s - p + dx;
              if (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w()) best = std::max(best, x.at(0, c, iy, ix));
            }
          }
          ASSERT_EQ(y.at(0, c, oy, ox), best);
        }
      }
    }
  }
}

TEST(MaxPool, SppfWindowKeepsShape) {
  Tensor x({1, 1, 20, 20});
  EXPECT_EQ(ly::maxpool2d(x, 5, 1, 2).shape(), (Shape{1, 1, 20, 20}));
}

TEST(Upsample, IndexMapping) {
  ly::Rng rng(5);
  const Tensor x = random_tensor({2, 3, 3, 4}, rng);
  const Tensor y = ly::upsample_nearest2x(x);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 6, 8}));
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t i = 0; i < 6; ++i) {
        for (int64_t j = 0; j < 8; ++j) EXPECT_EQ(y.at(n, c, i, j), x.at(n, c, i / 2, j / 2));
      }
    }
  }
}

TEST(Silu, KnownValues) {
  Tensor x({1, 1, 1, 3}, std::vector<float>{1.0f, 0.0f, -1.0f});
  const Tensor y = ly::silu(x);
  EXPECT_NEAR(y.data()[0], 0.7310585786, 1e-7);
  EXPECT_EQ(y.data()[1], 0.0f);
  EXPECT_NEAR(y.data()[2], -0.2689414214, 1e-7);
}

TEST(Silu, StaysFiniteForLargeInputs) {
  Tensor x({1, 1, 1, 4}, std::vector<float>{-1e30f, -100.0f, 100.0f, 1e30f});
  for (float v : ly::silu(x).data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ChannelAffine, PerChannel) {
  Tensor x({1, 2, 1, 2}, std::vector<float>{1, 2, 3, 4});
  const std::vector<float> g{2, -1};
  const std::vector<float> b{0.5f, 1};
  const Tensor y = ly::channel_affine(x, g, b);
  EXPECT_EQ(y.data()[0], 2.5f);
  EXPECT_EQ(y.data()[1], 4.5f);
  EXPECT_EQ(y.data()[2], -2.0f);
  EXPECT_EQ(y.data()[3], -3.0f);
}

TEST(Concat, LaysOutPartsInOrder) {
  Tensor a({1, 2, 1, 1}, std::vector<float>{1, 2});
  Tensor b({1, 1, 1, 1}, std::vector<float>{3});
  const Tensor parts[] = {a, b};
  const Tensor y = ly::concat_channels(parts);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 1, 1}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3}));
  Tensor bad({1, 1, 2, 1});
  const Tensor mismatch[] = {a, bad};
  EXPECT_THROW(ly::concat_channels(mismatch), ly::Error);
}

TEST(Slice, InvertsConcat) {
  ly::Rng rng(9);
  const Tensor a = random_tensor({2, 3, 4, 4}, rng);
  const Tensor b = random_tensor({2, 5, 4, 4}, rng);
  const Tensor parts[] = {a, b};
  const Tensor cat = ly::concat_channels(parts);
  EXPECT_EQ(ly::slice_channels(cat, 0, 3), a);
  EXPECT_EQ(ly::slice_channels(cat, 3, 8), b);
  EXPECT_THROW(ly::slice_channels(cat, 4, 9), ly::Error);
  EXPECT_THROW(ly::slice_channels(cat, 5, 4), ly::Error);
}

TEST(Add, RequiresSameShape) {
  Tensor a({1, 1, 1, 2}, std::vector<float>{1, 2});
  EXPECT_EQ(ly::add(a, a).data()[1], 4.0f);
  EXPECT_THROW(ly::add(a, Tensor({1, 2, 1, 1})), ly::Error);
}

TEST(TensorIo, RoundTripIsBitExact) {
  ly::Rng rng(1);
  Tensor t = random_tensor({2, 3, 4, 5}, rng);
  t.data()[0] = -0.0f;
  t.data()[1] = std::numeric_limits<float>::denorm_min();
  std::stringstream ss;
  ly::write_tensor(ss, t);
  EXPECT_EQ(ss.str().size(), 6u + 4u + 16u + 4u * 120u);
  const Tensor back = ly::read_tensor(ss);
  ASSERT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), t.data().size_bytes()), 0);
}

TEST(TensorIo, EmptyTensorRoundTrips) {
  Tensor t({0, 3, 4, 4});
  std::stringstream ss;
  ly::write_tensor(ss, t);
  EXPECT_EQ(ly::read_tensor(ss).shape(), (Shape{0, 3, 4, 4}));
}

TEST(TensorIo, HeaderIsLittleEndian) {
  Tensor t({1, 1, 1, 1}, std::vector<float>{1.0f});
  std::stringstream ss;
  ly::write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 6), "FTNSR1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 4);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[29]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[28]), 0x80);
}

TEST(TensorIo, RejectsCorruptInput) {
  std::stringstream bad_magic("FTNSR2xxxxxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(ly::read_tensor(bad_magic), ly::Error);

  Tensor t({1, 1, 2, 2}, 1.0f);
  std::stringstream ss;
  ly::write_tensor(ss, t);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  try {
    ly::read_tensor(truncated);
    FAIL() << "expected truncation error";
  } catch (const ly::Error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }

  std::string huge = bytes.substr(0, 10);
  for (int i = 0; i < 4; ++i) huge += std::string("\xff\xff\x00\x00", 4);
  std::stringstream overflow(huge);
  EXPECT_THROW(ly::read_tensor(overflow), ly::Error);
}
