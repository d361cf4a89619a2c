#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "scg/conv.hpp"
#include "scg/warp.hpp"

using namespace scg;

namespace {

ImageTensor<double> random_image(Index c, Index h, Index w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ImageTensor<double> img(c, h, w);
  for (Index i = 0; i < img.data().size(); ++i) img.data()[i] = u(rng);
  return img;
}

KernelBank<double> random_bank(Index k, Index l, Index K, Index c, Index s, std::mt19937_64& rng) {
  return KernelBank<double>::random(k, l, K, c, s, rng);
}

FeatureMap<double> random_features(Index k, Index l, Index h, Index w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap<double> f(k, l, h, w, 0, 0);
  for (Index i = 0; i < f.data().size(); ++i) f.data().data()[i] = n(rng);
  return f;
}

// Direct quadruple loop, no patch matrices.
double naive_conv(const ImageTensor<double>& img, const KernelBank<double>& bank, Index j,
                  Index oy, Index ox, Index s) {
  const Index K = bank.kernel_side();
  const auto ker = bank.kernel(j);
  double acc = 0;
  for (Index c = 0; c < img.channels(); ++c)
    for (Index ky = 0; ky < K; ++ky)
      for (Index kx = 0; kx < K; ++kx) acc += ker(c, ky, kx) * img(c, oy * s + ky, ox * s + kx);
  return acc;
}

// Direct scatter of every feature value times its kernel.
ImageTensor<double> naive_deconv(const FeatureMap<double>& f, const KernelBank<double>& bank,
                                 Index s, Index out_h, Index out_w) {
  const Index K = bank.kernel_side();
  ImageTensor<double> out(bank.in_channels(), out_h, out_w);
  for (Index j = 0; j < f.channels(); ++j) {
    const auto ker = bank.kernel(j);
    for (Index y = 0; y < f.height(); ++y)
      for (Index x = 0; x < f.width(); ++x)
        for (Index c = 0; c < bank.in_channels(); ++c)
          for (Index ky = 0; ky < K; ++ky)
            for (Index kx = 0; kx < K; ++kx)
              out(c, y * s + ky, x * s + kx) += f(j, y, x) * ker(c, ky, kx);
  }
  return out;
}

} // namespace

TEST(Conv2d, ZeroKernelGivesZero) {
  ImageTensor<double> img(1, 3, 3);
  img.data().setLinSpaced(9, 1.0, 9.0);
  KernelBank<double> bank(1, 1, 3, 1, 1);
  const auto f = conv2d(img, bank, 1);
  ASSERT_EQ(f.height(), 1);
  ASSERT_EQ(f.width(), 1);
  EXPECT_EQ(f(0, 0, 0), 0.0);
}

TEST(Conv2d, CenterDeltaPicksCenterPixel) {
  ImageTensor<double> img(1, 3, 3);
  img.data().setLinSpaced(9, 1.0, 9.0);
  KernelBank<double> bank(1, 1, 3, 1, 1);
  bank.weights()(0, 4) = 1.0;
  EXPECT_EQ(conv2d(img, bank, 1)(0, 0, 0), 5.0);
}

TEST(Conv2d, MatchesNaiveLoopStride2) {
  std::mt19937_64 rng(7);
  const auto img = random_image(1, 8, 8, rng);
  const auto bank = random_bank(1, 4, 3, 1, 2, rng);
  const auto f = conv2d(img, bank, 2);
  ASSERT_EQ(f.height(), 3);
  ASSERT_EQ(f.width(), 3);
  for (Index j = 0; j < 4; ++j)
    for (Index y = 0; y < 3; ++y)
      for (Index x = 0; x < 3; ++x) EXPECT_NEAR(f(j, y, x), naive_conv(img, bank, j, y, x, 2), 1e-6);
}

TEST(Conv2d, ShapeErrors) {
  ImageTensor<double> img(1, 4, 4);
  EXPECT_THROW(conv2d(img, KernelBank<double>(1, 1, 5, 1, 1), 1), ShapeError);
  EXPECT_THROW(conv2d(img, KernelBank<double>(1, 1, 3, 2, 1), 1), ShapeError);
  EXPECT_THROW(conv2d(img, KernelBank<double>(1, 1, 3, 1, 1), 0), PreconditionError);
  try {
    conv2d(img, KernelBank<double>(1, 1, 3, 3, 1), 1);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Conv2d, Linearity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_image(2, 9, 9, rng), b = random_image(2, 9, 9, rng);
    const auto bank = random_bank(2, 3, 3, 2, 2, rng);
    const double ca = u(rng), cb = u(rng);
    ImageTensor<double> mix(2, 9, 9, ca * a.data() + cb * b.data());
    const RowMatrix<double> lhs = conv2d(mix, bank, 2).data();
    const RowMatrix<double> rhs = ca * conv2d(a, bank, 2).data() + cb * conv2d(b, bank, 2).data();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Deconv2d, ZeroFeaturesGiveZeroImage) {
  std::mt19937_64 rng(3);
  const auto bank = random_bank(2, 2, 3, 1, 2, rng);
  FeatureMap<double> f(2, 2, 3, 3, 0, 0);
  const auto img = deconv2d(f, bank, 2);
  EXPECT_EQ(img.height(), 7);
  EXPECT_EQ(img.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Deconv2d, ImpulseStampsKernel) {
  std::mt19937_64 rng(5);
  const auto bank = random_bank(1, 3, 3, 1, 2, rng);
  FeatureMap<double> f(1, 3, 3, 3, 0, 0);
  f(2, 1, 2) = 1.0;
  const auto img = deconv2d(f, bank, 2);
  const auto ker = bank.kernel(2);
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x) {
      const Index ky = y - 2, kx = x - 4;
      const double expect = (ky >= 0 && ky < 3 && kx >= 0 && kx < 3) ? ker(0, ky, kx) : 0.0;
      EXPECT_EQ(img(0, y, x), expect);
    }
}

TEST(Deconv2d, MatchesNaiveScatter) {
  std::mt19937_64 rng(9);
  const auto bank = random_bank(2, 2, 3, 2, 2, rng);
  const auto f = random_features(2, 2, 4, 3, rng);
  const auto img = deconv2d(f, bank, 2, 10, 8);
  const auto ref = naive_deconv(f, bank, 2, 10, 8);
  EXPECT_LT((img.data() - ref.data()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Deconv2d, RejectsBadShapes) {
  std::mt19937_64 rng(1);
  const auto bank = random_bank(1, 2, 3, 1, 2, rng);
  FeatureMap<double> f(1, 3, 2, 2, 0, 0);
  EXPECT_THROW(deconv2d(f, bank, 2), ShapeError);
  FeatureMap<double> g(1, 2, 2, 2, 0, 0);
  EXPECT_THROW(deconv2d(g, bank, 2, 9, 5), ShapeError);
}

// <conv(I, W), F> = <I, deconv(F, W)>, including images whose last rows are
// not covered by any window.
TEST(Deconv2d, AdjointPropertyRandomized) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> side(5, 14), ksz(1, 5), strd(1, 3), chans(1, 3), cnt(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const Index c = chans(rng), h = side(rng), w = side(rng), s = strd(rng);
    const Index K = std::min<Index>(ksz(rng), std::min(h, w));
    const auto bank = random_bank(cnt(rng), cnt(rng), K, c, s, rng);
    const auto img = random_image(c, h, w, rng);
    const auto fwd = conv2d(img, bank, s);
    const auto f = random_features(bank.modules(), bank.module_len(), fwd.height(), fwd.width(), rng);
    const double lhs = inner(fwd, f);
    const double rhs = inner(img, deconv2d(f, bank, s, h, w));
    EXPECT_LE(std::abs(lhs - rhs), 1e-5 * std::max(1.0, std::abs(lhs))) << "trial " << trial;
  }
}

TEST(Warp, IdentityIsBitExact) {
  std::mt19937_64 rng(4);
  const auto img = random_image(2, 7, 9, rng).cast<float>();
  const auto out = warp(img, TransformParams{});
  EXPECT_TRUE((out.data().array() == img.data().array()).all());
}

TEST(Warp, IntegerShiftMatchesShiftOracle) {
  std::mt19937_64 rng(6);
  const auto img = random_image(1, 10, 12, rng);
  const auto out = warp(img, TransformParams(3, 0, 0));
  for (Index y = 0; y < 10; ++y)
    for (Index x = 0; x < 12; ++x) {
      const double expect = x - 3 >= 0 ? img(0, y, x - 3) : 0.0;
      EXPECT_EQ(out(0, y, x), expect);
    }
  const auto down = warp(img, TransformParams(0, -2, 0));
  for (Index y = 0; y < 10; ++y)
    for (Index x = 0; x < 12; ++x) EXPECT_EQ(down(0, y, x), y + 2 < 10 ? img(0, y + 2, x) : 0.0);
}

TEST(Warp, HalfTurnOfCentrallySymmetricImage) {
  std::mt19937_64 rng(8);
  auto img = random_image(1, 9, 8, rng);
  for (Index y = 0; y < 9; ++y)
    for (Index x = 0; x < 8; ++x) img(0, 8 - y, 7 - x) = img(0, y, x);
  const auto out = warp(img, TransformParams(0, 0, std::numbers::pi));
  EXPECT_LT((out.data() - img.data()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Warp, QuarterTurnRotatesCounterClockwiseInPixelCoordinates) {
  ImageTensor<double> img(1, 5, 5);
  img(0, 2, 4) = 1.0;  // right of center
  const auto out = warp(img, TransformParams(0, 0, std::numbers::pi / 2));
  EXPECT_NEAR(out(0, 4, 2), 1.0, 1e-12);  // (x, y) = (2, 0) -> (0, 2) about center
  EXPECT_NEAR(out.data().sum(), 1.0, 1e-12);
}

TEST(Warp, TranslationComposition) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> shift(-4, 4);
  for (int t = 0; t < 20; ++t) {
    const auto img = random_image(1, 12, 12, rng);
    const int a = shift(rng), b = shift(rng);
    const auto two = warp(warp(img, TransformParams(a, 0, 0)), TransformParams(b, 0, 0));
    const auto one = warp(img, TransformParams(a + b, 0, 0));
    // Composition agrees wherever the intermediate shift did not push the
    // source column out of the frame.
    for (Index y = 0; y < 12; ++y)
      for (Index x = 0; x < 12; ++x) {
        const Index mid = x - b;
        if (mid < 0 || mid >= 12) continue;
        EXPECT_NEAR(two(0, y, x), one(0, y, x), 1e-5);
      }
  }
}

TEST(Warp, BilinearOperatorRowsArePartitionOfUnityInside) {
  RigidMotion m;
  m.angle = 0.37;
  m.center_x = 4.5;
  m.center_y = 4.5;
  m.shift_x = 0.3;
  const auto op = bilinear_operator<double>(10, 10, m);
  // Center pixel samples well inside the frame.
  EXPECT_NEAR(op.row(5 * 10 + 5).sum(), 1.0, 1e-12);
}
