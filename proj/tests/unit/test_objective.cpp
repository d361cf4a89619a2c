#include <random>

#include <gtest/gtest.h>

#include "scg/objective.hpp"

using namespace scg;

namespace {

struct Instance {
  KernelBank<double> bank;
  Codebook<double> cb;
  ImageTensor<double> image, image_prime;
  TransformParams delta;
};

// k=2, l=4, K=3, 8x8 images, n_t=3, n_r=4.
Instance small_instance(std::uint64_t seed, bool diagonal_slice = false) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.bank = KernelBank<double>::random(2, 4, 3, 1, 2, rng);
  in.cb = new_codebook<double>(2, 4, 3, 4, 2.0, CodebookInit::random, rng);
  in.cb.set_diagonal_translation_slice(diagonal_slice);
  std::uniform_real_distribution<double> u(0, 1), t(-2.4, 2.4), r(0, 6.28);
  in.image = ImageTensor<double>(1, 8, 8);
  for (Index i = 0; i < 64; ++i) in.image.data()[i] = u(rng);
  in.delta = TransformParams(t(rng), t(rng), r(rng));
  in.image_prime = warp(in.image, in.delta);
  return in;
}

template <typename Fn>
double check(const Instance& in, const Vector<double>& analytic, Fn&& loss_of) {
  const Vector<double> p = pack_parameters(in.bank, in.cb);
  auto loss = [&](const Vector<double>& q) {
    KernelBank<double> b = in.bank;
    Codebook<double> c = in.cb;
    unpack_parameters(q, b, c);
    return loss_of(b, c);
  };
  return grad_check<double>(loss, p, analytic, 1e-5, 300, 42).max_rel_error;
}

} // namespace

TEST(ReconLoss, ZeroImagesGiveZero) {
  std::mt19937_64 rng(1);
  const auto bank = KernelBank<double>::random(2, 2, 3, 1, 2, rng);
  ImageTensor<double> z(1, 8, 8);
  const auto r = recon_loss(bank, z, z);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.grad.d_weights.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ReconLoss, ZeroWeights) {
  auto in = small_instance(2);
  in.bank.weights().setZero();
  const auto r = recon_loss(in.bank, in.image, in.image_prime);
  EXPECT_NEAR(r.value, in.image.data().squaredNorm() + in.image_prime.data().squaredNorm(), 1e-12);
  EXPECT_EQ(r.grad.d_weights.cwiseAbs().maxCoeff(), 0.0);
  const double err = check(in, pack_gradient(r.grad, in.bank, in.cb), [&](auto& b, auto&) {
    return recon_loss(b, in.image, in.image_prime).value;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(ReconLoss, FiniteDifferences) {
  const auto in = small_instance(3);
  const auto r = recon_loss(in.bank, in.image, in.image_prime);
  const double err = check(in, pack_gradient(r.grad, in.bank, in.cb), [&](auto& b, auto&) {
    return recon_loss(b, in.image, in.image_prime).value;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(EquLoss, IdentityCodebookNoMotion) {
  auto in = small_instance(4);
  std::mt19937_64 rng(0);
  in.cb = new_codebook<double>(2, 4, 3, 4, 2.0, CodebookInit::identity, rng, 0.0);
  EXPECT_EQ(equ_loss(in.bank, in.cb, in.image, in.image, TransformParams{}).value, 0.0);
}

TEST(EquLoss, ZeroWeights) {
  auto in = small_instance(5);
  in.bank.weights().setZero();
  EXPECT_EQ(equ_loss(in.bank, in.cb, in.image, in.image_prime, in.delta).value, 0.0);
}

TEST(EquLoss, FiniteDifferences) {
  for (std::uint64_t seed : {6, 7, 8}) {
    const auto in = small_instance(seed);
    const auto e = equ_loss(in.bank, in.cb, in.image, in.image_prime, in.delta);
    const double err = check(in, pack_gradient(e.grad, in.bank, in.cb), [&](auto& b, auto& c) {
      return equ_loss(b, c, in.image, in.image_prime, in.delta).value;
    });
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(EquLoss, MaskedSliceReceivesNoGradient) {
  const auto in = small_instance(9, true);
  const auto e = equ_loss(in.bank, in.cb, in.image, in.image_prime, TransformParams(0.3, -0.2, 0));
  for (Index i = 0; i < 2; ++i)
    for (Index a = 0; a < in.cb.nodes_per_module(); a += in.cb.grid_r())
      for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < 4; ++c)
          if (r != c) {
            EXPECT_EQ(e.grad.d_codebook[in.cb.offset(i, a) + r * 4 + c], 0.0);
          }
}

TEST(SymLoss, ExactSymmetryGivesZero) {
  // Node r=0 is the identity, node r=pi the swap; with the positive sign each
  // (m, n) selects the node whose column n is e_m.
  Codebook<double> cb(1, 2, 1, 2, 2.0);
  cb.node(0, 0) << 1, 0, 0, 1;
  cb.node(0, 1) << 0, 1, 1, 0;
  ObjectiveConfig cfg;
  cfg.temperature = 0.01;
  cfg.sym_sign = SymSign::pos;
  EXPECT_LT(sym_loss(cb, cfg).value, 1e-20);
}

TEST(SymLoss, IdentityCodebookClosedForm) {
  std::mt19937_64 rng(0);
  for (Index l : {1, 2, 4, 8}) {
    const Index k = 3;
    const auto cb = new_codebook<double>(k, l, 5, 16, 2.0, CodebookInit::identity, rng, 0.0);
    for (double T : {0.01, 0.1, 10.0}) {
      ObjectiveConfig cfg;
      cfg.temperature = T;
      EXPECT_EQ(sym_loss(cb, cfg).value, double(2 * k * l * (l - 1))) << "l=" << l << " T=" << T;
    }
  }
}

TEST(SymLoss, FiniteDifferencesStoppedGradient) {
  std::mt19937_64 rng(10);
  const auto cb = new_codebook<double>(1, 2, 3, 4, 2.0, CodebookInit::random, rng);
  ObjectiveConfig cfg;
  cfg.temperature = 0.5;
  const auto frozen = sym_deltas(cb, cfg);
  const auto s = sym_loss(cb, cfg);
  auto loss = [&](const Vector<double>& q) {
    Codebook<double> c = cb;
    c.matrices() = q;
    return sym_loss(c, cfg, &frozen).value;
  };
  EXPECT_LT(grad_check<double>(loss, cb.matrices(), s.grad.d_codebook, 1e-5).max_rel_error, 1e-4);
}

TEST(SymLoss, FiniteDifferencesFullGradient) {
  for (auto sign : {SymSign::neg, SymSign::pos}) {
    std::mt19937_64 rng(11);
    const auto cb = new_codebook<double>(1, 2, 3, 4, 2.0, CodebookInit::random, rng);
    ObjectiveConfig cfg;
    cfg.temperature = 0.5;
    cfg.sym_sign = sign;
    cfg.sym_full_grad = true;
    const auto s = sym_loss(cb, cfg);
    auto loss = [&](const Vector<double>& q) {
      Codebook<double> c = cb;
      c.matrices() = q;
      return sym_loss(c, cfg).value;
    };
    EXPECT_LT(grad_check<double>(loss, cb.matrices(), s.grad.d_codebook, 1e-6).max_rel_error, 1e-4);
  }
}

TEST(TotalLoss, AblationReducesToRecon) {
  const auto in = small_instance(12);
  ObjectiveConfig cfg;
  cfg.lambda1 = cfg.lambda2 = 0;
  const auto t = total_loss(in.bank, in.cb, in.image, in.image_prime, in.delta, cfg);
  EXPECT_EQ(t.breakdown.total, t.breakdown.recon);
  EXPECT_EQ(t.grad.d_codebook.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(t.breakdown.equ, 0.0);
}

TEST(TotalLoss, ZeroInputsGiveZero) {
  KernelBank<double> bank(1, 1, 3, 1, 2);
  Codebook<double> cb(1, 1, 3, 4, 2.0);
  cb.matrices().setOnes();
  ImageTensor<double> z(1, 8, 8);
  const auto t = total_loss(bank, cb, z, z, TransformParams(1, 1, 1), ObjectiveConfig{});
  EXPECT_EQ(t.breakdown.total, 0.0);
}

TEST(TotalLoss, BreakdownIdentityAndAdditivity) {
  const auto in = small_instance(13);
  ObjectiveConfig cfg;
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 0.1;
  const auto t = total_loss(in.bank, in.cb, in.image, in.image_prime, in.delta, cfg);
  const auto& b = t.breakdown;
  EXPECT_NEAR(b.total, b.recon + b.lambda1 * b.equ + b.lambda2 * b.sym, 1e-6);
  const auto r = recon_loss(in.bank, in.image, in.image_prime);
  const auto e = equ_loss(in.bank, in.cb, in.image, in.image_prime, in.delta);
  const auto s = sym_loss(in.cb, cfg);
  GradientSet<double> sum = GradientSet<double>::zeros(in.bank, &in.cb);
  sum.add_scaled(r.grad, 1.0);
  sum.add_scaled(e.grad, 1.0);
  sum.add_scaled(s.grad, 0.1);
  EXPECT_LT((sum.d_weights - t.grad.d_weights).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((sum.d_codebook - t.grad.d_codebook).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GE(b.recon, 0.0);
  EXPECT_GE(b.equ, 0.0);
  EXPECT_GE(b.sym, 0.0);
}

TEST(TotalLoss, FiniteDifferences) {
  for (bool full : {false, true}) {
    const auto in = small_instance(14);
    ObjectiveConfig cfg;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = 0.1;
    cfg.sym_full_grad = full;
    // Through delta*, the softmax tails at T = 0.1 produce gradients near the
    // 1e-8 floor that double-precision differences cannot resolve.
    if (full) cfg.temperature = 0.5;
    const auto t = total_loss(in.bank, in.cb, in.image, in.image_prime, in.delta, cfg);
    const auto frozen = sym_deltas(in.cb, cfg);
    const double err = check(in, pack_gradient(t.grad, in.bank, in.cb), [&](auto& b, auto& c) {
      return recon_loss(b, in.image, in.image_prime).value +
             equ_loss(b, c, in.image, in.image_prime, in.delta).value +
             0.1 * sym_loss(c, cfg, full ? nullptr : &frozen).value;
    });
    EXPECT_LT(err, 1e-4) << (full ? "full" : "stopped");
  }
}

TEST(GradCheck, QuadraticIsExact) {
  Vector<double> p = Vector<double>::LinSpaced(300, -1, 1);
  auto loss = [](const Vector<double>& q) { return q.squaredNorm(); };
  EXPECT_LT(grad_check<double>(loss, p, 2.0 * p, 1e-3).max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsScaledGradient) {
  Vector<double> p = Vector<double>::LinSpaced(300, 0.1, 1);
  auto loss = [](const Vector<double>& q) { return q.squaredNorm(); };
  EXPECT_NEAR(grad_check<double>(loss, p, 4.0 * p, 1e-3).max_rel_error, 0.5, 1e-6);
}

TEST(GradCheck, NonFiniteLossIsNumericError) {
  Vector<double> p = Vector<double>::Ones(4);
  auto loss = [](const Vector<double>&) { return std::nan(""); };
  EXPECT_THROW(grad_check<double>(loss, p, p, 1e-3), NumericError);
}
