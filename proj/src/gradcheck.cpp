#include "scg/gradcheck.hpp"

#include <chrono>

namespace scg {

namespace {
// x87 extended precision: roundoff in the differenced losses sits well below
// the smallest gradients a random instance produces.
using Real = long double;
} // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& gc, const ObjectiveConfig& obj,
                              ConstraintVariant variant) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(gc.seed);
  const auto bank = KernelBank<Real>::random(gc.modules, gc.module_len, gc.kernel_side, 1,
                                               gc.stride, rng);
  auto cb = new_codebook<Real>(gc.modules, gc.module_len, gc.grid_t, gc.grid_r,
                                 double(gc.stride), CodebookInit::random, rng);
  cb.set_diagonal_translation_slice(variant ==
                                    ConstraintVariant::per_kernel_trans_plus_module_transrot);
  std::uniform_real_distribution<double> u(0, 1);
  ImageTensor<Real> image(1, gc.image_side, gc.image_side);
  for (Index i = 0; i < image.data().size(); ++i) image.data()[i] = u(rng);
  AugConfig aug;
  const TransformParams delta = sample_delta(gc.image_side, aug, rng);
  const ImageTensor<Real> image_prime = warp(image, delta);

  ObjectiveConfig frozen_cfg = obj;
  frozen_cfg.sym_full_grad = false;
  const auto frozen = sym_deltas(cb, frozen_cfg);
  const Vector<Real> p = pack_parameters(bank, cb);

  auto check = [&](const std::string& name, const GradientSet<Real>& g, auto&& loss_of) {
    auto loss = [&](const Vector<Real>& q) {
      KernelBank<Real> b = bank;
      Codebook<Real> c = cb;
      unpack_parameters(q, b, c);
      return loss_of(b, c);
    };
    return TermCheck{name, grad_check<Real>(loss, p, pack_gradient(g, bank, cb), gc.epsilon,
                                              gc.coordinates, gc.seed)};
  };

  GradcheckReport rep;
  rep.terms.push_back(check("recon", recon_loss(bank, image, image_prime).grad,
                            [&](auto& b, auto&) { return recon_loss(b, image, image_prime).value; }));
  rep.terms.push_back(check("equ", equ_loss(bank, cb, image, image_prime, delta).grad,
                            [&](auto& b, auto& c) {
                              return equ_loss(b, c, image, image_prime, delta).value;
                            }));
  rep.terms.push_back(check("sym", sym_loss(cb, frozen_cfg).grad,
                            [&](auto&, auto& c) { return sym_loss(c, frozen_cfg, &frozen).value; }));
  rep.terms.push_back(check(
      "total", total_loss(bank, cb, image, image_prime, delta, frozen_cfg).grad,
      [&](auto& b, auto& c) {
        return recon_loss(b, image, image_prime).value +
               obj.lambda1 * equ_loss(b, c, image, image_prime, delta).value +
               obj.lambda2 * sym_loss(c, frozen_cfg, &frozen).value;
      }));
  for (const auto& t : rep.terms) rep.max_rel_error = std::max(rep.max_rel_error, t.result.max_rel_error);
  rep.passed = rep.max_rel_error < gc.tolerance;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

} // namespace scg
