#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "scg/model.hpp"

namespace scg {

struct ObjectiveConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double temperature = 0.1;
  SymSign sym_sign = SymSign::neg;
  /// Differentiate through delta* (softmax and circular mean) instead of
  /// treating it as a constant.
  bool sym_full_grad = false;
};

/// Gradients shaped like the parameters. An empty d_codebook stands for zero.
template <typename Scalar>
struct GradientSet {
  RowMatrix<Scalar> d_weights;
  Vector<Scalar> d_codebook;

  static GradientSet zeros(const KernelBank<Scalar>& bank, const Codebook<Scalar>* cb = nullptr) {
    GradientSet g;
    g.d_weights = RowMatrix<Scalar>::Zero(bank.weights().rows(), bank.weights().cols());
    if (cb) g.d_codebook = Vector<Scalar>::Zero(cb->matrices().size());
    return g;
  }

  void add_scaled(const GradientSet& o, Scalar a) {
    if (o.d_weights.size()) {
      if (!d_weights.size()) d_weights = RowMatrix<Scalar>::Zero(o.d_weights.rows(), o.d_weights.cols());
      d_weights += a * o.d_weights;
    }
    if (o.d_codebook.size()) {
      if (!d_codebook.size()) d_codebook = Vector<Scalar>::Zero(o.d_codebook.size());
      d_codebook += a * o.d_codebook;
    }
  }

  bool all_finite() const { return d_weights.allFinite() && d_codebook.allFinite(); }
};

template <typename Scalar>
struct LossTerm {
  Scalar value = 0;
  GradientSet<Scalar> grad;
};

struct LossBreakdown {
  double recon = 0;
  double equ = 0;
  double sym = 0;
  double total = 0;
  double lambda1 = 0;
  double lambda2 = 0;
  double temperature = 0;
};

namespace detail {

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
void check_pair(const KernelBank<Scalar>& bank, const ImageTensor<Scalar>& a,
                const ImageTensor<Scalar>& b) {
  if (!a.same_shape(b)) throw ShapeError("loss: I and I' shapes differ");
  if (a.channels() != bank.in_channels())
    throw ShapeError("loss: image channels " + std::to_string(a.channels()) +
                     " != bank in_channels " + std::to_string(bank.in_channels()));
}

/// ||(I*W) (*) W - I||^2 with its W-gradient added into d_weights. W enters
/// twice (encoder and decoder), hence two terms.
template <typename Scalar>
Scalar recon_single(const KernelBank<Scalar>& bank, const ImageTensor<Scalar>& image,
                    RowMatrix<Scalar>& d_weights) {
  const Index K = bank.kernel_side(), s = bank.stride();
  const ColMatrix<Scalar> patches = im2col(image, K, s);
  const RowMatrix<Scalar> f = bank.weights() * patches;
  const ColMatrix<Scalar> back = bank.weights().transpose() * f;
  ImageTensor<Scalar> residual =
      col2im(back, ConvGeometry{image.channels(), image.height(), image.width(), K, s});
  residual.data() -= image.data();
  const ColMatrix<Scalar> g = Scalar(2) * im2col(residual, K, s);
  d_weights.noalias() += f * g.transpose();
  const RowMatrix<Scalar> wg = bank.weights() * g;
  d_weights.noalias() += wg * patches.transpose();
  return residual.data().squaredNorm();
}

/// Column n of the interpolated matrix M^(i)(stencil).
template <typename Scalar>
Vector<Scalar> lookup_column(const Codebook<Scalar>& cb, Index module, const Stencil& st,
                             Index n) {
  const Index l = cb.module_len();
  Vector<Scalar> col = Vector<Scalar>::Zero(l);
  for (int a = 0; a < st.size; ++a) {
    if (st.weight[a] == 0.0) continue;
    for (Index r = 0; r < l; ++r) col[r] += Scalar(st.weight[a]) * cb.entry(module, st.node[a], r, n);
  }
  return col;
}

} // namespace detail

/// L_recon = ||f (*) W - I||^2 + ||f' (*) W - I'||^2.
template <typename Scalar>
LossTerm<Scalar> recon_loss(const KernelBank<Scalar>& bank, const ImageTensor<Scalar>& image,
                            const ImageTensor<Scalar>& image_prime) {
  detail::check_pair(bank, image, image_prime);
  LossTerm<Scalar> out;
  out.grad = GradientSet<Scalar>::zeros(bank);
  out.value = detail::recon_single(bank, image, out.grad.d_weights) +
              detail::recon_single(bank, image_prime, out.grad.d_weights);
  return out;
}

/// L_equ = sum_i ||f'^(i) - P_delta f^(i)||^2 with P_delta from predict_features.
/// Gradients reach W through both f and f', and the codebook through the
/// interpolation nodes of delta's residual.
template <typename Scalar>
LossTerm<Scalar> equ_loss(const KernelBank<Scalar>& bank, const Codebook<Scalar>& cb,
                          const ImageTensor<Scalar>& image, const ImageTensor<Scalar>& image_prime,
                          const TransformParams& delta) {
  detail::check_pair(bank, image, image_prime);
  if (cb.modules() != bank.modules() || cb.module_len() != bank.module_len())
    throw ShapeError("equ_loss: codebook partition does not match kernel bank");
  const Index K = bank.kernel_side(), s = bank.stride(), l = bank.module_len();
  const detail::ColMatrix<Scalar> p = im2col(image, K, s);
  const detail::ColMatrix<Scalar> pp = im2col(image_prime, K, s);
  const RowMatrix<Scalar> f = bank.weights() * p;
  const RowMatrix<Scalar> fp = bank.weights() * pp;
  const auto [gh, gw] = feature_grid(bank, image.height(), image.width());
  const FeatureMotion<Scalar> fm =
      feature_motion(bank, gh, gw, image.height(), image.width(), delta);
  const RowMatrix<Scalar> z = apply_spatial(fm, f);
  const Stencil st = cb.stencil(fm.residual);

  LossTerm<Scalar> out;
  out.grad = GradientSet<Scalar>::zeros(bank, &cb);
  RowMatrix<Scalar> residual = fp;
  RowMatrix<Scalar> dz(z.rows(), z.cols());
  for (Index i = 0; i < bank.modules(); ++i) {
    const RowMatrix<Scalar> m = cb.lookup(i, st);
    residual.middleRows(i * l, l).noalias() -= m * z.middleRows(i * l, l);
    const RowMatrix<Scalar> d_pred = Scalar(-2) * residual.middleRows(i * l, l);
    cb.accumulate(out.grad.d_codebook, i, st, d_pred * z.middleRows(i * l, l).transpose());
    dz.middleRows(i * l, l).noalias() = m.transpose() * d_pred;
  }
  out.value = residual.squaredNorm();
  const RowMatrix<Scalar> df = apply_spatial_adjoint(fm, dz);
  out.grad.d_weights.noalias() += (Scalar(2) * residual) * pp.transpose();
  out.grad.d_weights.noalias() += df * p.transpose();
  return out;
}

/// delta*_mn for every (module, m, n), in that nesting order.
template <typename Scalar>
std::vector<TransformParams> sym_deltas(const Codebook<Scalar>& cb, const ObjectiveConfig& cfg) {
  std::vector<TransformParams> out;
  out.reserve(static_cast<std::size_t>(cb.modules() * cb.matrix_size()));
  for (Index i = 0; i < cb.modules(); ++i)
    for (Index m = 0; m < cb.module_len(); ++m)
      for (Index n = 0; n < cb.module_len(); ++n)
        out.push_back(soft_argmin_delta(cb, i, m, n, cfg.temperature, cfg.sym_sign));
  return out;
}

/// L_sym = sum_i sum_m sum_n ||e_m - M^(i)(delta*_mn) e_n||^2.
///
/// With `frozen` the given delta* values are used as constants (this is what
/// the stop-gradient analytic gradient differentiates).
template <typename Scalar>
LossTerm<Scalar> sym_loss(const Codebook<Scalar>& cb, const ObjectiveConfig& cfg,
                          const std::vector<TransformParams>* frozen = nullptr) {
  if (!(cfg.temperature > 0)) throw PreconditionError("sym_loss: temperature must be > 0");
  const Index l = cb.module_len();
  const double sgn = cfg.sym_sign == SymSign::neg ? -1.0 : 1.0;
  const bool full = cfg.sym_full_grad && !frozen;
  LossTerm<Scalar> out;
  out.grad.d_codebook = Vector<Scalar>::Zero(cb.matrices().size());
  Vector<Scalar>& grad = out.grad.d_codebook;
  Scalar total = 0;
  std::size_t pair = 0;
  for (Index i = 0; i < cb.modules(); ++i)
    for (Index m = 0; m < l; ++m)
      for (Index n = 0; n < l; ++n, ++pair) {
        SoftArgmin sa;
        if (frozen)
          sa.delta = (*frozen)[pair];
        else
          sa = soft_argmin_detail(cb, i, m, n, cfg.temperature, cfg.sym_sign);
        const Stencil st = cb.stencil(sa.delta);
        Vector<Scalar> residual = -detail::lookup_column(cb, i, st, n);
        residual[m] += Scalar(1);
        total += residual.squaredNorm();
        const Vector<Scalar> g_col = Scalar(-2) * residual;

        for (int a = 0; a < st.size; ++a) {
          if (st.weight[a] == 0.0) continue;
          const Index base = cb.offset(i, st.node[a]);
          const bool masked = cb.diagonal_translation_slice() && cb.rotation_index(st.node[a]) == 0;
          for (Index r = 0; r < l; ++r)
            if (!masked || r == n) grad[base + r * l + n] += Scalar(st.weight[a]) * g_col[r];
        }
        if (!full) continue;

        // Chain through delta* = softmax-weighted node parameters.
        double d_tx = 0, d_ty = 0, d_r = 0;
        for (int a = 0; a < st.size; ++a) {
          double proj = 0;
          for (Index r = 0; r < l; ++r) proj += double(g_col[r]) * double(cb.entry(i, st.node[a], r, n));
          d_tx += st.dtx[a] * proj;
          d_ty += st.dty[a] * proj;
          d_r += st.dr[a] * proj;
        }
        const double c = sa.cos_mean, s = sa.sin_mean, rr = c * c + s * s;
        for (Index b = 0; b < cb.nodes_per_module(); ++b) {
          if (cb.diagonal_translation_slice() && m != n && cb.rotation_index(b) == 0) continue;
          const TransformParams nb = cb.node_delta(b);
          const double k = sgn / cfg.temperature * sa.prob[b];
          double d = d_tx * k * (nb.t_x - sa.delta.t_x) + d_ty * k * (nb.t_y - sa.delta.t_y);
          if (!sa.degenerate) {
            const double dc = k * (std::cos(nb.r_theta) - c);
            const double ds = k * (std::sin(nb.r_theta) - s);
            d += d_r * (c * ds - s * dc) / rr;
          }
          grad[cb.offset(i, b) + m * l + n] += Scalar(d);
        }
      }
  out.value = total;
  return out;
}

template <typename Scalar>
struct TotalLoss {
  LossBreakdown breakdown;
  GradientSet<Scalar> grad;
};

/// L_EC = L_recon + lambda1 L_equ + lambda2 L_sym and the matching weighted
/// gradient. Terms with a zero weight contribute their value to the
/// breakdown but nothing to the gradient.
template <typename Scalar>
TotalLoss<Scalar> total_loss(const KernelBank<Scalar>& bank, const Codebook<Scalar>& cb,
                             const ImageTensor<Scalar>& image,
                             const ImageTensor<Scalar>& image_prime, const TransformParams& delta,
                             const ObjectiveConfig& cfg) {
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0)
    throw PreconditionError("total_loss: lambda1 and lambda2 must be >= 0");
  TotalLoss<Scalar> out;
  out.grad = GradientSet<Scalar>::zeros(bank, &cb);
  const LossTerm<Scalar> rec = recon_loss(bank, image, image_prime);
  const LossTerm<Scalar> equ = equ_loss(bank, cb, image, image_prime, delta);
  const LossTerm<Scalar> sym = sym_loss(cb, cfg);
  out.grad.add_scaled(rec.grad, Scalar(1));
  if (cfg.lambda1 != 0) out.grad.add_scaled(equ.grad, Scalar(cfg.lambda1));
  if (cfg.lambda2 != 0) out.grad.add_scaled(sym.grad, Scalar(cfg.lambda2));
  LossBreakdown& b = out.breakdown;
  b.recon = double(rec.value);
  b.equ = double(equ.value);
  b.sym = double(sym.value);
  b.lambda1 = cfg.lambda1;
  b.lambda2 = cfg.lambda2;
  b.temperature = cfg.temperature;
  b.total = b.recon + b.lambda1 * b.equ + b.lambda2 * b.sym;
  return out;
}

/// Parameters flattened as [weights (row-major), codebook matrices].
template <typename Scalar>
Vector<Scalar> pack_parameters(const KernelBank<Scalar>& bank, const Codebook<Scalar>& cb) {
  Vector<Scalar> p(bank.weights().size() + cb.matrices().size());
  p.head(bank.weights().size()) = bank.weights().template reshaped<Eigen::RowMajor>();
  p.tail(cb.matrices().size()) = cb.matrices();
  return p;
}

template <typename Scalar>
void unpack_parameters(const Vector<Scalar>& p, KernelBank<Scalar>& bank, Codebook<Scalar>& cb) {
  const Index nw = bank.weights().size();
  if (p.size() != nw + cb.matrices().size())
    throw ShapeError("unpack_parameters: length mismatch");
  bank.weights().template reshaped<Eigen::RowMajor>() = p.head(nw);
  cb.matrices() = p.tail(cb.matrices().size());
}

template <typename Scalar>
Vector<Scalar> pack_gradient(const GradientSet<Scalar>& g, const KernelBank<Scalar>& bank,
                             const Codebook<Scalar>& cb) {
  Vector<Scalar> p = Vector<Scalar>::Zero(bank.weights().size() + cb.matrices().size());
  if (g.d_weights.size()) p.head(bank.weights().size()) = g.d_weights.template reshaped<Eigen::RowMajor>();
  if (g.d_codebook.size()) p.tail(cb.matrices().size()) = g.d_codebook;
  return p;
}

struct GradCheckResult {
  double max_rel_error = 0;
  Index worst_coordinate = -1;
  double worst_analytic = 0;
  double worst_numeric = 0;
  Index checked = 0;
};

/// Central-difference check of `analytic` against `loss(params)` on a random
/// subsample of at least `min_coords` coordinates (all of them if fewer).
/// Relative error is |a - fd| / max(|a|, |fd|, 1e-8).
template <typename Scalar, typename LossFn>
GradCheckResult grad_check(LossFn&& loss, Vector<Scalar> params, const Vector<Scalar>& analytic,
                           double epsilon, Index min_coords = 200, std::uint64_t seed = 0) {
  if (!(epsilon > 0)) throw PreconditionError("grad_check: epsilon must be > 0");
  if (analytic.size() != params.size())
    throw ShapeError("grad_check: gradient and parameter lengths differ");
  std::vector<Index> coords(static_cast<std::size_t>(params.size()));
  std::iota(coords.begin(), coords.end(), Index(0));
  if (Index(coords.size()) > min_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(min_coords));
  }
  GradCheckResult res;
  for (Index j : coords) {
    const Scalar saved = params[j];
    params[j] = saved + Scalar(epsilon);
    const Scalar up = Scalar(loss(params));
    params[j] = saved - Scalar(epsilon);
    const Scalar down = Scalar(loss(params));
    params[j] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite loss while probing coordinate " +
                         std::to_string(j));
    // Difference in Scalar so extended-precision losses keep their digits.
    const double fd = double((up - down) / Scalar(2.0 * epsilon));
    const double a = double(analytic[j]);
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    ++res.checked;
    if (rel > res.max_rel_error || res.worst_coordinate < 0) {
      res.max_rel_error = std::max(res.max_rel_error, rel);
      if (rel >= res.max_rel_error) {
        res.worst_coordinate = j;
        res.worst_analytic = a;
        res.worst_numeric = fd;
      }
    }
  }
  return res;
}

} // namespace scg
