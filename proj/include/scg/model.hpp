#pragma once

#include <cmath>
#include <string>

#include "scg/codebook.hpp"
#include "scg/conv.hpp"
#include "scg/kernel_bank.hpp"
#include "scg/warp.hpp"

namespace scg {

enum class ConstraintVariant {
  per_module_transrot,
  /// Each kernel is additionally its own translation-equivariant unit: the
  /// r_theta = 0 codebook slice is diagonal.
  per_kernel_trans_plus_module_transrot,
};

struct ModelConfig {
  Index modules = 8;
  Index module_len = 8;
  Index kernel_side = 9;
  Index stride = 2;
  Index in_channels = 1;
  ConstraintVariant variant = ConstraintVariant::per_module_transrot;

  void validate() const {
    if (modules < 1 || module_len < 1 || kernel_side < 1 || stride < 1 || in_channels < 1)
      throw PreconditionError("ModelConfig: all counts must be >= 1");
  }
};

/// f = I * W. Purely linear: no bias, no nonlinearity.
template <typename Scalar>
FeatureMap<Scalar> encode(const KernelBank<Scalar>& bank, const ImageTensor<Scalar>& image) {
  return conv2d(image, bank, bank.stride());
}

/// f (*) W with the encoder's kernels, back onto the size of the encoded image.
template <typename Scalar>
ImageTensor<Scalar> decode(const KernelBank<Scalar>& bank, const FeatureMap<Scalar>& features) {
  if (features.modules() != bank.modules() || features.module_len() != bank.module_len())
    throw ShapeError("decode: feature partition " + std::to_string(features.modules()) + "x" +
                     std::to_string(features.module_len()) + " != bank partition " +
                     std::to_string(bank.modules()) + "x" + std::to_string(bank.module_len()));
  return deconv2d(features, bank, bank.stride(), features.image_height(), features.image_width());
}

/// How an image-space transform acts on a feature grid: a spatial resampling
/// (whole-cell shift plus rotation) shared by all channels, and the sub-stride
/// residual that indexes the codebook.
template <typename Scalar>
struct FeatureMotion {
  TransformParams residual;
  Index shift_x = 0;
  Index shift_y = 0;
  bool identity_spatial = true;
  SparseOperator<Scalar> spatial;
};

/// Splits delta into whole feature-cell shifts round(t/s) and a residual
/// t - s*round(t/s) in [-s/2, s/2). The grid is rotated about the feature
/// coordinate that the image center maps to, so the spatial part is the image
/// transform conjugated onto the stride-s grid.
template <typename Scalar>
FeatureMotion<Scalar> feature_motion(const KernelBank<Scalar>& bank, Index grid_h, Index grid_w,
                                     Index image_h, Index image_w, const TransformParams& delta) {
  const double s = double(bank.stride());
  FeatureMotion<Scalar> fm;
  const double nx = std::floor(delta.t_x / s + 0.5);
  const double ny = std::floor(delta.t_y / s + 0.5);
  fm.shift_x = Index(nx);
  fm.shift_y = Index(ny);
  fm.residual.t_x = delta.t_x - nx * s;
  fm.residual.t_y = delta.t_y - ny * s;
  fm.residual.r_theta = delta.r_theta;
  fm.identity_spatial = fm.shift_x == 0 && fm.shift_y == 0 && delta.r_theta == 0.0;
  if (!fm.identity_spatial) {
    const double offset = 0.5 * double(bank.kernel_side() - 1);
    RigidMotion m;
    m.angle = delta.r_theta;
    m.center_x = (0.5 * double(image_w - 1) - offset) / s;
    m.center_y = (0.5 * double(image_h - 1) - offset) / s;
    m.shift_x = nx;
    m.shift_y = ny;
    fm.spatial = bilinear_operator<Scalar>(grid_h, grid_w, m);
  }
  return fm;
}

template <typename Scalar>
FeatureMotion<Scalar> feature_motion(const KernelBank<Scalar>& bank,
                                     const FeatureMap<Scalar>& features,
                                     const TransformParams& delta) {
  return feature_motion(bank, features.height(), features.width(), features.image_height(),
                        features.image_width(), delta);
}

/// Spatial part only: every channel resampled by the feature motion.
template <typename Scalar>
RowMatrix<Scalar> apply_spatial(const FeatureMotion<Scalar>& fm, const RowMatrix<Scalar>& data) {
  if (fm.identity_spatial) return data;
  return data * fm.spatial.transpose();
}

/// Adjoint of apply_spatial.
template <typename Scalar>
RowMatrix<Scalar> apply_spatial_adjoint(const FeatureMotion<Scalar>& fm,
                                        const RowMatrix<Scalar>& data) {
  if (fm.identity_spatial) return data;
  return data * fm.spatial;
}

/// P_delta f: spatial warp of the feature grid, then M^(i)(delta_res) mixing
/// the l channels of module i at every site.
template <typename Scalar>
FeatureMap<Scalar> predict_features(const KernelBank<Scalar>& bank, const Codebook<Scalar>& cb,
                                    const FeatureMap<Scalar>& features,
                                    const TransformParams& delta) {
  if (features.modules() != cb.modules() || features.module_len() != cb.module_len() ||
      features.modules() != bank.modules() || features.module_len() != bank.module_len())
    throw ShapeError("predict_features: partition mismatch between features, bank and codebook");
  const FeatureMotion<Scalar> fm = feature_motion(bank, features, delta);
  const RowMatrix<Scalar> moved = apply_spatial(fm, features.data());
  const Stencil st = cb.stencil(fm.residual);
  FeatureMap<Scalar> out = features.zeros_like();
  const Index l = features.module_len();
  for (Index i = 0; i < features.modules(); ++i)
    out.module(i).noalias() = cb.lookup(i, st) * moved.middleRows(i * l, l);
  return out;
}

/// Feature grid size produced by encoding an image_h x image_w image.
template <typename Scalar>
std::pair<Index, Index> feature_grid(const KernelBank<Scalar>& bank, Index image_h,
                                     Index image_w) {
  const ConvGeometry g{bank.in_channels(), image_h, image_w, bank.kernel_side(), bank.stride()};
  g.validate();
  return {g.out_height(), g.out_width()};
}

/// All-zero feature map except 1 at (module i, channel m, site).
template <typename Scalar>
FeatureMap<Scalar> probe_onehot(const KernelBank<Scalar>& bank, Index image_h, Index image_w,
                                Index module, Index m, Index site_y, Index site_x) {
  const auto [gh, gw] = feature_grid(bank, image_h, image_w);
  if (module < 0 || module >= bank.modules())
    throw IndexError("probe_onehot: module " + std::to_string(module) + " out of range");
  if (m < 0 || m >= bank.module_len())
    throw IndexError("probe_onehot: channel " + std::to_string(m) + " out of range");
  if (site_y < 0 || site_y >= gh || site_x < 0 || site_x >= gw)
    throw IndexError("probe_onehot: site (" + std::to_string(site_y) + ", " +
                     std::to_string(site_x) + ") outside " + std::to_string(gh) + "x" +
                     std::to_string(gw) + " grid");
  FeatureMap<Scalar> f(bank.modules(), bank.module_len(), gh, gw, image_h, image_w);
  f(module * bank.module_len() + m, site_y, site_x) = Scalar(1);
  return f;
}

} // namespace scg
