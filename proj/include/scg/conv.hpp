#pragma once

#include <string>

#include "scg/kernel_bank.hpp"
#include "scg/tensor.hpp"

namespace scg {

/// Valid-padding geometry of a strided convolution.
struct ConvGeometry {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  Index kernel = 0;
  Index stride = 1;

  Index out_height() const { return (height - kernel) / stride + 1; }
  Index out_width() const { return (width - kernel) / stride + 1; }
  Index patch_size() const { return channels * kernel * kernel; }
  Index sites() const { return out_height() * out_width(); }

  void validate() const {
    if (stride < 1) throw PreconditionError("conv: stride must be >= 1");
    if (kernel > height || kernel > width)
      throw ShapeError("conv: kernel side " + std::to_string(kernel) + " exceeds image " +
                       std::to_string(height) + "x" + std::to_string(width));
  }
};

/// Patch matrix with one column per output site; row (c*K + ky)*K + kx.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
im2col(const ImageTensor<Scalar>& image, Index kernel, Index stride) {
  const ConvGeometry g{image.channels(), image.height(), image.width(), kernel, stride};
  g.validate();
  const Index oh = g.out_height(), ow = g.out_width();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cols(g.patch_size(), oh * ow);
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox) {
      Scalar* col = cols.col(oy * ow + ox).data();
      for (Index c = 0; c < g.channels; ++c)
        for (Index ky = 0; ky < kernel; ++ky) {
          const Scalar* src = &image(c, oy * stride + ky, ox * stride);
          for (Index kx = 0; kx < kernel; ++kx) *col++ = src[kx];
        }
    }
  return cols;
}

/// Adjoint of im2col: scatter-adds patch columns back onto an image of the
/// given geometry. Pixels not covered by any patch stay zero.
template <typename Scalar>
ImageTensor<Scalar> col2im(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cols,
                           const ConvGeometry& g) {
  g.validate();
  const Index oh = g.out_height(), ow = g.out_width();
  if (cols.rows() != g.patch_size() || cols.cols() != oh * ow)
    throw ShapeError("col2im: column matrix is " + std::to_string(cols.rows()) + "x" +
                     std::to_string(cols.cols()) + ", geometry needs " +
                     std::to_string(g.patch_size()) + "x" + std::to_string(oh * ow));
  ImageTensor<Scalar> image(g.channels, g.height, g.width);
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox) {
      Index r = 0;
      const Index site = oy * ow + ox;
      for (Index c = 0; c < g.channels; ++c)
        for (Index ky = 0; ky < g.kernel; ++ky) {
          Scalar* dst = &image(c, oy * g.stride + ky, ox * g.stride);
          for (Index kx = 0; kx < g.kernel; ++kx) dst[kx] += cols(r++, site);
        }
    }
  return image;
}

/// Valid strided convolution (cross-correlation) of `image` with every kernel
/// in `bank`.
template <typename Scalar>
FeatureMap<Scalar> conv2d(const ImageTensor<Scalar>& image, const KernelBank<Scalar>& bank,
                          Index stride) {
  if (bank.in_channels() != image.channels())
    throw ShapeError("conv2d: kernel in_channels " + std::to_string(bank.in_channels()) +
                     " != image channels " + std::to_string(image.channels()));
  const ConvGeometry g{image.channels(), image.height(), image.width(), bank.kernel_side(),
                       stride};
  g.validate();
  RowMatrix<Scalar> out = bank.weights() * im2col(image, bank.kernel_side(), stride);
  return FeatureMap<Scalar>(bank.modules(), bank.module_len(), g.out_height(), g.out_width(),
                            image.height(), image.width(), std::move(out));
}

/// Transposed convolution sharing the encoder kernels: the exact adjoint of
/// conv2d onto an out_height x out_width image. Zero sizes select the minimal
/// output (H'-1)*stride + K.
template <typename Scalar>
ImageTensor<Scalar> deconv2d(const FeatureMap<Scalar>& features, const KernelBank<Scalar>& bank,
                             Index stride, Index out_height = 0, Index out_width = 0) {
  if (features.channels() != bank.kernel_count())
    throw ShapeError("deconv2d: feature channels " + std::to_string(features.channels()) +
                     " != kernel count " + std::to_string(bank.kernel_count()));
  if (stride < 1) throw PreconditionError("deconv2d: stride must be >= 1");
  const Index K = bank.kernel_side();
  const Index min_h = (features.height() - 1) * stride + K;
  const Index min_w = (features.width() - 1) * stride + K;
  if (out_height == 0) out_height = min_h;
  if (out_width == 0) out_width = min_w;
  if (out_height < min_h || out_height >= min_h + stride || out_width < min_w ||
      out_width >= min_w + stride)
    throw ShapeError("deconv2d: output " + std::to_string(out_height) + "x" +
                     std::to_string(out_width) + " incompatible with feature grid " +
                     std::to_string(features.height()) + "x" + std::to_string(features.width()));
  const ConvGeometry g{bank.in_channels(), out_height, out_width, K, stride};
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cols =
      bank.weights().transpose() * features.data();
  return col2im(cols, g);
}

} // namespace scg
