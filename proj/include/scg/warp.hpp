#pragma once

#include <cmath>
#include <vector>

#include <Eigen/SparseCore>

#include "scg/tensor.hpp"

namespace scg {

template <typename Scalar>
using SparseOperator = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

/// Rotation by `angle` about (center_x, center_y) followed by a shift.
/// Forward map on points: p' = R(p - c) + c + shift, with R the usual
/// counter-clockwise rotation acting on (x, y) pixel coordinates.
struct RigidMotion {
  double angle = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

/// Bilinear resampling of a height x width grid under `motion`, as a sparse
/// (sites x sites) operator acting on row-major flattened planes. Each output
/// site pulls from the inverse-mapped source point; samples outside the grid
/// read zero.
template <typename Scalar>
SparseOperator<Scalar> bilinear_operator(Index height, Index width, const RigidMotion& motion) {
  const double c = std::cos(motion.angle), s = std::sin(motion.angle);
  std::vector<Eigen::Triplet<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(4 * height * width));
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) {
      const double dx = double(x) - motion.center_x - motion.shift_x;
      const double dy = double(y) - motion.center_y - motion.shift_y;
      const double sx = c * dx + s * dy + motion.center_x;
      const double sy = -s * dx + c * dy + motion.center_y;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double ax = sx - fx0, ay = sy - fy0;
      const Index x0 = Index(fx0), y0 = Index(fy0);
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const Index xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const Index ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int n = 0; n < 4; ++n) {
        if (wts[n] == 0.0) continue;
        if (xs[n] < 0 || xs[n] >= width || ys[n] < 0 || ys[n] >= height) continue;
        entries.emplace_back(y * width + x, ys[n] * width + xs[n], Scalar(wts[n]));
      }
    }
  SparseOperator<Scalar> op(height * width, height * width);
  op.setFromTriplets(entries.begin(), entries.end());
  return op;
}

/// Applies `op` to every channel plane of an image.
template <typename Scalar>
ImageTensor<Scalar> apply_planes(const SparseOperator<Scalar>& op,
                                 const ImageTensor<Scalar>& image) {
  ImageTensor<Scalar> out(image.channels(), image.height(), image.width());
  const Index n = image.plane_size();
  for (Index c = 0; c < image.channels(); ++c)
    out.data().segment(c * n, n) = op * image.data().segment(c * n, n);
  return out;
}

/// I' = L_delta(I): rotation by r_theta about the image center, then
/// translation by (t_x, t_y); bilinear, zero exterior.
template <typename Scalar>
ImageTensor<Scalar> warp(const ImageTensor<Scalar>& image, const TransformParams& delta) {
  if (image.empty()) throw PreconditionError("warp: empty image");
  if (delta.is_identity()) return image;
  RigidMotion m;
  m.angle = delta.r_theta;
  m.center_x = 0.5 * double(image.width() - 1);
  m.center_y = 0.5 * double(image.height() - 1);
  m.shift_x = delta.t_x;
  m.shift_y = delta.t_y;
  return apply_planes(bilinear_operator<Scalar>(image.height(), image.width(), m), image);
}

} // namespace scg
