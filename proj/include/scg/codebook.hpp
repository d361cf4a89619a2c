#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

enum class CodebookInit { identity, random };

/// Sign applied to M_mn(delta)/T inside the soft-argmin. `neg` weights small
/// entries most.
enum class SymSign { neg, pos };

/// Trilinear interpolation stencil over the (t_x, t_y, r_theta) grid: up to
/// 8 nodes, their weights and the weight derivatives with respect to each
/// coordinate of delta.
struct Stencil {
  int size = 0;
  std::array<Index, 8> node{};
  std::array<double, 8> weight{};
  std::array<double, 8> dtx{};
  std::array<double, 8> dty{};
  std::array<double, 8> dr{};
};

/// Per-module grid of l x l prediction matrices indexed by translation and
/// rotation. Storage order is (module, t_x node, t_y node, r node, row, col).
///
/// Translation nodes are spaced uniformly from -stride/2 to +stride/2
/// (both ends included, so delta = 0 is a node when n_t is odd); rotation
/// nodes sit at 2*pi*j/n_r and the rotation axis wraps.
template <typename Scalar>
class Codebook {
public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Codebook() = default;
  Codebook(Index modules, Index module_len, Index grid_t, Index grid_r, double stride)
      : modules_(modules), module_len_(module_len), grid_t_(grid_t), grid_r_(grid_r),
        stride_(stride) {
    if (modules < 1 || module_len < 1 || grid_t < 1 || grid_r < 1)
      throw PreconditionError("Codebook: k, l, n_t, n_r must all be >= 1");
    if (!(stride > 0)) throw PreconditionError("Codebook: stride must be positive");
    matrices_ = Vector<Scalar>::Zero(modules * nodes_per_module() * module_len * module_len);
  }

  Index modules() const { return modules_; }
  Index module_len() const { return module_len_; }
  Index grid_t() const { return grid_t_; }
  Index grid_r() const { return grid_r_; }
  double stride() const { return stride_; }
  Index nodes_per_module() const { return grid_t_ * grid_t_ * grid_r_; }
  Index matrix_size() const { return module_len_ * module_len_; }

  /// When set, off-diagonal entries of every r_theta = 0 node are masked to
  /// zero on read and on gradient accumulation (per-kernel translation
  /// equivariance).
  bool diagonal_translation_slice() const { return diagonal_translation_slice_; }
  void set_diagonal_translation_slice(bool on) {
    diagonal_translation_slice_ = on;
    if (on)
      for (Index i = 0; i < modules_; ++i)
        for (Index a = 0; a < nodes_per_module(); ++a)
          if (rotation_index(a) == 0) mask_offdiagonal(node(i, a));
  }

  Vector<Scalar>& matrices() { return matrices_; }
  const Vector<Scalar>& matrices() const { return matrices_; }

  Index node_index(Index ix, Index iy, Index ir) const {
    return (ix * grid_t_ + iy) * grid_r_ + ir;
  }
  Index rotation_index(Index node) const { return node % grid_r_; }
  Index offset(Index module, Index node) const {
    return (module * nodes_per_module() + node) * matrix_size();
  }

  MatrixMap node(Index module, Index node) {
    return MatrixMap(matrices_.data() + offset(module, node), module_len_, module_len_);
  }
  ConstMatrixMap node(Index module, Index node) const {
    return ConstMatrixMap(matrices_.data() + offset(module, node), module_len_, module_len_);
  }

  double t_node(Index j) const {
    if (grid_t_ == 1) return 0.0;
    return -0.5 * stride_ + double(j) * stride_ / double(grid_t_ - 1);
  }
  double r_node(Index j) const {
    return 2.0 * std::numbers::pi * double(j) / double(grid_r_);
  }
  TransformParams node_delta(Index node) const {
    const Index ir = node % grid_r_;
    const Index iy = (node / grid_r_) % grid_t_;
    const Index ix = node / (grid_r_ * grid_t_);
    TransformParams d;
    d.t_x = t_node(ix);
    d.t_y = t_node(iy);
    d.r_theta = r_node(ir);
    return d;
  }

  double clamp_t(double t) const { return std::clamp(t, -0.5 * stride_, 0.5 * stride_); }

  Stencil stencil(const TransformParams& delta) const {
    struct Axis {
      Index i0, i1;
      double w0, w1, d0, d1;
    };
    auto translation_axis = [&](double t) {
      if (grid_t_ == 1) return Axis{0, 0, 1.0, 0.0, 0.0, 0.0};
      const double half = 0.5 * stride_;
      const double spacing = stride_ / double(grid_t_ - 1);
      const bool inside = t > -half && t < half;
      const double u = snap((clamp_t(t) + half) / spacing);
      const Index i0 = std::min<Index>(Index(std::floor(u)), grid_t_ - 2);
      const double f = u - double(i0);
      const double df = inside ? 1.0 / spacing : 0.0;
      return Axis{i0, i0 + 1, 1.0 - f, f, -df, df};
    };
    auto rotation_axis = [&](double r) {
      if (grid_r_ == 1) return Axis{0, 0, 1.0, 0.0, 0.0, 0.0};
      double u = snap(wrap_angle(r) * double(grid_r_) / (2.0 * std::numbers::pi));
      if (u >= double(grid_r_)) u -= double(grid_r_);
      const double fl = std::floor(u);
      const Index i0 = Index(fl) % grid_r_;
      const double f = u - fl;
      const double df = double(grid_r_) / (2.0 * std::numbers::pi);
      return Axis{i0, (i0 + 1) % grid_r_, 1.0 - f, f, -df, df};
    };
    const Axis ax = translation_axis(delta.t_x);
    const Axis ay = translation_axis(delta.t_y);
    const Axis ar = rotation_axis(delta.r_theta);

    Stencil st;
    const int nx = grid_t_ == 1 ? 1 : 2, ny = nx, nr = grid_r_ == 1 ? 1 : 2;
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < ny; ++b)
        for (int c = 0; c < nr; ++c) {
          const double wx = a ? ax.w1 : ax.w0, dx = a ? ax.d1 : ax.d0;
          const double wy = b ? ay.w1 : ay.w0, dy = b ? ay.d1 : ay.d0;
          const double wr = c ? ar.w1 : ar.w0, dr = c ? ar.d1 : ar.d0;
          const int n = st.size++;
          st.node[n] = node_index(a ? ax.i1 : ax.i0, b ? ay.i1 : ay.i0, c ? ar.i1 : ar.i0);
          st.weight[n] = wx * wy * wr;
          st.dtx[n] = dx * wy * wr;
          st.dty[n] = wx * dy * wr;
          st.dr[n] = wx * wy * dr;
        }
    return st;
  }

  /// Node matrix as seen by lookups (mask applied).
  RowMatrix<Scalar> read_node(Index module, Index node) const {
    RowMatrix<Scalar> m = this->node(module, node);
    if (diagonal_translation_slice_ && rotation_index(node) == 0) mask_offdiagonal(m);
    return m;
  }

  Scalar entry(Index module, Index node, Index m, Index n) const {
    if (diagonal_translation_slice_ && m != n && rotation_index(node) == 0) return Scalar(0);
    return matrices_[offset(module, node) + m * module_len_ + n];
  }

  RowMatrix<Scalar> lookup(Index module, const Stencil& st) const {
    check_module(module);
    RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(module_len_, module_len_);
    for (int n = 0; n < st.size; ++n) {
      if (st.weight[n] == 0.0) continue;
      if (st.weight[n] == 1.0) return read_node(module, st.node[n]);
      out += Scalar(st.weight[n]) * read_node(module, st.node[n]);
    }
    return out;
  }

  /// M^(i)(delta) by trilinear interpolation; t is clamped to the grid range
  /// and r_theta wraps modulo 2*pi.
  RowMatrix<Scalar> lookup(Index module, const TransformParams& delta) const {
    return lookup(module, stencil(delta));
  }

  /// Scatters a gradient with respect to an interpolated matrix onto the grid
  /// nodes of `st` inside `grad` (same layout as matrices()).
  template <typename Derived>
  void accumulate(Vector<Scalar>& grad, Index module, const Stencil& st,
                  const Eigen::MatrixBase<Derived>& d_matrix) const {
    for (int n = 0; n < st.size; ++n) {
      if (st.weight[n] == 0.0) continue;
      Eigen::Map<RowMatrix<Scalar>> g(grad.data() + offset(module, st.node[n]), module_len_,
                                      module_len_);
      g += Scalar(st.weight[n]) * d_matrix;
      if (diagonal_translation_slice_ && rotation_index(st.node[n]) == 0) mask_offdiagonal(g);
    }
  }

  /// Zeroes gradient entries that the translation-slice mask pins.
  void mask_gradient(Vector<Scalar>& grad) const {
    if (!diagonal_translation_slice_) return;
    for (Index i = 0; i < modules_; ++i)
      for (Index a = 0; a < nodes_per_module(); a += grid_r_) {
        Eigen::Map<RowMatrix<Scalar>> g(grad.data() + offset(i, a), module_len_, module_len_);
        mask_offdiagonal(g);
      }
  }

  template <typename Other>
  Codebook<Other> cast() const {
    Codebook<Other> out(modules_, module_len_, grid_t_, grid_r_, stride_);
    out.matrices() = matrices_.template cast<Other>();
    out.set_diagonal_translation_slice(diagonal_translation_slice_);
    return out;
  }

  void check_module(Index module) const {
    if (module < 0 || module >= modules_)
      throw IndexError("Codebook: module index " + std::to_string(module) + " out of range [0, " +
                       std::to_string(modules_) + ")");
  }

private:
  // Grid coordinates within 1e-9 of a node are treated as on the node, so
  // node parameters reconstructed in floating point hit it exactly.
  static double snap(double u) {
    const double r = std::round(u);
    return std::abs(u - r) < 1e-9 ? r : u;
  }

  template <typename M>
  static void mask_offdiagonal(M&& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        if (r != c) m(r, c) = Scalar(0);
  }

  Index modules_ = 0;
  Index module_len_ = 0;
  Index grid_t_ = 0;
  Index grid_r_ = 0;
  double stride_ = 1.0;
  bool diagonal_translation_slice_ = false;
  Vector<Scalar> matrices_;
};

/// identity: I_l + noise*N(0,1) at every node; random: N(0, 1/l).
template <typename Scalar, typename Rng>
Codebook<Scalar> new_codebook(Index modules, Index module_len, Index grid_t, Index grid_r,
                              double stride, CodebookInit init, Rng& rng, double noise = 0.01) {
  Codebook<Scalar> cb(modules, module_len, grid_t, grid_r, stride);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = init == CodebookInit::identity ? noise : 1.0 / std::sqrt(double(module_len));
  for (Index i = 0; i < cb.matrices().size(); ++i) {
    const Index within = i % cb.matrix_size();
    const bool diagonal = within / module_len == within % module_len;
    const double base = (init == CodebookInit::identity && diagonal) ? 1.0 : 0.0;
    cb.matrices()[i] = Scalar(sd == 0.0 ? base : base + sd * normal(rng));
  }
  return cb;
}

/// Softmax over grid nodes of +-M_mn(node)/T for entry (m, n) of module
/// i. `prob` holds the node weights; cos_mean/sin_mean the weighted resultant.
struct SoftArgmin {
  TransformParams delta;
  std::vector<double> prob;
  double cos_mean = 0.0;
  double sin_mean = 0.0;
  bool degenerate = false;
};

template <typename Scalar>
SoftArgmin soft_argmin_detail(const Codebook<Scalar>& cb, Index module, Index m, Index n,
                              double temperature, SymSign sign = SymSign::neg) {
  cb.check_module(module);
  if (m < 0 || n < 0 || m >= cb.module_len() || n >= cb.module_len())
    throw IndexError("soft_argmin_delta: entry (" + std::to_string(m) + ", " + std::to_string(n) +
                     ") out of range");
  if (!(temperature > 0)) throw PreconditionError("soft_argmin_delta: temperature must be > 0");
  const Index nodes = cb.nodes_per_module();
  const double sgn = sign == SymSign::neg ? -1.0 : 1.0;
  SoftArgmin out;
  out.prob.resize(static_cast<std::size_t>(nodes));
  double top = -std::numeric_limits<double>::infinity();
  for (Index a = 0; a < nodes; ++a) {
    const double v = sgn * double(cb.entry(module, a, m, n)) / temperature;
    out.prob[a] = v;
    top = std::max(top, v);
  }
  double total = 0.0;
  for (double& p : out.prob) total += (p = std::exp(p - top));
  double tx = 0.0, ty = 0.0;
  for (Index a = 0; a < nodes; ++a) {
    double& p = out.prob[a];
    p /= total;
    const TransformParams d = cb.node_delta(a);
    tx += p * d.t_x;
    ty += p * d.t_y;
    out.cos_mean += p * std::cos(d.r_theta);
    out.sin_mean += p * std::sin(d.r_theta);
  }
  out.delta.t_x = cb.clamp_t(tx);
  out.delta.t_y = cb.clamp_t(ty);
  out.degenerate = std::hypot(out.cos_mean, out.sin_mean) < 1e-8;
  out.delta.r_theta = out.degenerate ? 0.0 : wrap_angle(std::atan2(out.sin_mean, out.cos_mean));
  return out;
}

/// delta*_mn: softmax-weighted mean of grid node parameters, with a circular
/// (resultant-vector) mean on the rotation axis.
template <typename Scalar>
TransformParams soft_argmin_delta(const Codebook<Scalar>& cb, Index module, Index m, Index n,
                                  double temperature, SymSign sign = SymSign::neg) {
  return soft_argmin_detail(cb, module, m, n, temperature, sign).delta;
}

} // namespace scg
