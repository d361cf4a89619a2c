#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "scg/errors.hpp"

namespace scg {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense (channels, height, width) image with row-major (c, y, x) storage.
template <typename Scalar>
class ImageTensor {
public:
  using PlaneMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const RowMatrix<Scalar>>;

  ImageTensor() = default;
  ImageTensor(Index channels, Index height, Index width)
      : channels_(channels), height_(height), width_(width),
        data_(Vector<Scalar>::Zero(channels * height * width)) {
    if (channels < 0 || height < 0 || width < 0)
      throw ShapeError("ImageTensor: negative extent");
  }
  ImageTensor(Index channels, Index height, Index width, Vector<Scalar> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != channels * height * width)
      throw ShapeError("ImageTensor: data length " + std::to_string(data_.size()) +
                       " != channels*height*width " +
                       std::to_string(channels * height * width));
  }

  Index channels() const { return channels_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index plane_size() const { return height_ * width_; }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(Index c, Index y, Index x) { return data_[(c * height_ + y) * width_ + x]; }
  const Scalar& operator()(Index c, Index y, Index x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  PlaneMap plane(Index c) { return PlaneMap(data_.data() + c * plane_size(), height_, width_); }
  ConstPlaneMap plane(Index c) const {
    return ConstPlaneMap(data_.data() + c * plane_size(), height_, width_);
  }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }

  bool same_shape(const ImageTensor& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  ImageTensor<Other> cast() const {
    return ImageTensor<Other>(channels_, height_, width_, data_.template cast<Other>());
  }

private:
  Index channels_ = 0;
  Index height_ = 0;
  Index width_ = 0;
  Vector<Scalar> data_;
};

/// Encoder output: k*l channels over an H'xW' grid, stored as a
/// (channels x H'W') row-major matrix so module i is rows [i*l, (i+1)*l).
///
/// image_height/image_width remember the size of the image that produced the
/// map; decoding targets that size.
template <typename Scalar>
class FeatureMap {
public:
  FeatureMap() = default;
  FeatureMap(Index modules, Index module_len, Index height, Index width, Index image_height,
             Index image_width)
      : modules_(modules), module_len_(module_len), height_(height), width_(width),
        image_height_(image_height), image_width_(image_width),
        data_(RowMatrix<Scalar>::Zero(modules * module_len, height * width)) {}
  FeatureMap(Index modules, Index module_len, Index height, Index width, Index image_height,
             Index image_width, RowMatrix<Scalar> data)
      : modules_(modules), module_len_(module_len), height_(height), width_(width),
        image_height_(image_height), image_width_(image_width), data_(std::move(data)) {
    if (data_.rows() != modules * module_len || data_.cols() != height * width)
      throw ShapeError("FeatureMap: data is " + std::to_string(data_.rows()) + "x" +
                       std::to_string(data_.cols()) + ", expected " +
                       std::to_string(modules * module_len) + "x" +
                       std::to_string(height * width));
  }

  Index modules() const { return modules_; }
  Index module_len() const { return module_len_; }
  Index channels() const { return modules_ * module_len_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index sites() const { return height_ * width_; }
  Index image_height() const { return image_height_; }
  Index image_width() const { return image_width_; }

  Scalar& operator()(Index ch, Index y, Index x) { return data_(ch, y * width_ + x); }
  Scalar operator()(Index ch, Index y, Index x) const { return data_(ch, y * width_ + x); }

  auto module(Index i) { return data_.middleRows(i * module_len_, module_len_); }
  auto module(Index i) const { return data_.middleRows(i * module_len_, module_len_); }

  RowMatrix<Scalar>& data() { return data_; }
  const RowMatrix<Scalar>& data() const { return data_; }

  bool same_layout(const FeatureMap& o) const {
    return modules_ == o.modules_ && module_len_ == o.module_len_ && height_ == o.height_ &&
           width_ == o.width_;
  }

  /// Same partition and grid, zero data.
  FeatureMap zeros_like() const {
    return FeatureMap(modules_, module_len_, height_, width_, image_height_, image_width_);
  }

private:
  Index modules_ = 0;
  Index module_len_ = 0;
  Index height_ = 0;
  Index width_ = 0;
  Index image_height_ = 0;
  Index image_width_ = 0;
  RowMatrix<Scalar> data_;
};

inline double wrap_angle(double r) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(r, two_pi);
  if (w < 0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

/// Translation (pixels) followed by rotation (radians) parameters.
struct TransformParams {
  double t_x = 0.0;
  double t_y = 0.0;
  double r_theta = 0.0;

  TransformParams() = default;
  TransformParams(double tx, double ty, double r) : t_x(tx), t_y(ty), r_theta(wrap_angle(r)) {}

  bool is_identity() const { return t_x == 0.0 && t_y == 0.0 && r_theta == 0.0; }
  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

template <typename Scalar>
Scalar inner(const ImageTensor<Scalar>& a, const ImageTensor<Scalar>& b) {
  if (!a.same_shape(b)) throw ShapeError("inner: image shapes differ");
  return a.data().dot(b.data());
}

template <typename Scalar>
Scalar inner(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  if (!a.same_layout(b)) throw ShapeError("inner: feature layouts differ");
  return a.data().cwiseProduct(b.data()).sum();
}

} // namespace scg
