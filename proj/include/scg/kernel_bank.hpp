#pragma once

#include <random>

#include "scg/tensor.hpp"

namespace scg {

/// k*l convolution kernels of shape (in_channels, K, K); kernel j belongs to
/// module j / l. Row j of `weights` is kernel j flattened as (c, y, x).
template <typename Scalar>
class KernelBank {
public:
  KernelBank() = default;
  KernelBank(Index modules, Index module_len, Index kernel_side, Index in_channels, Index stride)
      : modules_(modules), module_len_(module_len), kernel_side_(kernel_side),
        in_channels_(in_channels), stride_(stride),
        weights_(RowMatrix<Scalar>::Zero(modules * module_len,
                                         in_channels * kernel_side * kernel_side)) {
    if (modules < 1 || module_len < 1 || kernel_side < 1 || in_channels < 1 || stride < 1)
      throw PreconditionError("KernelBank: all counts must be >= 1");
  }

  /// Kernels drawn i.i.d. from N(0, 1/(in_channels*K^2)).
  template <typename Rng>
  static KernelBank random(Index modules, Index module_len, Index kernel_side,
                           Index in_channels, Index stride, Rng& rng) {
    KernelBank bank(modules, module_len, kernel_side, in_channels, stride);
    std::normal_distribution<double> normal(
        0.0, 1.0 / std::sqrt(double(in_channels * kernel_side * kernel_side)));
    for (Index i = 0; i < bank.weights_.size(); ++i)
      bank.weights_.data()[i] = Scalar(normal(rng));
    return bank;
  }

  Index modules() const { return modules_; }
  Index module_len() const { return module_len_; }
  Index kernel_count() const { return modules_ * module_len_; }
  Index kernel_side() const { return kernel_side_; }
  Index in_channels() const { return in_channels_; }
  Index stride() const { return stride_; }
  Index module_of(Index kernel) const { return kernel / module_len_; }

  RowMatrix<Scalar>& weights() { return weights_; }
  const RowMatrix<Scalar>& weights() const { return weights_; }

  ImageTensor<Scalar> kernel(Index j) const {
    if (j < 0 || j >= kernel_count())
      throw IndexError("KernelBank::kernel: index " + std::to_string(j) + " out of range");
    return ImageTensor<Scalar>(in_channels_, kernel_side_, kernel_side_,
                               weights_.row(j).transpose());
  }

  void set_kernel(Index j, const ImageTensor<Scalar>& k) {
    if (k.channels() != in_channels_ || k.height() != kernel_side_ || k.width() != kernel_side_)
      throw ShapeError("KernelBank::set_kernel: kernel shape mismatch");
    weights_.row(j) = k.data().transpose();
  }

  template <typename Other>
  KernelBank<Other> cast() const {
    KernelBank<Other> out(modules_, module_len_, kernel_side_, in_channels_, stride_);
    out.weights() = weights_.template cast<Other>();
    return out;
  }

private:
  Index modules_ = 0;
  Index module_len_ = 0;
  Index kernel_side_ = 0;
  Index in_channels_ = 0;
  Index stride_ = 1;
  RowMatrix<Scalar> weights_;
};

} // namespace scg
