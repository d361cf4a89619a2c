#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

/// Images of identical shape with pixels in [0, 1]. Labels are kept for
/// reporting only; training never reads them.
struct Dataset {
  std::vector<ImageTensor<float>> images;
  std::vector<int> labels;
  Index channels = 0;
  Index side = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  /// First `n` images (all if n == 0 or n >= size()).
  Dataset head(std::size_t n) const;
  /// Images [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct AugConfig {
  double max_translation_fraction = 0.3;
  bool rotation_full_circle = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// MNIST-style IDX pair. `labels_path` may be empty.
Dataset load_idx(const std::string& images_path, const std::string& labels_path = {});

/// CIFAR-10 binary batches: 3073-byte records (label byte + planar RGB 32x32).
Dataset load_cifar10(const std::vector<std::string>& paths);

struct TrainingPair {
  ImageTensor<float> image;
  ImageTensor<float> image_prime;
  TransformParams delta;
};

/// delta with t_x, t_y ~ U[-f*side, f*side] and r_theta ~ U[0, 2*pi)
/// (r_theta = 0 when rotation is disabled).
TransformParams sample_delta(Index side, const AugConfig& aug, std::mt19937_64& rng);

/// Uniformly chosen image I and I' = warp(I, delta).
TrainingPair sample_pair(const Dataset& data, const AugConfig& aug, std::mt19937_64& rng);

/// 0.5 + 0.5 sin(2 pi f (x cos(theta) + y sin(theta)) + phase) over a
/// side x side patch, with (x, y) measured from the patch center.
template <typename Scalar = float>
ImageTensor<Scalar> grating(Index side, double orientation, double frequency, double phase,
                            Index channels = 1) {
  if (!(frequency > 0.0 && frequency <= 0.5))
    throw PreconditionError("grating: frequency " + std::to_string(frequency) +
                            " outside (0, 0.5] cycles/pixel");
  if (side < 1 || channels < 1) throw PreconditionError("grating: empty patch");
  ImageTensor<Scalar> img(channels, side, side);
  const double c = 0.5 * double(side - 1);
  const double k = 2.0 * std::numbers::pi * frequency;
  const double ct = std::cos(orientation), st = std::sin(orientation);
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x) {
      const double u = (double(x) - c) * ct + (double(y) - c) * st;
      const Scalar v = Scalar(0.5 + 0.5 * std::sin(k * u + phase));
      for (Index ch = 0; ch < channels; ++ch) img(ch, y, x) = v;
    }
  return img;
}

} // namespace scg
