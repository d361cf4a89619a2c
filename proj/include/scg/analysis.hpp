#pragma once

#include <random>
#include <string>
#include <vector>

#include "scg/dataset.hpp"
#include "scg/model.hpp"

namespace scg {

struct TuningCurve {
  std::vector<double> axis;
  std::vector<double> response;

  /// Axis value of the largest response (first one on ties).
  double peak() const;
};

/// Named lists of module indices.
struct ModuleGroup {
  std::string name;
  std::vector<Index> modules;
};

/// Throws ConfigError on out-of-range or repeated modules across groups.
void validate_groups(const std::vector<ModuleGroup>& groups, Index modules);

/// Grating stimuli are `0.5 + 0.5 sin(...)`. With subtract_mean the 0.5
/// offset is dropped so a kernel's DC sum does not enter the response.
struct TuningOptions {
  Index n_orientations = 36;
  Index n_phases = 8;
  Index n_frequencies = 24;
  double min_frequency = 0.02;
  double max_frequency = 0.5;
  bool subtract_mean = false;
};

/// response(theta) = max over phases of |<kernel, grating(theta, f, phase)>|
/// for theta = pi j / n over [0, pi).
TuningCurve orientation_tuning(const ImageTensor<float>& kernel, double frequency,
                               const TuningOptions& opt = {});

/// response(f) = max over orientations and phases, f evenly spaced over
/// [min_frequency, max_frequency].
TuningCurve frequency_tuning(const ImageTensor<float>& kernel, const TuningOptions& opt = {});

/// Pointwise mean of curves sharing an axis.
TuningCurve mean_curve(const std::vector<TuningCurve>& curves);

/// 1 - |sum r e^{2 i theta}| / sum r; 1 for an all-zero curve.
double circular_variance(const TuningCurve& curve);

/// Per-kernel summary used by the analysis tables.
struct KernelTuning {
  Index module = 0;
  Index kernel = 0;
  double preferred_frequency = 0;
  double preferred_orientation = 0;
  double circular_variance = 1;
  TuningCurve frequency;
  TuningCurve orientation;
};

/// Frequency curve first, then the orientation curve at the kernel's
/// preferred frequency.
std::vector<KernelTuning> tune_bank(const KernelBank<float>& bank, const TuningOptions& opt = {});

/// Variance across modules of the module-mean preferred frequency divided by
/// the mean within-module variance (population variances). Infinite when the
/// within-module variance is zero and the between-module variance is not; 0
/// when both are zero.
double frequency_variance_ratio(const std::vector<KernelTuning>& tuning, Index modules);

/// Fraction of kernels with circular variance below `threshold`.
double selective_fraction(const std::vector<KernelTuning>& tuning, double threshold);

/// One module per row, one kernel per column, each tile min-max normalized
/// (constant tiles are 0.5), 1-px separators of value 1 around every tile.
ImageTensor<float> kernel_grid_image(const KernelBank<float>& bank);

/// decode(encode(image)) with channels outside `modules` zeroed.
ImageTensor<float> module_reconstruction(const KernelBank<float>& bank,
                                         const ImageTensor<float>& image,
                                         const std::vector<Index>& modules);

/// Channels outside `modules` set to zero.
FeatureMap<float> restrict_to_modules(const FeatureMap<float>& features,
                                      const std::vector<Index>& modules);

/// decode(P_delta probe) for each delta, with the probe at the feature-grid
/// center of an image_h x image_w input.
std::vector<ImageTensor<float>> submanifold_sweep(const KernelBank<float>& bank,
                                                  const Codebook<float>& cb, Index module,
                                                  Index channel,
                                                  const std::vector<TransformParams>& path,
                                                  Index image_h, Index image_w);

/// Pearson correlation of two same-shape images; 0 when either is constant.
double correlation(const ImageTensor<float>& a, const ImageTensor<float>& b);

/// Mean over `n_samples` pairs of ||f' - P_delta f|| / max(||f'||, 1e-8) with
/// images drawn from `data` and delta from `aug`.
double equivariance_error(const KernelBank<float>& bank, const Codebook<float>& cb,
                          const Dataset& data, Index n_samples, const AugConfig& aug,
                          std::mt19937_64& rng);

/// Mean PSNR of clamp(decode(encode(I)), 0, 1) against I over the first `n`
/// images.
double reconstruction_psnr(const KernelBank<float>& bank, const Dataset& data, Index n);

/// Headline statistics of one trained model.
struct ModelSummary {
  double frequency_variance_ratio = 0;
  double selective_fraction = 0;
  double equivariance_error = 0;
  double reconstruction_psnr = 0;
  std::vector<KernelTuning> tuning;
};

/// Tuning of every kernel, plus equivariance error and reconstruction PSNR on
/// the first `n_heldout` images of `heldout` (pairs drawn from `aug` with
/// rng(seed)).
ModelSummary summarize(const KernelBank<float>& bank, const Codebook<float>& cb,
                       const Dataset& heldout, Index n_heldout, const AugConfig& aug,
                       const TuningOptions& tuning, double selectivity_threshold,
                       std::uint64_t seed);

/// 0.299 R + 0.587 G + 0.114 B for 3 channels; 1-channel images pass through.
ImageTensor<float> luma(const ImageTensor<float>& image);

/// 10 log10(max^2 / MSE) over all channels, 100 dB when MSE < 1e-10.
double psnr(const ImageTensor<float>& a, const ImageTensor<float>& b, double max_val = 1.0);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, on the luma of each image. Images smaller than the
/// window use a window clipped to the image.
double ssim(const ImageTensor<float>& a, const ImageTensor<float>& b, double max_val = 1.0);

} // namespace scg
