#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scg/analysis.hpp"
#include "scg/trainer.hpp"

namespace scg {

/// Predicts the channels outside a source group of modules from the source
/// channels in a (2w+1)^2 neighbourhood (zero outside the grid), plus a bias.
///
/// weights has one row per target channel and columns ordered
/// (source channel, dy, dx); targets and sources are in channel order.
struct CompletionMap {
  std::string group;
  std::vector<Index> source_modules;
  Index modules = 0;
  Index module_len = 0;
  Index window = 1;
  RowMatrix<float> weights;
  Vector<float> bias;

  /// Zero weights and zero bias: completing with it reproduces the
  /// zero-padded features exactly.
  static CompletionMap zeros(const ModuleGroup& group, Index modules, Index module_len,
                             Index window);

  std::vector<Index> source_channels() const;
  std::vector<Index> target_channels() const;
  Index taps() const { return (2 * window + 1) * (2 * window + 1); }
};

/// Columns are sites, rows (source channel, dy, dx) taps.
RowMatrix<float> source_patches(const CompletionMap& map, const FeatureMap<float>& features);

/// Full feature map: source channels copied bit-for-bit from `features`,
/// the rest predicted. `group` must list the map's source modules.
FeatureMap<float> complete(const CompletionMap& map, const FeatureMap<float>& features,
                           const std::vector<Index>& group);

struct CompletionTrainConfig {
  Index window = 1;
  std::int64_t steps = 1500;
  Index batch_size = 16;
  double lr0 = 0.005;
  double weight_decay = 0.0;
  std::uint64_t seed = 2;
};

/// Minimizes the batch mean of ||f_missing - C(f_group)||^2 over encoded
/// images with the autoencoder frozen (AdamW, cosine schedule).
CompletionMap train_completion(const KernelBank<float>& bank, const Dataset& data,
                               const ModuleGroup& group, const CompletionTrainConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_log = {});

/// Mean squared completion error per image over `data` (first `n` images).
double completion_loss(const CompletionMap& map, const KernelBank<float>& bank,
                       const Dataset& data, Index n);

struct CompletionMetrics {
  std::string group;
  double psnr_gray = 0;
  /// NaN for single-channel data.
  double psnr_color = 0;
  double ssim = 0;
};

/// Clamped decodes of completed features against the originals, averaged
/// over the first `n` images. With `baseline` the missing channels are left
/// at zero instead of being predicted.
CompletionMetrics evaluate_completion(const CompletionMap& map, const KernelBank<float>& bank,
                                      const Dataset& data, Index n, bool baseline = false);

/// Writes `group,psnr_gray,psnr_color,ssim` with one row per entry.
void write_metrics_csv(const std::string& path, const std::vector<CompletionMetrics>& rows);

/// "SCGCMP01", then name, modules, module_len, window, source module list,
/// f32 weights and bias, all little-endian with u64 length prefixes.
void save_completion(const std::string& path, const CompletionMap& map);
CompletionMap load_completion(const std::string& path);

/// Pixel values clamped to [0, 1].
ImageTensor<float> clamp01(const ImageTensor<float>& image);

} // namespace scg
