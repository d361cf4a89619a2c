#pragma once

#include <string>
#include <vector>

#include "scg/analysis.hpp"
#include "scg/trainer.hpp"

namespace scg {

struct DataConfig {
  /// "idx" (MNIST) or "cifar10".
  std::string format = "idx";
  std::string train_images = "data/mnist/train-images-idx3-ubyte";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte";
  std::vector<std::string> cifar_train;
  std::vector<std::string> cifar_test;
  /// Use at most this many images from each split (0 = all).
  Index train_limit = 0;
  Index test_limit = 0;
};

struct AnalysisConfig {
  TuningOptions tuning;
  double selectivity_threshold = 0.6;
  Index equivariance_samples = 256;
  Index sweep_frames = 16;
  Index reconstruction_images = 8;
  std::uint64_t seed = 1;
};

struct CompletionConfig {
  Index window = 1;
  std::int64_t steps = 1500;
  Index batch_size = 16;
  double lr0 = 0.005;
  double weight_decay = 0.0;
  Index eval_images = 256;
  Index strip_images = 6;
  std::uint64_t seed = 2;
};

struct GradcheckConfig {
  Index modules = 2;
  Index module_len = 4;
  Index kernel_side = 3;
  Index stride = 2;
  Index image_side = 8;
  Index grid_t = 3;
  Index grid_r = 4;
  double epsilon = 1e-5;
  Index coordinates = 200;
  double tolerance = 1e-4;
  std::uint64_t seed = 3;
};

struct RunConfig {
  TrainConfig train;
  DataConfig data;
  std::vector<ModuleGroup> groups;
  AnalysisConfig analysis;
  CompletionConfig completion;
  GradcheckConfig gradcheck;
  std::string output_dir = "runs/default";

  void validate() const;
};

/// Consecutive pairs of modules named HC0, HC1, ... (a trailing odd module
/// forms its own group).
std::vector<ModuleGroup> default_groups(Index modules);

/// Parses a YAML document. Missing keys take defaults, unknown keys throw
/// ConfigError naming the key path. An absent `groups` section defaults to
/// default_groups(model.modules).
RunConfig parse_config(const std::string& yaml_text);
RunConfig load_config(const std::string& path);

/// The train or test split named by `data`, truncated to its limit.
Dataset load_split(const DataConfig& data, bool train);

/// Every field, defaults included, in a fixed order; parse_config of the
/// result reproduces the same RunConfig.
std::string emit_config(const RunConfig& cfg);

} // namespace scg
