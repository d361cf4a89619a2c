#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "scg/dataset.hpp"
#include "scg/model.hpp"
#include "scg/objective.hpp"

namespace scg {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Moments for one parameter block.
struct MomentBlock {
  std::string name;
  Vector<float> m;
  Vector<float> v;
};

struct OptimState {
  std::int64_t step = 0;
  std::vector<MomentBlock> blocks;

  /// Zero moments for blocks of the given names and sizes.
  static OptimState zeros(const std::vector<std::pair<std::string, Index>>& blocks);
  MomentBlock& block(const std::string& name);
  const MomentBlock& block(const std::string& name) const;
};

/// One AdamW update of `params` in place, with decoupled decay
/// p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p). Does not advance
/// state.step; call once per block, then increment.
void adamw_update(Eigen::Ref<Vector<float>> params, const Eigen::Ref<const Vector<float>>& grad,
                  MomentBlock& moments, std::int64_t step, double lr, const AdamHyper& hyper);

/// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2, clamped to lr_min
/// past the end.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min = 0.0);

struct TrainConfig {
  ModelConfig model;
  Index grid_t = 5;
  Index grid_r = 16;
  CodebookInit codebook_init = CodebookInit::identity;
  double codebook_noise = 0.01;
  ObjectiveConfig objective;
  AugConfig aug;
  std::int64_t total_steps = 8000;
  Index batch_size = 32;
  double lr0 = 0.005;
  double lr_min = 0.0;
  double weight_decay = 0.01;
  bool decay_codebook = false;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 10;
  Index history_tail = 256;

  void validate() const;
};

/// Deterministic key: value text of every field that influences training.
std::string canonical_text(const TrainConfig& cfg);
/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(std::uint64_t h);

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0;
  double recon = 0;
  double equ = 0;
  double sym = 0;
  double total = 0;
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  KernelBank<float> bank;
  Codebook<float> codebook;
  OptimState optim;
  std::string rng_state;
  std::vector<LossRecord> history;
};

/// Layout (all integers and floats little-endian):
///   "SCGMAE01"
///   u64 config length, config text, u64 FNV-1a hash of the text
///   i64 modules, module_len, kernel_side, in_channels, stride, grid_t, grid_r
///   u8 diagonal translation slice, f64 codebook stride
///   f32[] weights (row-major kernels), f32[] codebook matrices
///   i64 optimizer step, u64 block count, per block: u64 name length, name,
///     u64 length, f32[] m, f32[] v
///   u64 rng text length, rng text
///   u64 history count, per record: i64 step, f64 lr, recon, equ, sym, total
void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& cp);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Fresh parameters and optimizer state for `cfg`; step 0.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

/// Batch-mean recon + lambda1 equ over the pairs plus lambda2 sym once, and
/// the matching gradient. Per-pair gradients are reduced in pair order.
struct BatchLoss {
  LossBreakdown breakdown;
  GradientSet<float> grad;
};
BatchLoss batch_loss(const KernelBank<float>& bank, const Codebook<float>& cb,
                     const std::vector<TrainingPair>& pairs, const ObjectiveConfig& obj);

struct TrainOptions {
  /// Run directory; when non-empty, writes logs/loss.csv and checkpoints/.
  std::string out_dir;
  /// Continue from this checkpoint; its config hash must match.
  std::string resume_from;
  std::function<void(const LossRecord&)> on_log;
};

/// Runs the training loop to cfg.total_steps and returns the final state.
Checkpoint train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

/// Throws ConfigError naming both hashes when `cp` was not produced by `cfg`.
void require_matching_config(const Checkpoint& cp, const TrainConfig& cfg);

} // namespace scg
