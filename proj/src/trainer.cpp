#include "scg/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"
#include "scg/parallel.hpp"

namespace scg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

OptimState OptimState::zeros(const std::vector<std::pair<std::string, Index>>& blocks) {
  OptimState s;
  for (const auto& [name, n] : blocks)
    s.blocks.push_back({name, Vector<float>::Zero(n), Vector<float>::Zero(n)});
  return s;
}

MomentBlock& OptimState::block(const std::string& name) {
  for (auto& b : blocks)
    if (b.name == name) return b;
  throw IndexError("OptimState: no block named '" + name + "'");
}

const MomentBlock& OptimState::block(const std::string& name) const {
  return const_cast<OptimState*>(this)->block(name);
}

void adamw_update(Eigen::Ref<Vector<float>> params, const Eigen::Ref<const Vector<float>>& grad,
                  MomentBlock& mb, std::int64_t step, double lr, const AdamHyper& h) {
  if (params.size() != grad.size() || mb.m.size() != params.size() ||
      mb.v.size() != params.size())
    throw ShapeError("adamw_update: block '" + mb.name + "' shape mismatch");
  if (lr < 0) throw PreconditionError("adamw_update: lr must be >= 0");
  if (!grad.allFinite())
    throw NumericError("adamw_update: non-finite gradient in block '" + mb.name + "' at step " +
                       std::to_string(step));
  const float b1 = float(h.beta1), b2 = float(h.beta2);
  mb.m = b1 * mb.m + (1.0f - b1) * grad;
  mb.v = b2 * mb.v + (1.0f - b2) * grad.cwiseProduct(grad);
  const double t = double(step + 1);
  const float c1 = float(1.0 / (1.0 - std::pow(h.beta1, t)));
  const float c2 = float(1.0 / (1.0 - std::pow(h.beta2, t)));
  const float flr = float(lr), eps = float(h.eps), wd = float(h.weight_decay);
  for (Index i = 0; i < params.size(); ++i) {
    const float mhat = mb.m[i] * c1;
    const float vhat = mb.v[i] * c2;
    params[i] -= flr * (mhat / (std::sqrt(vhat) + eps) + wd * params[i]);
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps < 1) throw PreconditionError("cosine_lr: total_steps must be >= 1");
  if (step < 0) throw PreconditionError("cosine_lr: step must be >= 0");
  if (step >= total_steps) return lr_min;
  const double x = double(step) / double(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * x));
}

void TrainConfig::validate() const {
  model.validate();
  aug.validate();
  if (grid_t < 1 || grid_r < 1) throw ConfigError("codebook grid sizes must be >= 1");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr0 >= 0) || !(lr_min >= 0)) throw ConfigError("learning rates must be >= 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (!(objective.temperature > 0)) throw ConfigError("temperature must be > 0");
  if (objective.lambda1 < 0 || objective.lambda2 < 0)
    throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (checkpoint_every < 0 || log_every < 1 || history_tail < 0)
    throw ConfigError("checkpoint_every >= 0, log_every >= 1, history_tail >= 0 required");
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

const char* variant_name(ConstraintVariant v) {
  return v == ConstraintVariant::per_module_transrot ? "per_module_transrot"
                                                     : "per_kernel_trans_plus_module_transrot";
}

} // namespace

std::string canonical_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "model.modules: " << c.model.modules << "\n"
     << "model.module_len: " << c.model.module_len << "\n"
     << "model.kernel_side: " << c.model.kernel_side << "\n"
     << "model.stride: " << c.model.stride << "\n"
     << "model.in_channels: " << c.model.in_channels << "\n"
     << "model.constraint_variant: " << variant_name(c.model.variant) << "\n"
     << "codebook.grid_t: " << c.grid_t << "\n"
     << "codebook.grid_r: " << c.grid_r << "\n"
     << "codebook.init: " << (c.codebook_init == CodebookInit::identity ? "identity" : "random")
     << "\n"
     << "codebook.noise: " << num(c.codebook_noise) << "\n"
     << "objective.lambda1: " << num(c.objective.lambda1) << "\n"
     << "objective.lambda2: " << num(c.objective.lambda2) << "\n"
     << "objective.temperature: " << num(c.objective.temperature) << "\n"
     << "objective.sym_sign: " << (c.objective.sym_sign == SymSign::neg ? "neg" : "pos") << "\n"
     << "objective.sym_full_grad: " << (c.objective.sym_full_grad ? "true" : "false") << "\n"
     << "aug.max_translation_fraction: " << num(c.aug.max_translation_fraction) << "\n"
     << "aug.rotation_full_circle: " << (c.aug.rotation_full_circle ? "true" : "false") << "\n"
     << "aug.seed: " << c.aug.seed << "\n"
     << "train.total_steps: " << c.total_steps << "\n"
     << "train.batch_size: " << c.batch_size << "\n"
     << "train.lr0: " << num(c.lr0) << "\n"
     << "train.lr_min: " << num(c.lr_min) << "\n"
     << "train.weight_decay: " << num(c.weight_decay) << "\n"
     << "train.decay_codebook: " << (c.decay_codebook ? "true" : "false") << "\n"
     << "train.seed: " << c.seed << "\n";
  return os.str();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'S', 'C', 'G', 'M', 'A', 'E', '0', '1'};

} // namespace

std::string serialize_checkpoint(const Checkpoint& cp) {
  Writer w;
  w.str().append(kMagic, 8);
  w.bytes(cp.config_text);
  w.pod<std::uint64_t>(cp.config_hash);
  const auto& b = cp.bank;
  const auto& c = cp.codebook;
  for (std::int64_t v : {b.modules(), b.module_len(), b.kernel_side(), b.in_channels(),
                         b.stride(), c.grid_t(), c.grid_r()})
    w.pod<std::int64_t>(v);
  w.pod<std::uint8_t>(c.diagonal_translation_slice() ? 1 : 0);
  w.pod<double>(c.stride());
  w.floats(b.weights().data(), b.weights().size());
  w.floats(c.matrices().data(), c.matrices().size());
  w.pod<std::int64_t>(cp.optim.step);
  w.pod<std::uint64_t>(cp.optim.blocks.size());
  for (const auto& blk : cp.optim.blocks) {
    w.bytes(blk.name);
    w.floats(blk.m.data(), blk.m.size());
    w.floats(blk.v.data(), blk.v.size());
  }
  w.bytes(cp.rng_state);
  w.pod<std::uint64_t>(cp.history.size());
  for (const auto& r : cp.history) {
    w.pod<std::int64_t>(r.step);
    for (double v : {r.lr, r.recon, r.equ, r.sym, r.total}) w.pod<double>(v);
  }
  return std::move(w.str());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic, expected \"SCGMAE01\", found \"" +
                      bytes.substr(0, std::min<std::size_t>(8, bytes.size())) + "\"");
  const std::string body = bytes.substr(8);
  Reader r(body, "checkpoint");
  Checkpoint cp;
  cp.config_text = r.bytes("config");
  cp.config_hash = r.pod<std::uint64_t>("config hash");
  if (fnv1a64(cp.config_text) != cp.config_hash)
    throw FormatError("checkpoint: config hash " + hash_hex(cp.config_hash) +
                      " does not match its config text (" + hash_hex(fnv1a64(cp.config_text)) +
                      ")");
  std::int64_t dims[7];
  for (auto& d : dims) d = r.pod<std::int64_t>("dimensions");
  const bool diag = r.pod<std::uint8_t>("mask flag") != 0;
  const double cb_stride = r.pod<double>("codebook stride");
  try {
    cp.bank = KernelBank<float>(dims[0], dims[1], dims[2], dims[3], dims[4]);
    cp.codebook = Codebook<float>(dims[0], dims[1], dims[5], dims[6], cb_stride);
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("checkpoint: invalid dimensions: ") + e.what());
  }
  const Vector<float> w = r.floats("weights", cp.bank.weights().size());
  cp.bank.weights() = Eigen::Map<const RowMatrix<float>>(w.data(), cp.bank.weights().rows(),
                                                         cp.bank.weights().cols());
  cp.codebook.matrices() = r.floats("codebook", cp.codebook.matrices().size());
  cp.codebook.set_diagonal_translation_slice(diag);
  cp.optim.step = r.pod<std::int64_t>("optimizer step");
  const auto nblocks = r.pod<std::uint64_t>("block count");
  for (std::uint64_t i = 0; i < nblocks; ++i) {
    MomentBlock blk;
    blk.name = r.bytes("block name");
    blk.m = r.floats("moment m", -1);
    blk.v = r.floats("moment v", blk.m.size());
    cp.optim.blocks.push_back(std::move(blk));
  }
  cp.rng_state = r.bytes("rng state");
  const auto nh = r.pod<std::uint64_t>("history count");
  for (std::uint64_t i = 0; i < nh; ++i) {
    LossRecord rec;
    rec.step = r.pod<std::int64_t>("history");
    rec.lr = r.pod<double>("history");
    rec.recon = r.pod<double>("history");
    rec.equ = r.pod<double>("history");
    rec.sym = r.pod<double>("history");
    rec.total = r.pod<double>("history");
    cp.history.push_back(rec);
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after history");
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  write_file_atomic(path, serialize_checkpoint(cp));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

void require_matching_config(const Checkpoint& cp, const TrainConfig& cfg) {
  const std::uint64_t want = fnv1a64(canonical_text(cfg));
  if (want != cp.config_hash)
    throw ConfigError("checkpoint config hash " + hash_hex(cp.config_hash) +
                      " does not match run config hash " + hash_hex(want));
}

// ---------------------------------------------------------------------------
// Training

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint cp;
  cp.config_text = canonical_text(cfg);
  cp.config_hash = fnv1a64(cp.config_text);
  std::mt19937_64 rng(cfg.seed);
  const auto& m = cfg.model;
  cp.bank = KernelBank<float>::random(m.modules, m.module_len, m.kernel_side, m.in_channels,
                                      m.stride, rng);
  cp.codebook = new_codebook<float>(m.modules, m.module_len, cfg.grid_t, cfg.grid_r,
                                    double(m.stride), cfg.codebook_init, rng, cfg.codebook_noise);
  cp.codebook.set_diagonal_translation_slice(m.variant ==
                                             ConstraintVariant::per_kernel_trans_plus_module_transrot);
  cp.optim = OptimState::zeros(
      {{"weights", cp.bank.weights().size()}, {"codebook", cp.codebook.matrices().size()}});
  // Pair sampling draws from its own stream so that changing the parameter
  // initialization leaves the sequence of training pairs alone.
  std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32),
                    std::uint32_t(cfg.aug.seed), std::uint32_t(cfg.aug.seed >> 32)};
  std::mt19937_64 sampler(seq);
  std::ostringstream os;
  os << sampler;
  cp.rng_state = os.str();
  return cp;
}

BatchLoss batch_loss(const KernelBank<float>& bank, const Codebook<float>& cb,
                     const std::vector<TrainingPair>& pairs, const ObjectiveConfig& obj) {
  if (pairs.empty()) throw PreconditionError("batch_loss: empty batch");
  const Index n = Index(pairs.size());
  std::vector<LossTerm<float>> rec(pairs.size()), equ(pairs.size());
  parallel_for(n, [&](Index i) {
    const auto& p = pairs[std::size_t(i)];
    rec[std::size_t(i)] = recon_loss(bank, p.image, p.image_prime);
    equ[std::size_t(i)] = equ_loss(bank, cb, p.image, p.image_prime, p.delta);
  });
  const LossTerm<float> sym = sym_loss(cb, obj);

  BatchLoss out;
  out.grad = GradientSet<float>::zeros(bank, &cb);
  const float inv = 1.0f / float(n);
  double r = 0, e = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    r += double(rec[i].value);
    e += double(equ[i].value);
    out.grad.add_scaled(rec[i].grad, inv);
    if (obj.lambda1 != 0) out.grad.add_scaled(equ[i].grad, float(obj.lambda1) * inv);
  }
  if (obj.lambda2 != 0) out.grad.add_scaled(sym.grad, float(obj.lambda2));
  LossBreakdown& b = out.breakdown;
  b.recon = r / double(n);
  b.equ = e / double(n);
  b.sym = double(sym.value);
  b.lambda1 = obj.lambda1;
  b.lambda2 = obj.lambda2;
  b.temperature = obj.temperature;
  b.total = b.recon + b.lambda1 * b.equ + b.lambda2 * b.sym;
  return out;
}

namespace {

void apply_step(Checkpoint& cp, const GradientSet<float>& g, double lr, const TrainConfig& cfg) {
  AdamHyper h;
  h.weight_decay = cfg.weight_decay;
  Eigen::Map<Vector<float>> w(cp.bank.weights().data(), cp.bank.weights().size());
  Eigen::Map<const Vector<float>> gw(g.d_weights.data(), g.d_weights.size());
  adamw_update(w, gw, cp.optim.block("weights"), cp.optim.step, lr, h);
  h.weight_decay = cfg.decay_codebook ? cfg.weight_decay : 0.0;
  adamw_update(cp.codebook.matrices(), g.d_codebook, cp.optim.block("codebook"), cp.optim.step,
               lr, h);
  ++cp.optim.step;
}

std::string step_name(std::int64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
  return os.str();
}

} // namespace

Checkpoint train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts) {
  cfg.validate();
  if (data.empty()) throw PreconditionError("train: dataset is empty");
  if (data.channels != cfg.model.in_channels)
    throw ConfigError("train: dataset has " + std::to_string(data.channels) +
                      " channels, model expects " + std::to_string(cfg.model.in_channels));

  Checkpoint cp;
  if (!opts.resume_from.empty()) {
    cp = load_checkpoint(opts.resume_from);
    require_matching_config(cp, cfg);
  } else {
    cp = initial_checkpoint(cfg);
  }
  std::mt19937_64 rng;
  {
    std::istringstream is(cp.rng_state);
    is >> rng;
    if (!is) throw FormatError("train: unreadable rng state in checkpoint");
  }

  namespace fs = std::filesystem;
  const bool write = !opts.out_dir.empty();
  std::ofstream csv;
  fs::path ckpt_dir;
  if (write) {
    ckpt_dir = fs::path(opts.out_dir) / "checkpoints";
    fs::create_directories(ckpt_dir);
    fs::create_directories(fs::path(opts.out_dir) / "logs");
    const fs::path csv_path = fs::path(opts.out_dir) / "logs" / "loss.csv";
    const bool fresh = cp.optim.step == 0;
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("train: cannot open " + csv_path.string());
    csv << std::setprecision(9);
    if (fresh) csv << "step,lr,recon,equ,sym,total\n";
    if (fresh) save_checkpoint((ckpt_dir / step_name(0)).string(), cp);
  }

  auto sync_rng = [&] {
    std::ostringstream os;
    os << rng;
    cp.rng_state = os.str();
  };

  Checkpoint last_good = cp;
  std::vector<TrainingPair> batch(static_cast<std::size_t>(cfg.batch_size));
  while (cp.optim.step < cfg.total_steps) {
    const std::int64_t step = cp.optim.step;
    const double lr = cosine_lr(step, cfg.total_steps, cfg.lr0, cfg.lr_min);
    for (auto& p : batch) p = sample_pair(data, cfg.aug, rng);
    BatchLoss bl = batch_loss(cp.bank, cp.codebook, batch, cfg.objective);

    LossRecord rec{step, lr, bl.breakdown.recon, bl.breakdown.equ, bl.breakdown.sym,
                   bl.breakdown.total};
    const bool finite = std::isfinite(rec.total) && bl.grad.all_finite();
    if (!finite) {
      std::string where = !std::isfinite(rec.total) ? "loss"
                          : !bl.grad.d_weights.allFinite() ? "weights gradient"
                                                           : "codebook gradient";
      std::string saved;
      if (write) {
        saved = (ckpt_dir / "last_good.ckpt").string();
        save_checkpoint(saved, last_good);
      }
      throw NumericError("train: non-finite " + where + " at step " + std::to_string(step) +
                         (saved.empty() ? "" : "; last good state saved to " + saved));
    }
    last_good = cp;
    apply_step(cp, bl.grad, lr, cfg);
    sync_rng();

    cp.history.push_back(rec);
    if (Index(cp.history.size()) > cfg.history_tail)
      cp.history.erase(cp.history.begin(),
                       cp.history.begin() + (Index(cp.history.size()) - cfg.history_tail));
    const bool log_now = step % cfg.log_every == 0 || cp.optim.step == cfg.total_steps;
    if (log_now) {
      if (write)
        csv << rec.step << ',' << rec.lr << ',' << rec.recon << ',' << rec.equ << ',' << rec.sym
            << ',' << rec.total << '\n';
      if (opts.on_log) opts.on_log(rec);
    }
    if (write && cfg.checkpoint_every > 0 && cp.optim.step % cfg.checkpoint_every == 0 &&
        cp.optim.step != cfg.total_steps)
      save_checkpoint((ckpt_dir / step_name(cp.optim.step)).string(), cp);
  }
  if (write) {
    csv.flush();
    save_checkpoint((ckpt_dir / "final.ckpt").string(), cp);
  }
  return cp;
}

} // namespace scg
