#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "scg/trainer.hpp"

using namespace scg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "scg_test_trainer" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const Dataset& mnist64() {
  static const Dataset ds = load_idx(std::string(SCG_DATA_DIR) + "/train-images-idx3-ubyte").head(64);
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.modules = 2;
  c.model.module_len = 4;
  c.model.kernel_side = 5;
  c.grid_r = 8;
  c.total_steps = 6;
  c.batch_size = 4;
  c.checkpoint_every = 3;
  c.log_every = 2;
  return c;
}

} // namespace

TEST(AdamW, DecayOnlyStep) {
  Vector<float> p(3);
  p << 1.0f, -2.0f, 0.5f;
  const Vector<float> p0 = p;
  MomentBlock mb{"w", Vector<float>::Zero(3), Vector<float>::Zero(3)};
  AdamHyper h;
  h.weight_decay = 0.01;
  adamw_update(p, Vector<float>::Zero(3), mb, 0, 0.1, h);
  for (Index i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(p[i], p0[i] * (1.0f - 0.1f * 0.01f));
}

TEST(AdamW, FirstStepIsSignedLr) {
  Vector<float> p = Vector<float>::Zero(3);
  Vector<float> g(3);
  g << 0.3f, -4.0f, 1e-3f;
  MomentBlock mb{"w", Vector<float>::Zero(3), Vector<float>::Zero(3)};
  const double lr = 0.01;
  adamw_update(p, g, mb, 0, lr, AdamHyper{});
  for (Index i = 0; i < 3; ++i)
    EXPECT_NEAR(p[i], -lr * g[i] / (std::abs(g[i]) + 1e-8), 1e-7);
}

TEST(AdamW, ZeroLrStillMovesMoments) {
  Vector<float> p(2);
  p << 1.0f, 2.0f;
  const Vector<float> p0 = p;
  Vector<float> g(2);
  g << 0.5f, -1.0f;
  MomentBlock mb{"w", Vector<float>::Zero(2), Vector<float>::Zero(2)};
  AdamHyper h;
  h.weight_decay = 0.01;
  adamw_update(p, g, mb, 0, 0.0, h);
  EXPECT_EQ(p, p0);
  EXPECT_FLOAT_EQ(mb.m[0], 0.05f);
  EXPECT_NEAR(mb.v[1], 0.001f, 1e-7);
}

TEST(AdamW, DecayCompoundsUnderZeroGradient) {
  Vector<float> p = Vector<float>::Constant(4, 2.0f);
  MomentBlock mb{"w", Vector<float>::Zero(4), Vector<float>::Zero(4)};
  AdamHyper h;
  h.weight_decay = 0.01;
  double expect = p.norm();
  for (int t = 0; t < 50; ++t) {
    const double lr = cosine_lr(t, 50, 0.1);
    adamw_update(p, Vector<float>::Zero(4), mb, t, lr, h);
    expect *= 1.0 - lr * 0.01;
  }
  EXPECT_NEAR(p.norm(), expect, 1e-5);
}

TEST(AdamW, NonFiniteGradientNamesBlock) {
  Vector<float> p = Vector<float>::Zero(2);
  Vector<float> g(2);
  g << 1.0f, std::numeric_limits<float>::quiet_NaN();
  MomentBlock mb{"codebook", Vector<float>::Zero(2), Vector<float>::Zero(2)};
  try {
    adamw_update(p, g, mb, 7, 0.1, AdamHyper{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("codebook"), std::string::npos);
  }
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.005, 0.001), 0.005);
  EXPECT_NEAR(cosine_lr(50, 100, 0.005, 0.001), 0.003, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 0.005, 0.001), 0.001);
  EXPECT_DOUBLE_EQ(cosine_lr(250, 100, 0.005, 0.001), 0.001);
}

TEST(Checkpoint, SerializeParseSerializeIsIdentity) {
  const TrainConfig c = tiny_config();
  Checkpoint cp = initial_checkpoint(c);
  cp.history.push_back({3, 0.004, 1.5, 0.25, 12.0, 2.95});
  cp.optim.block("weights").m.setConstant(0.125f);
  const std::string a = serialize_checkpoint(cp);
  const std::string b = serialize_checkpoint(parse_checkpoint(a));
  EXPECT_EQ(a, b);
  const fs::path dir = scratch("roundtrip");
  save_checkpoint((dir / "a.ckpt").string(), cp);
  save_checkpoint((dir / "b.ckpt").string(), load_checkpoint((dir / "a.ckpt").string()));
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
}

TEST(Checkpoint, BadMagicNamesExpected) {
  std::string bytes = serialize_checkpoint(initial_checkpoint(tiny_config()));
  bytes[0] = 'X';
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("SCGMAE01"), std::string::npos);
  }
}

TEST(Checkpoint, TruncationAndTrailingBytes) {
  const std::string bytes = serialize_checkpoint(initial_checkpoint(tiny_config()));
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), FormatError);
}

TEST(Checkpoint, TamperedConfigTextFailsHash) {
  std::string bytes = serialize_checkpoint(initial_checkpoint(tiny_config()));
  // Config text starts after the magic and its u64 length.
  bytes[16] ^= 0x01;
  EXPECT_THROW(parse_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, ResumeRefusesOtherConfigWithBothHashes) {
  const TrainConfig a = tiny_config();
  TrainConfig b = a;
  b.lr0 = 0.001;
  const Checkpoint cp = initial_checkpoint(a);
  EXPECT_NO_THROW(require_matching_config(cp, a));
  try {
    require_matching_config(cp, b);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(hash_hex(fnv1a64(canonical_text(a)))), std::string::npos) << msg;
    EXPECT_NE(msg.find(hash_hex(fnv1a64(canonical_text(b)))), std::string::npos) << msg;
  }
}

TEST(Train, SameSeedSameBytesAcrossThreadCounts) {
  const TrainConfig c = tiny_config();
  setenv("SCG_THREADS", "1", 1);
  const std::string a = serialize_checkpoint(train(c, mnist64()));
  setenv("SCG_THREADS", "3", 1);
  const std::string b = serialize_checkpoint(train(c, mnist64()));
  unsetenv("SCG_THREADS");
  EXPECT_EQ(a, b);
  TrainConfig d = c;
  d.seed = 1;
  EXPECT_NE(a, serialize_checkpoint(train(d, mnist64())));
}

TEST(Train, AblationLeavesCodebookUntouched) {
  TrainConfig c = tiny_config();
  c.objective.lambda1 = 0;
  c.objective.lambda2 = 0;
  c.total_steps = 10;
  const Checkpoint init = initial_checkpoint(c);
  const Checkpoint out = train(c, mnist64());
  EXPECT_EQ(out.codebook.matrices(), init.codebook.matrices());
  EXPECT_NE(out.bank.weights(), init.bank.weights());
  EXPECT_EQ(out.optim.block("codebook").m.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Train, ResumeMatchesUninterrupted) {
  const TrainConfig c = tiny_config();
  const fs::path dir = scratch("resume");
  const Checkpoint full = train(c, mnist64(), {dir.string(), {}, {}});
  TrainOptions o;
  o.resume_from = (dir / "checkpoints" / "step_0000003.ckpt").string();
  EXPECT_EQ(serialize_checkpoint(train(c, mnist64(), o)), serialize_checkpoint(full));
}

TEST(Train, WritesLayoutAndLossCsv) {
  const TrainConfig c = tiny_config();
  const fs::path dir = scratch("layout");
  train(c, mnist64(), {dir.string(), {}, {}});
  for (const char* f : {"step_0000000.ckpt", "step_0000003.ckpt", "final.ckpt"})
    EXPECT_TRUE(fs::exists(dir / "checkpoints" / f)) << f;
  std::ifstream csv(dir / "logs" / "loss.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,lr,recon,equ,sym,total");
  std::vector<long> steps;
  while (std::getline(csv, line)) steps.push_back(std::stol(line.substr(0, line.find(','))));
  // Every log_every steps plus the last one.
  EXPECT_EQ(steps, (std::vector<long>{0, 2, 4, 5}));
}

TEST(Train, LossFallsOver100Steps) {
  TrainConfig c;
  c.total_steps = 100;
  c.log_every = 1;
  std::vector<double> total;
  TrainOptions o;
  o.on_log = [&](const LossRecord& r) { total.push_back(r.total); };
  train(c, mnist64(), o);
  ASSERT_EQ(total.size(), 100u);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += total[std::size_t(i)];
    tail += total[total.size() - 1 - std::size_t(i)];
  }
  EXPECT_LT(tail, head);
}

TEST(Train, ChannelMismatchIsConfigError) {
  TrainConfig c = tiny_config();
  c.model.in_channels = 3;
  EXPECT_THROW(train(c, mnist64()), ConfigError);
}
