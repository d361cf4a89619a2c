#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "render.hpp"
#include "scg/completion.hpp"
#include "scg/config.hpp"
#include "scg/gradcheck.hpp"
#include "scg/image_io.hpp"

using namespace scg;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kPaperSteps = 40000;

struct Layout {
  fs::path root;
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path logs() const { return root / "logs"; }
  fs::path figures() const { return root / "figures"; }
  fs::path tables() const { return root / "tables"; }

  void create() const {
    for (const auto& d : {checkpoints(), logs(), figures(), tables()}) fs::create_directories(d);
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

/// Loss lines on stdout, thinned to every tenth logged step.
std::function<void(const LossRecord&)> progress(const TrainConfig& t) {
  const std::int64_t every = std::max<std::int64_t>(1, t.log_every * 10);
  return [every, total = t.total_steps](const LossRecord& r) {
    if (r.step % every != 0 && r.step + 1 != total) return;
    std::printf("step %7lld  lr %.3e  recon %.4f  equ %.4f  sym %.4f  total %.4f\n",
                static_cast<long long>(r.step), r.lr, r.recon, r.equ, r.sym, r.total);
    std::fflush(stdout);
  };
}

Checkpoint train_run(const RunConfig& rc, const Dataset& data, const std::string& resume = {}) {
  const Layout lay{rc.output_dir};
  lay.create();
  write_text(lay.root / "config.yaml", emit_config(rc));
  TrainOptions o;
  o.out_dir = rc.output_dir;
  o.resume_from = resume;
  o.on_log = progress(rc.train);
  return train(rc.train, data, o);
}

RunConfig load_run_config(const std::string& path, bool paper_steps, const std::string& out) {
  RunConfig rc = load_config(path);
  if (paper_steps) rc.train.total_steps = kPaperSteps;
  if (!out.empty()) rc.output_dir = out;
  rc.validate();
  return rc;
}

/// For a checkpoint inside <run>/checkpoints/, the run directory.
fs::path run_dir_of(const fs::path& ckpt) {
  const fs::path parent = fs::absolute(ckpt).parent_path();
  return parent.filename() == "checkpoints" ? parent.parent_path() : parent;
}

/// Explicit --config, else the run's materialized config, else defaults.
RunConfig config_for_checkpoint(const Checkpoint& cp, const fs::path& ckpt,
                                const std::string& explicit_path) {
  RunConfig rc;
  fs::path src = explicit_path;
  if (src.empty() && fs::exists(run_dir_of(ckpt) / "config.yaml")) src = run_dir_of(ckpt) / "config.yaml";
  if (!src.empty()) {
    rc = load_config(src.string());
  } else {
    std::cerr << "note: no config.yaml next to " << ckpt.string() << ", using defaults\n";
    rc.train.model.modules = cp.bank.modules();
    rc.train.model.module_len = cp.bank.module_len();
    rc.groups = default_groups(cp.bank.modules());
  }
  if (rc.train.model.modules != cp.bank.modules())
    throw ConfigError("config has " + std::to_string(rc.train.model.modules) +
                      " modules, checkpoint " + std::to_string(cp.bank.modules()));
  if (fnv1a64(canonical_text(rc.train)) != cp.config_hash)
    std::cerr << "note: config hash " << hash_hex(fnv1a64(canonical_text(rc.train)))
              << " differs from checkpoint " << hash_hex(cp.config_hash) << "\n";
  rc.validate();
  return rc;
}

void write_curves(const fs::path& p, const std::vector<KernelTuning>& t, bool orientation) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << "module,kernel,axis,value\n" << std::setprecision(8);
  for (const auto& k : t) {
    const TuningCurve& c = orientation ? k.orientation : k.frequency;
    for (std::size_t i = 0; i < c.axis.size(); ++i)
      out << k.module << ',' << k.kernel << ',' << c.axis[i] << ',' << c.response[i] << '\n';
  }
}

std::vector<std::vector<TuningCurve>> by_module(const std::vector<KernelTuning>& t, Index modules,
                                                bool orientation) {
  std::vector<std::vector<TuningCurve>> g(static_cast<std::size_t>(modules));
  for (const auto& k : t) g[std::size_t(k.module)].push_back(orientation ? k.orientation : k.frequency);
  return g;
}

int cmd_train(const std::string& config, bool paper_steps, const std::string& out,
              const std::string& resume) {
  const RunConfig rc = load_run_config(config, paper_steps, out);
  const Dataset data = load_split(rc.data, true);
  std::printf("training on %zu images, %lld steps, output %s\n", data.size(),
              static_cast<long long>(rc.train.total_steps), rc.output_dir.c_str());
  train_run(rc, data, resume);
  std::printf("final checkpoint %s\n", (Layout{rc.output_dir}.checkpoints() / "final.ckpt").c_str());
  return 0;
}

int cmd_gradcheck(const std::string& config) {
  const RunConfig rc = load_run_config(config, false, {});
  const GradcheckReport rep = run_gradcheck(rc.gradcheck, rc.train.objective, rc.train.model.variant);
  for (const auto& t : rep.terms)
    std::printf("%-6s  max rel error %.3e  (%lld coordinates, worst %lld: analytic %.6e fd %.6e)\n",
                t.term.c_str(), t.result.max_rel_error, static_cast<long long>(t.result.checked),
                static_cast<long long>(t.result.worst_coordinate), t.result.worst_analytic,
                t.result.worst_numeric);
  std::printf("max relative error %.3e, tolerance %.1e, %.2f s: %s\n", rep.max_rel_error,
              rc.gradcheck.tolerance, rep.seconds, rep.passed ? "ok" : "FAILED");
  return rep.passed ? 0 : 1;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& config, const std::string& out) {
  const Checkpoint cp = load_checkpoint(ckpt_path);
  const RunConfig rc = config_for_checkpoint(cp, ckpt_path, config);
  const Layout lay{out.empty() ? run_dir_of(ckpt_path) : fs::path(out)};
  lay.create();
  const AnalysisConfig& an = rc.analysis;
  const KernelBank<float>& bank = cp.bank;
  const Index k = bank.modules();

  write_png((lay.figures() / "kernel_grid.png").string(), render::upscale(kernel_grid_image(bank), 4));

  const Dataset test = load_split(rc.data, false);
  const ModelSummary s = summarize(bank, cp.codebook, test, an.equivariance_samples, rc.train.aug,
                                   an.tuning, an.selectivity_threshold, an.seed);
  write_curves(lay.tables() / "frequency_tuning.csv", s.tuning, false);
  write_curves(lay.tables() / "orientation_tuning.csv", s.tuning, true);
  write_png((lay.figures() / "frequency_tuning.png").string(),
            render::curve_panels(by_module(s.tuning, k, false)));
  write_png((lay.figures() / "orientation_tuning.png").string(),
            render::curve_panels(by_module(s.tuning, k, true)));
  {
    std::ofstream cv(lay.tables() / "circular_variance.csv");
    cv << "module,kernel,preferred_frequency,preferred_orientation,circular_variance,selective\n"
       << std::setprecision(8);
    for (const auto& t : s.tuning)
      cv << t.module << ',' << t.kernel << ',' << t.preferred_frequency << ','
         << t.preferred_orientation << ',' << t.circular_variance << ','
         << (t.circular_variance < an.selectivity_threshold ? 1 : 0) << '\n';
  }

  // Rows: original, full reconstruction, then one column per module.
  std::vector<ImageTensor<float>> rows;
  for (Index i = 0; i < std::min<Index>(an.reconstruction_images, Index(test.size())); ++i) {
    const ImageTensor<float>& img = test.images[std::size_t(i)];
    std::vector<ImageTensor<float>> tiles{img, clamp01(decode(bank, encode(bank, img)))};
    for (Index m = 0; m < k; ++m) tiles.push_back(render::normalize(module_reconstruction(bank, img, {m})));
    rows.push_back(render::hstack(tiles));
  }
  write_png((lay.figures() / "module_reconstructions.png").string(),
            render::upscale(render::vstack(rows, 0), 3));

  // Rotation sweep of channel 0 of every module about the grid center.
  std::vector<TransformParams> path;
  for (Index j = 0; j < an.sweep_frames; ++j)
    path.push_back({0.0, 0.0, 2.0 * std::numbers::pi * double(j) / double(an.sweep_frames)});
  const Index side = test.empty() ? 28 : test.side;
  std::ofstream sc(lay.tables() / "sweep_correlation.csv");
  sc << "module,mean_adjacent_correlation\n" << std::setprecision(8);
  double corr_all = 0;
  std::vector<ImageTensor<float>> sweep_rows;
  for (Index m = 0; m < k; ++m) {
    const auto frames = submanifold_sweep(bank, cp.codebook, m, 0, path, side, side);
    double c = 0;
    for (std::size_t j = 0; j + 1 < frames.size(); ++j) c += correlation(frames[j], frames[j + 1]);
    c = frames.size() > 1 ? c / double(frames.size() - 1) : 1.0;
    corr_all += c / double(k);
    sc << m << ',' << c << '\n';
    std::vector<ImageTensor<float>> tiles;
    for (const auto& f : frames) tiles.push_back(render::normalize(f));
    sweep_rows.push_back(render::hstack(tiles));
  }
  write_png((lay.figures() / "submanifold_sweeps.png").string(),
            render::upscale(render::vstack(sweep_rows, 0), 2));

  const std::vector<std::pair<std::string, double>> summary{
      {"step", double(cp.optim.step)},
      {"frequency_variance_ratio", s.frequency_variance_ratio},
      {"selective_fraction", s.selective_fraction},
      {"selectivity_threshold", an.selectivity_threshold},
      {"equivariance_error", s.equivariance_error},
      {"reconstruction_psnr", s.reconstruction_psnr},
      {"mean_sweep_correlation", corr_all}};
  std::ofstream sum(lay.tables() / "summary.csv");
  sum << "metric,value\n" << std::setprecision(10);
  for (const auto& [name, v] : summary) {
    sum << name << ',' << v << '\n';
    std::printf("%-26s %s\n", name.c_str(), fmt(v).c_str());
  }
  std::printf("artifacts in %s\n", lay.root.c_str());
  return 0;
}

int cmd_complete(const std::string& ckpt_path, const std::string& group, const std::string& config,
                 const std::string& out) {
  const Checkpoint cp = load_checkpoint(ckpt_path);
  const RunConfig rc = config_for_checkpoint(cp, ckpt_path, config);
  const Layout lay{out.empty() ? run_dir_of(ckpt_path) : fs::path(out)};
  lay.create();
  std::vector<ModuleGroup> groups;
  for (const auto& g : rc.groups)
    if (group == "all" || g.name == group) groups.push_back(g);
  if (groups.empty()) {
    std::string names;
    for (const auto& g : rc.groups) names += " " + g.name;
    throw ConfigError("unknown group '" + group + "'; configured:" + names + " (or all)");
  }
  const Dataset train = load_split(rc.data, true);
  const Dataset test = load_split(rc.data, false);
  const CompletionConfig& cc = rc.completion;
  CompletionTrainConfig tc{cc.window, cc.steps, cc.batch_size, cc.lr0, cc.weight_decay, cc.seed};

  std::vector<CompletionMetrics> done, base;
  for (const auto& g : groups) {
    const CompletionMap map = train_completion(cp.bank, train, g, tc, [&](std::int64_t step, double loss) {
      if (step % 250 == 0 || step + 1 == cc.steps)
        std::printf("%s step %5lld  loss %.5f\n", g.name.c_str(), static_cast<long long>(step), loss);
    });
    save_completion((lay.checkpoints() / ("completion_" + g.name + ".cmp")).string(), map);
    done.push_back(evaluate_completion(map, cp.bank, test, cc.eval_images));
    base.push_back(evaluate_completion(map, cp.bank, test, cc.eval_images, true));
    std::printf("%s  psnr %.3f dB (zero-padded %.3f dB)  ssim %.4f (zero-padded %.4f)\n",
                g.name.c_str(), done.back().psnr_gray, base.back().psnr_gray, done.back().ssim,
                base.back().ssim);

    // Columns: original, condition (group only), completed.
    std::vector<ImageTensor<float>> rows;
    for (Index i = 0; i < std::min<Index>(cc.strip_images, Index(test.size())); ++i) {
      const ImageTensor<float>& img = test.images[std::size_t(i)];
      const FeatureMap<float> f = restrict_to_modules(encode(cp.bank, img), g.modules);
      rows.push_back(render::hstack({img, clamp01(decode(cp.bank, f)),
                                     clamp01(decode(cp.bank, complete(map, f, g.modules)))}));
    }
    write_png((lay.figures() / ("completion_" + g.name + ".png")).string(),
              render::upscale(render::vstack(rows, 0), 3));
  }
  write_metrics_csv((lay.tables() / ("completion_" + group + ".csv")).string(), done);
  write_metrics_csv((lay.tables() / ("completion_" + group + "_zero_padded.csv")).string(), base);
  return 0;
}

int cmd_ablate(const std::string& config, bool paper_steps, const std::string& out) {
  const RunConfig rc = load_run_config(config, paper_steps, out);
  const Layout lay{rc.output_dir};
  lay.create();
  const Dataset train = load_split(rc.data, true);
  const Dataset test = load_split(rc.data, false);

  RunConfig con = rc, abl = rc;
  con.output_dir = (lay.root / "constrained").string();
  abl.output_dir = (lay.root / "ablation").string();
  abl.train.objective.lambda1 = 0;
  abl.train.objective.lambda2 = 0;

  struct Row {
    std::string name;
    Checkpoint cp;
  };
  std::vector<Row> runs;
  runs.push_back({"random_init", initial_checkpoint(con.train)});
  std::printf("constrained run -> %s\n", con.output_dir.c_str());
  runs.push_back({"constrained", train_run(con, train)});
  std::printf("ablation run (lambda1 = lambda2 = 0) -> %s\n", abl.output_dir.c_str());
  runs.push_back({"ablation", train_run(abl, train)});

  const Codebook<float> init_ablation = initial_checkpoint(abl.train).codebook;
  const AnalysisConfig& an = rc.analysis;
  std::ofstream csv(lay.tables() / "ablation.csv");
  csv << "run,frequency_variance_ratio,selective_fraction,equivariance_error,reconstruction_psnr,"
         "codebook_max_change\n"
      << std::setprecision(10);
  std::printf("%-12s %12s %10s %10s %10s %12s\n", "run", "freq_ratio", "selective", "equ_err",
              "psnr_dB", "cb_change");
  double ratio_con = 0, ratio_abl = 0;
  for (const auto& r : runs) {
    const ModelSummary s = summarize(r.cp.bank, r.cp.codebook, test, an.equivariance_samples,
                                     rc.train.aug, an.tuning, an.selectivity_threshold, an.seed);
    const Codebook<float>& ref = r.name == "ablation" ? init_ablation : runs[0].cp.codebook;
    const double change = (r.cp.codebook.matrices() - ref.matrices()).cwiseAbs().maxCoeff();
    csv << r.name << ',' << s.frequency_variance_ratio << ',' << s.selective_fraction << ','
        << s.equivariance_error << ',' << s.reconstruction_psnr << ',' << change << '\n';
    std::printf("%-12s %12.4f %10.4f %10.4f %10.3f %12.3e\n", r.name.c_str(),
                s.frequency_variance_ratio, s.selective_fraction, s.equivariance_error,
                s.reconstruction_psnr, change);
    if (r.name == "constrained") ratio_con = s.frequency_variance_ratio;
    if (r.name == "ablation") ratio_abl = s.frequency_variance_ratio;
  }
  std::printf("frequency ratio, constrained over ablation: %s\n",
              ratio_abl > 0 ? fmt(ratio_con / ratio_abl).c_str() : "inf");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular equivariant autoencoder: training, analysis and pattern completion"};
  app.require_subcommand(1);
  std::string config, ckpt, group, out, resume;
  bool paper_steps = false;

  auto* train = app.add_subcommand("train", "Train the autoencoder; writes checkpoints and loss log");
  train->add_option("config", config, "YAML config")->required();
  train->add_flag("--paper-steps", paper_steps, "Train for 40000 steps instead of total_steps");
  train->add_option("--out", out, "Override output.dir");
  train->add_option("--resume", resume, "Continue from this checkpoint");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  grad->add_option("config", config, "YAML config")->required();

  auto* analyze = app.add_subcommand("analyze", "Kernel grid, tuning curves, sweeps and statistics");
  analyze->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  analyze->add_option("--config", config, "Config (default: the run's config.yaml)");
  analyze->add_option("--out", out, "Output directory (default: the run directory)");

  auto* comp = app.add_subcommand("complete", "Train and evaluate completion from a module group");
  comp->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  comp->add_option("group", group, "Configured group name, or all")->required();
  comp->add_option("--config", config, "Config (default: the run's config.yaml)");
  comp->add_option("--out", out, "Output directory (default: the run directory)");

  auto* ablate = app.add_subcommand("ablate", "Constrained run against the lambda1 = lambda2 = 0 baseline");
  ablate->add_option("config", config, "YAML config")->required();
  ablate->add_flag("--paper-steps", paper_steps, "Train for 40000 steps instead of total_steps");
  ablate->add_option("--out", out, "Override output.dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config, paper_steps, out, resume);
    if (*grad) return cmd_gradcheck(config);
    if (*analyze) return cmd_analyze(ckpt, config, out);
    if (*comp) return cmd_complete(ckpt, group, config, out);
    if (*ablate) return cmd_ablate(config, paper_steps, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
