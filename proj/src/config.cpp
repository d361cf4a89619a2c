#include "scg/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace scg {

std::vector<ModuleGroup> default_groups(Index modules) {
  std::vector<ModuleGroup> out;
  for (Index m = 0; m < modules; m += 2) {
    ModuleGroup g;
    g.name = "HC" + std::to_string(m / 2);
    g.modules.push_back(m);
    if (m + 1 < modules) g.modules.push_back(m + 1);
    out.push_back(std::move(g));
  }
  return out;
}

void RunConfig::validate() const {
  train.validate();
  if (data.format != "idx" && data.format != "cifar10")
    throw ConfigError("data.format must be idx or cifar10, got '" + data.format + "'");
  if (data.train_limit < 0 || data.test_limit < 0) throw ConfigError("data limits must be >= 0");
  if (groups.empty()) throw ConfigError("groups: at least one group is required");
  for (const auto& g : groups)
    if (g.modules.empty()) throw ConfigError("group " + g.name + " is empty");
  validate_groups(groups, train.model.modules);
  const auto& t = analysis.tuning;
  if (t.n_orientations < 1 || t.n_phases < 1 || t.n_frequencies < 1)
    throw ConfigError("analysis: tuning counts must be >= 1");
  if (!(t.min_frequency > 0) || t.max_frequency > 0.5 || t.min_frequency > t.max_frequency)
    throw ConfigError("analysis: frequency range must lie in (0, 0.5]");
  if (analysis.equivariance_samples < 1 || analysis.sweep_frames < 1)
    throw ConfigError("analysis: sample and frame counts must be >= 1");
  if (completion.window < 0) throw ConfigError("completion.window must be >= 0");
  if (completion.steps < 0 || completion.batch_size < 1 || completion.eval_images < 1)
    throw ConfigError("completion: steps >= 0, batch_size >= 1, eval_images >= 1 required");
  const auto& g = gradcheck;
  if (g.modules < 1 || g.module_len < 1 || g.kernel_side < 1 || g.stride < 1 ||
      g.image_side < g.kernel_side || g.grid_t < 1 || g.grid_r < 1 || !(g.epsilon > 0) ||
      g.coordinates < 1)
    throw ConfigError("gradcheck: invalid instance sizes");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

namespace {

class Section {
public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw ConfigError(path_ + ": expected a mapping");
  }
  /// Throws on any key that no get/child call asked for.
  void done() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown config key '" + full(key) + "'");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("config key '" + full(key) + "' has an invalid value");
    }
  }

  YAML::Node child(const std::string& key) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node();
    return node_[key];
  }

private:
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename E>
E parse_enum(const std::string& path, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("config key '" + path + "': '" + v + "' is not one of " + names);
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

const char* boolean(bool b) { return b ? "true" : "false"; }

} // namespace

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (root && !root.IsNull() && !root.IsMap()) throw ConfigError("config: top level must be a mapping");
  RunConfig c;
  TrainConfig& t = c.train;
  bool have_groups = false;
  {
    Section top(root, "");
    {
      Section s(top.child("model"), "model");
      s.get("modules", t.model.modules);
      s.get("module_len", t.model.module_len);
      s.get("kernel_side", t.model.kernel_side);
      s.get("stride", t.model.stride);
      s.get("in_channels", t.model.in_channels);
      std::string v = "per_module_transrot";
      s.get("constraint_variant", v);
      t.model.variant = parse_enum<ConstraintVariant>(
          "model.constraint_variant", v,
          {{"per_module_transrot", ConstraintVariant::per_module_transrot},
           {"per_kernel_trans_plus_module_transrot",
            ConstraintVariant::per_kernel_trans_plus_module_transrot}});
      s.done();
    }
    {
      Section s(top.child("codebook"), "codebook");
      s.get("grid_t", t.grid_t);
      s.get("grid_r", t.grid_r);
      std::string v = "identity";
      s.get("init", v);
      t.codebook_init = parse_enum<CodebookInit>(
          "codebook.init", v, {{"identity", CodebookInit::identity}, {"random", CodebookInit::random}});
      s.get("noise", t.codebook_noise);
      s.done();
    }
    {
      Section s(top.child("objective"), "objective");
      s.get("lambda1", t.objective.lambda1);
      s.get("lambda2", t.objective.lambda2);
      s.get("temperature", t.objective.temperature);
      std::string v = "neg";
      s.get("sym_sign", v);
      t.objective.sym_sign =
          parse_enum<SymSign>("objective.sym_sign", v, {{"neg", SymSign::neg}, {"pos", SymSign::pos}});
      s.get("sym_full_grad", t.objective.sym_full_grad);
      s.done();
    }
    {
      Section s(top.child("train"), "train");
      s.get("total_steps", t.total_steps);
      s.get("batch_size", t.batch_size);
      s.get("lr0", t.lr0);
      s.get("lr_min", t.lr_min);
      s.get("weight_decay", t.weight_decay);
      s.get("decay_codebook", t.decay_codebook);
      s.get("seed", t.seed);
      s.get("checkpoint_every", t.checkpoint_every);
      s.get("log_every", t.log_every);
      s.get("history_tail", t.history_tail);
      s.done();
    }
    {
      Section s(top.child("aug"), "aug");
      s.get("max_translation_fraction", t.aug.max_translation_fraction);
      s.get("rotation_full_circle", t.aug.rotation_full_circle);
      s.get("seed", t.aug.seed);
      s.done();
    }
    {
      Section s(top.child("data"), "data");
      s.get("format", c.data.format);
      s.get("train_images", c.data.train_images);
      s.get("train_labels", c.data.train_labels);
      s.get("test_images", c.data.test_images);
      s.get("test_labels", c.data.test_labels);
      s.get("cifar_train", c.data.cifar_train);
      s.get("cifar_test", c.data.cifar_test);
      s.get("train_limit", c.data.train_limit);
      s.get("test_limit", c.data.test_limit);
      s.done();
    }
    {
      const YAML::Node g = top.child("groups");
      if (g && !g.IsNull()) {
        if (!g.IsSequence()) throw ConfigError("groups: expected a list");
        have_groups = true;
        for (std::size_t i = 0; i < g.size(); ++i) {
          Section s(g[i], "groups[" + std::to_string(i) + "]");
          ModuleGroup mg;
          s.get("name", mg.name);
          s.get("modules", mg.modules);
          if (mg.name.empty()) mg.name = "G" + std::to_string(i);
          c.groups.push_back(std::move(mg));
          s.done();
        }
      }
    }
    {
      Section s(top.child("analysis"), "analysis");
      auto& a = c.analysis;
      s.get("n_orientations", a.tuning.n_orientations);
      s.get("n_phases", a.tuning.n_phases);
      s.get("n_frequencies", a.tuning.n_frequencies);
      s.get("min_frequency", a.tuning.min_frequency);
      s.get("max_frequency", a.tuning.max_frequency);
      s.get("subtract_mean", a.tuning.subtract_mean);
      s.get("selectivity_threshold", a.selectivity_threshold);
      s.get("equivariance_samples", a.equivariance_samples);
      s.get("sweep_frames", a.sweep_frames);
      s.get("reconstruction_images", a.reconstruction_images);
      s.get("seed", a.seed);
      s.done();
    }
    {
      Section s(top.child("completion"), "completion");
      auto& m = c.completion;
      s.get("window", m.window);
      s.get("steps", m.steps);
      s.get("batch_size", m.batch_size);
      s.get("lr0", m.lr0);
      s.get("weight_decay", m.weight_decay);
      s.get("eval_images", m.eval_images);
      s.get("strip_images", m.strip_images);
      s.get("seed", m.seed);
      s.done();
    }
    {
      Section s(top.child("gradcheck"), "gradcheck");
      auto& g = c.gradcheck;
      s.get("modules", g.modules);
      s.get("module_len", g.module_len);
      s.get("kernel_side", g.kernel_side);
      s.get("stride", g.stride);
      s.get("image_side", g.image_side);
      s.get("grid_t", g.grid_t);
      s.get("grid_r", g.grid_r);
      s.get("epsilon", g.epsilon);
      s.get("coordinates", g.coordinates);
      s.get("tolerance", g.tolerance);
      s.get("seed", g.seed);
      s.done();
    }
    {
      Section s(top.child("output"), "output");
      s.get("dir", c.output_dir);
      s.done();
    }
    top.done();
  }
  if (!have_groups) c.groups = default_groups(t.model.modules);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& c) {
  const TrainConfig& t = c.train;
  std::ostringstream o;
  o << "model:\n"
    << "  modules: " << t.model.modules << "\n"
    << "  module_len: " << t.model.module_len << "\n"
    << "  kernel_side: " << t.model.kernel_side << "\n"
    << "  stride: " << t.model.stride << "\n"
    << "  in_channels: " << t.model.in_channels << "\n"
    << "  constraint_variant: "
    << (t.model.variant == ConstraintVariant::per_module_transrot
            ? "per_module_transrot"
            : "per_kernel_trans_plus_module_transrot")
    << "\n"
    << "codebook:\n"
    << "  grid_t: " << t.grid_t << "\n"
    << "  grid_r: " << t.grid_r << "\n"
    << "  init: " << (t.codebook_init == CodebookInit::identity ? "identity" : "random") << "\n"
    << "  noise: " << num(t.codebook_noise) << "\n"
    << "objective:\n"
    << "  lambda1: " << num(t.objective.lambda1) << "\n"
    << "  lambda2: " << num(t.objective.lambda2) << "\n"
    << "  temperature: " << num(t.objective.temperature) << "\n"
    << "  sym_sign: " << (t.objective.sym_sign == SymSign::neg ? "neg" : "pos") << "\n"
    << "  sym_full_grad: " << boolean(t.objective.sym_full_grad) << "\n"
    << "train:\n"
    << "  total_steps: " << t.total_steps << "\n"
    << "  batch_size: " << t.batch_size << "\n"
    << "  lr0: " << num(t.lr0) << "\n"
    << "  lr_min: " << num(t.lr_min) << "\n"
    << "  weight_decay: " << num(t.weight_decay) << "\n"
    << "  decay_codebook: " << boolean(t.decay_codebook) << "\n"
    << "  seed: " << t.seed << "\n"
    << "  checkpoint_every: " << t.checkpoint_every << "\n"
    << "  log_every: " << t.log_every << "\n"
    << "  history_tail: " << t.history_tail << "\n"
    << "aug:\n"
    << "  max_translation_fraction: " << num(t.aug.max_translation_fraction) << "\n"
    << "  rotation_full_circle: " << boolean(t.aug.rotation_full_circle) << "\n"
    << "  seed: " << t.aug.seed << "\n"
    << "data:\n"
    << "  format: " << c.data.format << "\n"
    << "  train_images: " << quote(c.data.train_images) << "\n"
    << "  train_labels: " << quote(c.data.train_labels) << "\n"
    << "  test_images: " << quote(c.data.test_images) << "\n"
    << "  test_labels: " << quote(c.data.test_labels) << "\n";
  for (const auto* list : {&c.data.cifar_train, &c.data.cifar_test}) {
    o << (list == &c.data.cifar_train ? "  cifar_train: [" : "  cifar_test: [");
    for (std::size_t i = 0; i < list->size(); ++i) o << (i ? ", " : "") << quote((*list)[i]);
    o << "]\n";
  }
  o << "  train_limit: " << c.data.train_limit << "\n"
    << "  test_limit: " << c.data.test_limit << "\n"
    << "groups:\n";
  for (const auto& g : c.groups) {
    o << "  - name: " << quote(g.name) << "\n    modules: [";
    for (std::size_t i = 0; i < g.modules.size(); ++i) o << (i ? ", " : "") << g.modules[i];
    o << "]\n";
  }
  const auto& a = c.analysis;
  o << "analysis:\n"
    << "  n_orientations: " << a.tuning.n_orientations << "\n"
    << "  n_phases: " << a.tuning.n_phases << "\n"
    << "  n_frequencies: " << a.tuning.n_frequencies << "\n"
    << "  min_frequency: " << num(a.tuning.min_frequency) << "\n"
    << "  max_frequency: " << num(a.tuning.max_frequency) << "\n"
    << "  subtract_mean: " << boolean(a.tuning.subtract_mean) << "\n"
    << "  selectivity_threshold: " << num(a.selectivity_threshold) << "\n"
    << "  equivariance_samples: " << a.equivariance_samples << "\n"
    << "  sweep_frames: " << a.sweep_frames << "\n"
    << "  reconstruction_images: " << a.reconstruction_images << "\n"
    << "  seed: " << a.seed << "\n";
  const auto& m = c.completion;
  o << "completion:\n"
    << "  window: " << m.window << "\n"
    << "  steps: " << m.steps << "\n"
    << "  batch_size: " << m.batch_size << "\n"
    << "  lr0: " << num(m.lr0) << "\n"
    << "  weight_decay: " << num(m.weight_decay) << "\n"
    << "  eval_images: " << m.eval_images << "\n"
    << "  strip_images: " << m.strip_images << "\n"
    << "  seed: " << m.seed << "\n";
  const auto& g = c.gradcheck;
  o << "gradcheck:\n"
    << "  modules: " << g.modules << "\n"
    << "  module_len: " << g.module_len << "\n"
    << "  kernel_side: " << g.kernel_side << "\n"
    << "  stride: " << g.stride << "\n"
    << "  image_side: " << g.image_side << "\n"
    << "  grid_t: " << g.grid_t << "\n"
    << "  grid_r: " << g.grid_r << "\n"
    << "  epsilon: " << num(g.epsilon) << "\n"
    << "  coordinates: " << g.coordinates << "\n"
    << "  tolerance: " << num(g.tolerance) << "\n"
    << "  seed: " << g.seed << "\n"
    << "output:\n"
    << "  dir: " << quote(c.output_dir) << "\n";
  return o.str();
}

Dataset load_split(const DataConfig& data, bool train) {
  Dataset ds;
  if (data.format == "cifar10") {
    const auto& files = train ? data.cifar_train : data.cifar_test;
    if (files.empty())
      throw ConfigError(std::string("data.") + (train ? "cifar_train" : "cifar_test") +
                        " lists no files");
    ds = load_cifar10(files);
  } else {
    ds = train ? load_idx(data.train_images, data.train_labels)
               : load_idx(data.test_images, data.test_labels);
  }
  const Index limit = train ? data.train_limit : data.test_limit;
  return ds.head(std::size_t(limit));
}

} // namespace scg
