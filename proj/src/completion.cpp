#include "scg/completion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "binary_io.hpp"

namespace scg {

CompletionMap CompletionMap::zeros(const ModuleGroup& group, Index modules, Index module_len,
                                   Index window) {
  if (window < 0) throw PreconditionError("CompletionMap: window radius must be >= 0");
  if (group.modules.empty()) throw PreconditionError("CompletionMap: group " + group.name + " is empty");
  validate_groups({group}, modules);
  if (Index(group.modules.size()) >= modules)
    throw PreconditionError("CompletionMap: group " + group.name +
                            " covers every module, nothing to complete");
  CompletionMap m;
  m.group = group.name;
  m.source_modules = group.modules;
  std::sort(m.source_modules.begin(), m.source_modules.end());
  m.modules = modules;
  m.module_len = module_len;
  m.window = window;
  const Index src = Index(m.source_modules.size()) * module_len;
  m.weights = RowMatrix<float>::Zero(modules * module_len - src, src * m.taps());
  m.bias = Vector<float>::Zero(modules * module_len - src);
  return m;
}

std::vector<Index> CompletionMap::source_channels() const {
  std::vector<Index> out;
  for (Index i : source_modules)
    for (Index c = 0; c < module_len; ++c) out.push_back(i * module_len + c);
  return out;
}

std::vector<Index> CompletionMap::target_channels() const {
  std::vector<Index> out;
  for (Index i = 0; i < modules; ++i)
    if (!std::binary_search(source_modules.begin(), source_modules.end(), i))
      for (Index c = 0; c < module_len; ++c) out.push_back(i * module_len + c);
  return out;
}

namespace {

void check_layout(const CompletionMap& map, const FeatureMap<float>& f) {
  if (f.modules() != map.modules || f.module_len() != map.module_len)
    throw ShapeError("completion: feature partition " + std::to_string(f.modules()) + "x" +
                     std::to_string(f.module_len()) + " does not match map " +
                     std::to_string(map.modules) + "x" + std::to_string(map.module_len));
}

} // namespace

RowMatrix<float> source_patches(const CompletionMap& map, const FeatureMap<float>& f) {
  check_layout(map, f);
  const auto src = map.source_channels();
  const Index w = map.window, side = 2 * w + 1, H = f.height(), W = f.width();
  RowMatrix<float> p = RowMatrix<float>::Zero(Index(src.size()) * map.taps(), f.sites());
  for (std::size_t c = 0; c < src.size(); ++c)
    for (Index dy = -w; dy <= w; ++dy)
      for (Index dx = -w; dx <= w; ++dx) {
        const Index row = (Index(c) * side + (dy + w)) * side + (dx + w);
        for (Index y = std::max<Index>(0, -dy); y < std::min(H, H - dy); ++y)
          for (Index x = std::max<Index>(0, -dx); x < std::min(W, W - dx); ++x)
            p(row, y * W + x) = f(src[c], y + dy, x + dx);
      }
  return p;
}

namespace {

FeatureMap<float> assemble(const CompletionMap& map, const FeatureMap<float>& f,
                           const RowMatrix<float>* prediction) {
  FeatureMap<float> out = f.zeros_like();
  for (Index c : map.source_channels()) out.data().row(c) = f.data().row(c);
  if (prediction) {
    const auto tgt = map.target_channels();
    for (std::size_t t = 0; t < tgt.size(); ++t) out.data().row(tgt[t]) = prediction->row(Index(t));
  }
  return out;
}

RowMatrix<float> predict(const CompletionMap& map, const RowMatrix<float>& patches) {
  RowMatrix<float> pred = map.weights * patches;
  pred.colwise() += map.bias;
  return pred;
}

/// Target channels of `f` as rows.
RowMatrix<float> targets(const CompletionMap& map, const FeatureMap<float>& f) {
  const auto tgt = map.target_channels();
  RowMatrix<float> t(Index(tgt.size()), f.sites());
  for (std::size_t i = 0; i < tgt.size(); ++i) t.row(Index(i)) = f.data().row(tgt[i]);
  return t;
}

} // namespace

FeatureMap<float> complete(const CompletionMap& map, const FeatureMap<float>& features,
                           const std::vector<Index>& group) {
  std::vector<Index> g = group;
  std::sort(g.begin(), g.end());
  if (g != map.source_modules)
    throw ConfigError("complete: features carry a different module group than map '" +
                      map.group + "'");
  const RowMatrix<float> pred = predict(map, source_patches(map, features));
  return assemble(map, features, &pred);
}

CompletionMap train_completion(const KernelBank<float>& bank, const Dataset& data,
                               const ModuleGroup& group, const CompletionTrainConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_log) {
  if (data.empty()) throw PreconditionError("train_completion: dataset is empty");
  if (cfg.steps < 0 || cfg.batch_size < 1)
    throw PreconditionError("train_completion: steps >= 0 and batch_size >= 1 required");
  CompletionMap map = CompletionMap::zeros(group, bank.modules(), bank.module_len(), cfg.window);
  OptimState st = OptimState::zeros({{"weights", map.weights.size()}, {"bias", map.bias.size()}});
  AdamHyper h;
  h.weight_decay = cfg.weight_decay;
  AdamHyper hb;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    RowMatrix<float> gw = RowMatrix<float>::Zero(map.weights.rows(), map.weights.cols());
    Vector<float> gb = Vector<float>::Zero(map.bias.size());
    double loss = 0;
    for (Index b = 0; b < cfg.batch_size; ++b) {
      const FeatureMap<float> f = encode(bank, data.images[pick(rng)]);
      const RowMatrix<float> p = source_patches(map, f);
      const RowMatrix<float> r = predict(map, p) - targets(map, f);
      loss += double(r.squaredNorm());
      gw.noalias() += r * p.transpose();
      gb += r.rowwise().sum();
    }
    const float scale = 2.0f / float(cfg.batch_size);
    gw *= scale;
    gb *= scale;
    loss /= double(cfg.batch_size);
    if (!std::isfinite(loss))
      throw NumericError("train_completion: non-finite loss at step " + std::to_string(step));
    const double lr = cosine_lr(step, cfg.steps, cfg.lr0);
    Eigen::Map<Vector<float>> w(map.weights.data(), map.weights.size());
    Eigen::Map<const Vector<float>> g(gw.data(), gw.size());
    adamw_update(w, g, st.block("weights"), st.step, lr, h);
    adamw_update(map.bias, gb, st.block("bias"), st.step, lr, hb);
    ++st.step;
    if (on_log) on_log(step, loss);
  }
  return map;
}

double completion_loss(const CompletionMap& map, const KernelBank<float>& bank,
                       const Dataset& data, Index n) {
  n = std::min<Index>(n, Index(data.size()));
  if (n < 1) throw PreconditionError("completion_loss: no images");
  double loss = 0;
  for (Index i = 0; i < n; ++i) {
    const FeatureMap<float> f = encode(bank, data.images[std::size_t(i)]);
    loss += double((predict(map, source_patches(map, f)) - targets(map, f)).squaredNorm());
  }
  return loss / double(n);
}

ImageTensor<float> clamp01(const ImageTensor<float>& image) {
  ImageTensor<float> out = image;
  out.data() = out.data().cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

CompletionMetrics evaluate_completion(const CompletionMap& map, const KernelBank<float>& bank,
                                      const Dataset& data, Index n, bool baseline) {
  n = std::min<Index>(n, Index(data.size()));
  if (n < 1) throw PreconditionError("evaluate_completion: no images");
  CompletionMetrics m;
  m.group = map.group;
  const bool color = data.channels == 3;
  double pg = 0, pc = 0, ss = 0;
  for (Index i = 0; i < n; ++i) {
    const ImageTensor<float>& img = data.images[std::size_t(i)];
    const FeatureMap<float> f = encode(bank, img);
    const FeatureMap<float> full =
        baseline ? assemble(map, f, nullptr) : complete(map, f, map.source_modules);
    const ImageTensor<float> out = clamp01(decode(bank, full));
    pg += psnr(luma(out), luma(img));
    if (color) pc += psnr(out, img);
    ss += ssim(out, img);
  }
  m.psnr_gray = pg / double(n);
  m.psnr_color = color ? pc / double(n) : std::numeric_limits<double>::quiet_NaN();
  m.ssim = ss / double(n);
  return m;
}

void write_metrics_csv(const std::string& path, const std::vector<CompletionMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_metrics_csv: cannot open " + path);
  out << "group,psnr_gray,psnr_color,ssim\n" << std::setprecision(8);
  for (const auto& r : rows) {
    out << r.group << ',' << r.psnr_gray << ',';
    if (!std::isnan(r.psnr_color)) out << r.psnr_color;
    out << ',' << r.ssim << '\n';
  }
}

namespace {
constexpr char kMagic[8] = {'S', 'C', 'G', 'C', 'M', 'P', '0', '1'};
}

void save_completion(const std::string& path, const CompletionMap& map) {
  Writer w;
  w.str().append(kMagic, 8);
  w.bytes(map.group);
  w.pod<std::int64_t>(map.modules);
  w.pod<std::int64_t>(map.module_len);
  w.pod<std::int64_t>(map.window);
  w.pod<std::uint64_t>(map.source_modules.size());
  for (Index m : map.source_modules) w.pod<std::int64_t>(m);
  w.floats(map.weights.data(), map.weights.size());
  w.floats(map.bias.data(), map.bias.size());
  write_file_atomic(path, w.str());
}

CompletionMap load_completion(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError("completion map: bad magic in " + path + ", expected \"SCGCMP01\"");
  const std::string body = bytes.substr(8);
  Reader r(body, "completion map");
  ModuleGroup g;
  g.name = r.bytes("group name");
  const Index modules = r.pod<std::int64_t>("modules");
  const Index len = r.pod<std::int64_t>("module_len");
  const Index window = r.pod<std::int64_t>("window");
  const auto n = r.pod<std::uint64_t>("source count");
  if (n > std::uint64_t(std::max<Index>(modules, 0)))
    throw FormatError("completion map: source count exceeds module count");
  for (std::uint64_t i = 0; i < n; ++i) g.modules.push_back(r.pod<std::int64_t>("source module"));
  CompletionMap map;
  try {
    map = CompletionMap::zeros(g, modules, len, window);
  } catch (const Error& e) {
    throw FormatError(std::string("completion map: invalid header: ") + e.what());
  }
  const Vector<float> w = r.floats("weights", map.weights.size());
  map.weights = Eigen::Map<const RowMatrix<float>>(w.data(), map.weights.rows(), map.weights.cols());
  map.bias = r.floats("bias", map.bias.size());
  if (!r.done()) throw FormatError("completion map: trailing bytes");
  return map;
}

} // namespace scg
