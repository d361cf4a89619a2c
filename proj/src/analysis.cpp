#include "scg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <set>

namespace scg {

double TuningCurve::peak() const {
  if (response.empty()) throw PreconditionError("TuningCurve::peak: empty curve");
  const auto it = std::max_element(response.begin(), response.end());
  return axis[std::size_t(it - response.begin())];
}

void validate_groups(const std::vector<ModuleGroup>& groups, Index modules) {
  std::set<Index> seen;
  for (const auto& g : groups)
    for (Index m : g.modules) {
      if (m < 0 || m >= modules)
        throw ConfigError("group " + g.name + ": module " + std::to_string(m) +
                          " out of range [0, " + std::to_string(modules) + ")");
      if (!seen.insert(m).second)
        throw ConfigError("group " + g.name + ": module " + std::to_string(m) +
                          " already belongs to another group");
    }
}

namespace {

std::vector<double> linspace(double a, double b, Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[std::size_t(i)] = n == 1 ? a : a + (b - a) * double(i) / double(n - 1);
  return v;
}

std::vector<double> orientations(Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[std::size_t(i)] = std::numbers::pi * double(i) / double(n);
  return v;
}

/// Rows are flattened gratings for every (orientation, phase) at one
/// frequency, in that nesting order.
RowMatrix<float> stimuli(Index side, Index channels, double frequency, const TuningOptions& opt) {
  const auto thetas = orientations(opt.n_orientations);
  const Index n = side * side * channels;
  RowMatrix<float> s(opt.n_orientations * opt.n_phases, n);
  Index row = 0;
  for (double th : thetas)
    for (Index p = 0; p < opt.n_phases; ++p) {
      const double phase = 2.0 * std::numbers::pi * double(p) / double(opt.n_phases);
      ImageTensor<float> g = grating<float>(side, th, frequency, phase, channels);
      if (opt.subtract_mean) g.data().array() -= 0.5f;
      s.row(row++) = g.data().transpose();
    }
  return s;
}

void check_options(const TuningOptions& opt) {
  if (opt.n_orientations < 1 || opt.n_phases < 1 || opt.n_frequencies < 1)
    throw PreconditionError("tuning: counts must be >= 1");
  if (!(opt.min_frequency > 0) || opt.max_frequency > 0.5 || opt.min_frequency > opt.max_frequency)
    throw PreconditionError("tuning: frequency range must lie in (0, 0.5]");
}

void check_kernel(const ImageTensor<float>& k) {
  if (k.height() != k.width() || k.empty())
    throw PreconditionError("tuning: kernel must be square and non-empty");
}

} // namespace

TuningCurve orientation_tuning(const ImageTensor<float>& kernel, double frequency,
                               const TuningOptions& opt) {
  check_options(opt);
  check_kernel(kernel);
  const RowMatrix<float> s = stimuli(kernel.height(), kernel.channels(), frequency, opt);
  const Vector<float> r = (s * kernel.data()).cwiseAbs();
  TuningCurve c;
  c.axis = orientations(opt.n_orientations);
  c.response.resize(c.axis.size());
  for (Index o = 0; o < opt.n_orientations; ++o)
    c.response[std::size_t(o)] = double(r.segment(o * opt.n_phases, opt.n_phases).maxCoeff());
  return c;
}

namespace {

RowMatrix<float> frequency_responses(const RowMatrix<float>& kernels, Index side, Index channels,
                                     const TuningOptions& opt, const std::vector<double>& freqs) {
  // responses(kernel, frequency)
  RowMatrix<float> out(kernels.rows(), Index(freqs.size()));
  for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
    const RowMatrix<float> s = stimuli(side, channels, freqs[fi], opt);
    const RowMatrix<float> r = (kernels * s.transpose()).cwiseAbs();
    out.col(Index(fi)) = r.rowwise().maxCoeff();
  }
  return out;
}

} // namespace

TuningCurve frequency_tuning(const ImageTensor<float>& kernel, const TuningOptions& opt) {
  check_options(opt);
  check_kernel(kernel);
  const auto freqs = linspace(opt.min_frequency, opt.max_frequency, opt.n_frequencies);
  const RowMatrix<float> k = kernel.data().transpose();
  const RowMatrix<float> r = frequency_responses(k, kernel.height(), kernel.channels(), opt, freqs);
  TuningCurve c;
  c.axis = freqs;
  for (Index j = 0; j < r.cols(); ++j) c.response.push_back(double(r(0, j)));
  return c;
}

TuningCurve mean_curve(const std::vector<TuningCurve>& curves) {
  if (curves.empty()) throw PreconditionError("mean_curve: no curves");
  TuningCurve m;
  m.axis = curves.front().axis;
  m.response.assign(m.axis.size(), 0.0);
  for (const auto& c : curves) {
    if (c.axis != m.axis) throw ShapeError("mean_curve: curves have different axes");
    for (std::size_t i = 0; i < m.response.size(); ++i) m.response[i] += c.response[i];
  }
  for (double& r : m.response) r /= double(curves.size());
  return m;
}

double circular_variance(const TuningCurve& curve) {
  std::complex<double> z = 0;
  double total = 0;
  for (std::size_t i = 0; i < curve.axis.size(); ++i) {
    z += curve.response[i] * std::polar(1.0, 2.0 * curve.axis[i]);
    total += curve.response[i];
  }
  if (total <= 0) return 1.0;
  return std::clamp(1.0 - std::abs(z) / total, 0.0, 1.0);
}

std::vector<KernelTuning> tune_bank(const KernelBank<float>& bank, const TuningOptions& opt) {
  check_options(opt);
  const auto freqs = linspace(opt.min_frequency, opt.max_frequency, opt.n_frequencies);
  const RowMatrix<float> fr =
      frequency_responses(bank.weights(), bank.kernel_side(), bank.in_channels(), opt, freqs);
  std::vector<KernelTuning> out;
  for (Index j = 0; j < bank.kernel_count(); ++j) {
    KernelTuning t;
    t.module = bank.module_of(j);
    t.kernel = j;
    t.frequency.axis = freqs;
    for (Index f = 0; f < fr.cols(); ++f) t.frequency.response.push_back(double(fr(j, f)));
    t.preferred_frequency = t.frequency.peak();
    t.orientation = orientation_tuning(bank.kernel(j), t.preferred_frequency, opt);
    t.preferred_orientation = t.orientation.peak();
    t.circular_variance = circular_variance(t.orientation);
    out.push_back(std::move(t));
  }
  return out;
}

double frequency_variance_ratio(const std::vector<KernelTuning>& tuning, Index modules) {
  std::vector<std::vector<double>> by(static_cast<std::size_t>(modules));
  for (const auto& t : tuning) {
    if (t.module < 0 || t.module >= modules)
      throw IndexError("frequency_variance_ratio: module index out of range");
    by[std::size_t(t.module)].push_back(t.preferred_frequency);
  }
  std::vector<double> means;
  double within = 0;
  for (const auto& v : by) {
    if (v.empty()) throw PreconditionError("frequency_variance_ratio: empty module");
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double var = 0;
    for (double x : v) var += (x - mu) * (x - mu);
    within += var / double(v.size());
    means.push_back(mu);
  }
  within /= double(modules);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / double(modules);
  double between = 0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between /= double(modules);
  if (within == 0) return between == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return between / within;
}

double selective_fraction(const std::vector<KernelTuning>& tuning, double threshold) {
  if (tuning.empty()) return 0.0;
  const auto n = std::count_if(tuning.begin(), tuning.end(),
                               [&](const KernelTuning& t) { return t.circular_variance < threshold; });
  return double(n) / double(tuning.size());
}

ImageTensor<float> kernel_grid_image(const KernelBank<float>& bank) {
  const Index k = bank.modules(), l = bank.module_len(), K = bank.kernel_side();
  const Index c = bank.in_channels() == 3 ? 3 : 1;
  const Index h = k * K + k + 1, w = l * K + l + 1;
  ImageTensor<float> img(c, h, w);
  img.data().setOnes();
  for (Index j = 0; j < bank.kernel_count(); ++j) {
    const ImageTensor<float> ker = bank.kernel(j);
    const float lo = ker.data().minCoeff(), hi = ker.data().maxCoeff();
    const Index oy = 1 + (j / l) * (K + 1), ox = 1 + (j % l) * (K + 1);
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < K; ++y)
        for (Index x = 0; x < K; ++x) {
          // Multi-channel kernels other than RGB render their channel mean.
          float v;
          if (c == 3) {
            v = ker(ch, y, x);
          } else {
            v = 0;
            for (Index q = 0; q < ker.channels(); ++q) v += ker(q, y, x);
            v /= float(ker.channels());
          }
          img(ch, oy + y, ox + x) = hi > lo ? (v - lo) / (hi - lo) : 0.5f;
        }
  }
  return img;
}

FeatureMap<float> restrict_to_modules(const FeatureMap<float>& features,
                                      const std::vector<Index>& modules) {
  FeatureMap<float> out = features.zeros_like();
  for (Index m : modules) {
    if (m < 0 || m >= features.modules())
      throw IndexError("restrict_to_modules: module " + std::to_string(m) + " out of range");
    out.module(m) = features.module(m);
  }
  return out;
}

ImageTensor<float> module_reconstruction(const KernelBank<float>& bank,
                                         const ImageTensor<float>& image,
                                         const std::vector<Index>& modules) {
  return decode(bank, restrict_to_modules(encode(bank, image), modules));
}

std::vector<ImageTensor<float>> submanifold_sweep(const KernelBank<float>& bank,
                                                  const Codebook<float>& cb, Index module,
                                                  Index channel,
                                                  const std::vector<TransformParams>& path,
                                                  Index image_h, Index image_w) {
  const auto [gh, gw] = feature_grid(bank, image_h, image_w);
  const FeatureMap<float> probe =
      probe_onehot(bank, image_h, image_w, module, channel, gh / 2, gw / 2);
  std::vector<ImageTensor<float>> frames;
  frames.reserve(path.size());
  for (const auto& d : path) frames.push_back(decode(bank, predict_features(bank, cb, probe, d)));
  return frames;
}

double correlation(const ImageTensor<float>& a, const ImageTensor<float>& b) {
  if (!a.same_shape(b)) throw ShapeError("correlation: shapes differ");
  const Eigen::ArrayXd x = a.data().cast<double>().array() - a.data().cast<double>().mean();
  const Eigen::ArrayXd y = b.data().cast<double>().array() - b.data().cast<double>().mean();
  const double sx = std::sqrt((x * x).sum()), sy = std::sqrt((y * y).sum());
  if (sx == 0 || sy == 0) return 0.0;
  return (x * y).sum() / (sx * sy);
}

double equivariance_error(const KernelBank<float>& bank, const Codebook<float>& cb,
                          const Dataset& data, Index n_samples, const AugConfig& aug,
                          std::mt19937_64& rng) {
  if (n_samples < 1) throw PreconditionError("equivariance_error: n_samples must be >= 1");
  double sum = 0;
  for (Index s = 0; s < n_samples; ++s) {
    const TrainingPair p = sample_pair(data, aug, rng);
    const FeatureMap<float> f = encode(bank, p.image);
    const FeatureMap<float> fp = encode(bank, p.image_prime);
    const FeatureMap<float> pred = predict_features(bank, cb, f, p.delta);
    const double num = double((fp.data() - pred.data()).norm());
    sum += num / std::max(double(fp.data().norm()), 1e-8);
  }
  return sum / double(n_samples);
}

double reconstruction_psnr(const KernelBank<float>& bank, const Dataset& data, Index n) {
  n = std::min<Index>(n, Index(data.size()));
  if (n < 1) throw PreconditionError("reconstruction_psnr: no images");
  double sum = 0;
  for (Index i = 0; i < n; ++i) {
    const ImageTensor<float>& img = data.images[std::size_t(i)];
    ImageTensor<float> rec = decode(bank, encode(bank, img));
    rec.data() = rec.data().cwiseMax(0.0f).cwiseMin(1.0f);
    sum += psnr(rec, img);
  }
  return sum / double(n);
}

ModelSummary summarize(const KernelBank<float>& bank, const Codebook<float>& cb,
                       const Dataset& heldout, Index n_heldout, const AugConfig& aug,
                       const TuningOptions& tuning, double selectivity_threshold,
                       std::uint64_t seed) {
  ModelSummary s;
  s.tuning = tune_bank(bank, tuning);
  s.frequency_variance_ratio = frequency_variance_ratio(s.tuning, bank.modules());
  s.selective_fraction = selective_fraction(s.tuning, selectivity_threshold);
  const Dataset held = heldout.head(std::size_t(n_heldout));
  std::mt19937_64 rng(seed);
  s.equivariance_error = equivariance_error(bank, cb, held, n_heldout, aug, rng);
  s.reconstruction_psnr = reconstruction_psnr(bank, held, n_heldout);
  return s;
}

ImageTensor<float> luma(const ImageTensor<float>& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw ShapeError("luma: need 1 or 3 channels");
  ImageTensor<float> g(1, image.height(), image.width());
  g.data() = 0.299f * image.plane(0).reshaped() + 0.587f * image.plane(1).reshaped() +
             0.114f * image.plane(2).reshaped();
  return g;
}

double psnr(const ImageTensor<float>& a, const ImageTensor<float>& b, double max_val) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shapes differ");
  if (a.empty()) throw PreconditionError("psnr: empty images");
  const double mse =
      (a.data().cast<double>() - b.data().cast<double>()).squaredNorm() / double(a.data().size());
  if (mse < 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(max_val * max_val / mse));
}

double ssim(const ImageTensor<float>& a, const ImageTensor<float>& b, double max_val) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shapes differ");
  if (a.empty()) throw PreconditionError("ssim: empty images");
  const ImageTensor<float> ga = luma(a), gb = luma(b);
  const Index h = ga.height(), w = ga.width();
  const Index win = std::min<Index>({11, h, w});
  const double sigma = 1.5;
  std::vector<double> g(static_cast<std::size_t>(win));
  double gs = 0;
  for (Index i = 0; i < win; ++i) {
    const double d = double(i) - 0.5 * double(win - 1);
    g[std::size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
    gs += g[std::size_t(i)];
  }
  for (double& v : g) v /= gs;
  const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
  double total = 0;
  Index count = 0;
  for (Index y0 = 0; y0 + win <= h; ++y0)
    for (Index x0 = 0; x0 + win <= w; ++x0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (Index dy = 0; dy < win; ++dy)
        for (Index dx = 0; dx < win; ++dx) {
          const double wt = g[std::size_t(dy)] * g[std::size_t(dx)];
          const double x = ga(0, y0 + dy, x0 + dx), y = gb(0, y0 + dy, x0 + dx);
          mx += wt * x;
          my += wt * y;
          sxx += wt * x * x;
          syy += wt * y * y;
          sxy += wt * x * y;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / double(count);
}

} // namespace scg
