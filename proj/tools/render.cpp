#include "render.hpp"

#include <algorithm>
#include <cmath>

namespace scg::render {

ImageTensor<float> upscale(const ImageTensor<float>& image, Index factor) {
  ImageTensor<float> out(image.channels(), image.height() * factor, image.width() * factor);
  for (Index c = 0; c < out.channels(); ++c)
    for (Index y = 0; y < out.height(); ++y)
      for (Index x = 0; x < out.width(); ++x) out(c, y, x) = image(c, y / factor, x / factor);
  return out;
}

ImageTensor<float> normalize(const ImageTensor<float>& image) {
  ImageTensor<float> out = image;
  const float lo = image.data().minCoeff(), hi = image.data().maxCoeff();
  if (hi > lo)
    out.data() = (image.data().array() - lo) / (hi - lo);
  else
    out.data().setConstant(0.5f);
  return out;
}

namespace {

Index max_channels(const std::vector<ImageTensor<float>>& v) {
  Index c = 1;
  for (const auto& t : v) c = std::max(c, t.channels());
  return c;
}

float sample(const ImageTensor<float>& t, Index c, Index y, Index x) {
  return t(t.channels() == 1 ? 0 : c, y, x);
}

} // namespace

ImageTensor<float> hstack(const std::vector<ImageTensor<float>>& tiles, Index gap) {
  if (tiles.empty()) return ImageTensor<float>(1, 1, 1);
  const Index ch = max_channels(tiles);
  Index h = 0, w = gap;
  for (const auto& t : tiles) {
    h = std::max(h, t.height());
    w += t.width() + gap;
  }
  ImageTensor<float> out(ch, h + 2 * gap, w);
  out.data().setOnes();
  Index ox = gap;
  for (const auto& t : tiles) {
    for (Index c = 0; c < ch; ++c)
      for (Index y = 0; y < t.height(); ++y)
        for (Index x = 0; x < t.width(); ++x) out(c, gap + y, ox + x) = sample(t, c, y, x);
    ox += t.width() + gap;
  }
  return out;
}

ImageTensor<float> vstack(const std::vector<ImageTensor<float>>& rows, Index gap) {
  if (rows.empty()) return ImageTensor<float>(1, 1, 1);
  const Index ch = max_channels(rows);
  Index h = gap, w = 0;
  for (const auto& r : rows) {
    w = std::max(w, r.width());
    h += r.height() + gap;
  }
  ImageTensor<float> out(ch, h, w + 2 * gap);
  out.data().setOnes();
  Index oy = gap;
  for (const auto& r : rows) {
    for (Index c = 0; c < ch; ++c)
      for (Index y = 0; y < r.height(); ++y)
        for (Index x = 0; x < r.width(); ++x) out(c, oy + y, gap + x) = sample(r, c, y, x);
    oy += r.height() + gap;
  }
  return out;
}

namespace {

void line(ImageTensor<float>& img, double x0, double y0, double x1, double y1, float v) {
  const int n = int(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = double(i) / n;
    const Index x = Index(std::lround(x0 + t * (x1 - x0)));
    const Index y = Index(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && x < img.width() && y >= 0 && y < img.height())
      img(0, y, x) = std::min(img(0, y, x), v);
  }
}

void polyline(ImageTensor<float>& img, const TuningCurve& c, double top, Index w, Index h,
              float v) {
  const std::size_t n = c.response.size();
  if (n == 0) return;
  auto px = [&](std::size_t i) { return n == 1 ? 0.5 * (w - 1) : double(i) * (w - 1) / double(n - 1); };
  auto py = [&](std::size_t i) {
    const double r = top > 0 ? c.response[i] / top : 0.0;
    return (h - 1) - r * (h - 1);
  };
  for (std::size_t i = 0; i + 1 < n; ++i) line(img, px(i), py(i), px(i + 1), py(i + 1), v);
}

} // namespace

ImageTensor<float> curve_panels(const std::vector<std::vector<TuningCurve>>& groups,
                                Index panel_w, Index panel_h, Index columns) {
  std::vector<ImageTensor<float>> panels;
  for (const auto& g : groups) {
    ImageTensor<float> p(1, panel_h, panel_w);
    p.data().setOnes();
    double top = 0;
    for (const auto& c : g)
      for (double r : c.response) top = std::max(top, r);
    for (const auto& c : g) polyline(p, c, top, panel_w, panel_h, 0.7f);
    if (!g.empty()) polyline(p, mean_curve(g), top, panel_w, panel_h, 0.0f);
    // Frame.
    line(p, 0, 0, panel_w - 1, 0, 0.4f);
    line(p, 0, panel_h - 1, panel_w - 1, panel_h - 1, 0.4f);
    line(p, 0, 0, 0, panel_h - 1, 0.4f);
    line(p, panel_w - 1, 0, panel_w - 1, panel_h - 1, 0.4f);
    panels.push_back(std::move(p));
  }
  std::vector<ImageTensor<float>> rows;
  for (std::size_t i = 0; i < panels.size(); i += std::size_t(columns)) {
    std::vector<ImageTensor<float>> row(panels.begin() + long(i),
                                        panels.begin() + long(std::min(panels.size(), i + std::size_t(columns))));
    rows.push_back(hstack(row, 4));
  }
  return vstack(rows, 0);
}

} // namespace scg::render
