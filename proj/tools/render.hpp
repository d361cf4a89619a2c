#pragma once

#include <vector>

#include "scg/analysis.hpp"

namespace scg::render {

/// Nearest-neighbour enlargement by an integer factor.
ImageTensor<float> upscale(const ImageTensor<float>& image, Index factor);

/// Min-max to [0, 1]; constant images become 0.5.
ImageTensor<float> normalize(const ImageTensor<float>& image);

/// Side by side with `gap` white pixels between and around the tiles. Tiles
/// are top-aligned; gray tiles are promoted when any tile is RGB.
ImageTensor<float> hstack(const std::vector<ImageTensor<float>>& tiles, Index gap = 1);
ImageTensor<float> vstack(const std::vector<ImageTensor<float>>& rows, Index gap = 1);

/// One panel per group of curves sharing an axis: thin gray lines for the
/// members, a black line for their mean, all scaled to the panel's maximum.
ImageTensor<float> curve_panels(const std::vector<std::vector<TuningCurve>>& groups,
                                Index panel_w = 120, Index panel_h = 80, Index columns = 4);

} // namespace scg::render
