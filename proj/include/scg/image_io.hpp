#pragma once

#include <string>

#include "scg/tensor.hpp"

namespace scg {

/// 8-bit PNG, grayscale for 1 channel and RGB for 3. Values are clamped to
/// [0, 1] and rounded to the nearest of 256 levels.
void write_png(const std::string& path, const ImageTensor<float>& image);

/// Reads an 8-bit gray or RGB PNG into [0, 1] (gray+alpha and RGBA drop alpha).
ImageTensor<float> read_png(const std::string& path);

/// value -> round(255 clamp(value, 0, 1)) / 255, the PNG round trip.
ImageTensor<float> quantize_u8(const ImageTensor<float>& image);

} // namespace scg
