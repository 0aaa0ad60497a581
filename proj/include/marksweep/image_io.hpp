#pragma once

#include <cstdint>
#include <string>

#include "marksweep/tensor.hpp"

namespace marksweep {

/// Reads an 8-bit grayscale or RGB PNG; intensities become v/255.
/// Throws kFileNotFound for a missing path and kUnsupportedFormat for
/// 16-bit, alpha, or non-PNG content.
ImageTensor load_image(const std::string& path);

/// Writes an 8-bit PNG using round(v*255) clamped to [0,255].
void save_image(const ImageTensor& img, const std::string& path);

/// The byte save_image writes for an intensity.
std::uint8_t quantize_byte(double v);

/// Rounds every intensity onto the 8-bit grid (what a save/load cycle does).
ImageTensor quantize8(const ImageTensor& img);

}  // namespace marksweep
