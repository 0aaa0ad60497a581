#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "marksweep/tensor.hpp"

namespace marksweep {

/// Piecewise-smooth synthetic scene: shaded background plus overlapping shapes
/// with soft (blurred) boundaries. Deterministic in (seed, height, width).
/// edge_sigma < 0 draws the boundary blur from the default range.
ImageTensor synth_texture(std::uint64_t seed, int height, int width, double edge_sigma = -1.0);

/// Writes count textures as tex_NNNN.png; returns the written paths.
std::vector<std::filesystem::path> write_texture_dataset(const std::filesystem::path& dir, int count,
                                                         std::uint64_t seed, int height, int width);

/// All *.png files in a directory, sorted by filename.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

/// Separable Gaussian blur with replicate borders; radius = ceil(3 sigma).
Raster gaussian_blur(const Raster& img, double sigma);

}  // namespace marksweep
