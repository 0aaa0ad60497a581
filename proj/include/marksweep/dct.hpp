#pragma once

#include <array>

namespace marksweep::dct {

using Block = std::array<double, 64>;

/// Orthonormal 8x8 DCT-II (the JPEG transform). Index = row * 8 + col.
Block forward(const Block& pixels);
Block inverse(const Block& coeffs);

/// Value of basis function (u,v) at pixel (y,x), orthonormal scaling.
double basis(int u, int v, int y, int x);

/// zigzag_order()[k] is the row-major coefficient index of zig-zag position k.
const std::array<int, 64>& zigzag_order();

}  // namespace marksweep::dct
