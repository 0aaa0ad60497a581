#include "marksweep/dct.hpp"

#include <cmath>
#include <numbers>

namespace marksweep::dct {

namespace {

struct Table {
  double c[8][8];  // c[u][x] = alpha(u) cos((2x+1) u pi / 16)
  Table() {
    for (int u = 0; u < 8; ++u) {
      double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
};

const Table& table() {
  static const Table t;
  return t;
}

std::array<int, 64> build_zigzag() {
  std::array<int, 64> order{};
  int k = 0;
  for (int s = 0; s < 15; ++s) {
    if (s % 2 == 0) {
      for (int r = std::min(s, 7); r >= 0 && s - r < 8; --r) order[k++] = r * 8 + (s - r);
    } else {
      for (int r = std::max(0, s - 7); r <= std::min(s, 7); ++r) order[k++] = r * 8 + (s - r);
    }
  }
  return order;
}

}  // namespace

Block forward(const Block& p) {
  const auto& t = table();
  Block tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += t.c[v][x] * p[y * 8 + x];
      tmp[y * 8 + v] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += t.c[u][y] * tmp[y * 8 + v];
      out[u * 8 + v] = s;
    }
  return out;
}

Block inverse(const Block& c) {
  const auto& t = table();
  Block tmp{}, out{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int v = 0; v < 8; ++v) s += t.c[v][x] * c[u * 8 + v];
      tmp[u * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int u = 0; u < 8; ++u) s += t.c[u][y] * tmp[u * 8 + x];
      out[y * 8 + x] = s;
    }
  return out;
}

double basis(int u, int v, int y, int x) {
  const auto& t = table();
  return t.c[u][y] * t.c[v][x];
}

const std::array<int, 64>& zigzag_order() {
  static const std::array<int, 64> order = build_zigzag();
  return order;
}

}  // namespace marksweep::dct
