#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtln/error.hpp"

namespace mtln {

/// Row-major 2-D raster. Pixel (row, col) has its center at (x = col, y = row).
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> pixels;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw ShapeError("Grid: negative extent");
  }

  T& operator()(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  const T& operator()(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

  bool contains(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
  std::size_t size() const { return pixels.size(); }
  bool same_extent(const Grid& other) const { return height == other.height && width == other.width; }

  template <class U>
  bool same_extent(const Grid<U>& other) const {
    return height == other.height && width == other.width;
  }

  bool operator==(const Grid&) const = default;
};

/// Grayscale intensities in [0, 1].
using Image = Grid<float>;

/// Strictly {0, 1} valued mask.
using BinaryMask = Grid<std::uint8_t>;

/// Number of foreground pixels.
inline std::size_t foreground_count(const BinaryMask& mask) {
  std::size_t n = 0;
  for (auto v : mask.pixels) n += v != 0;
  return n;
}

}  // namespace mtln
