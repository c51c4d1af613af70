#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nailguard/errors.hpp"

namespace nailguard {

/// Dense height x width x channels array stored row-major, channels last.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) noexcept { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const noexcept { return data[index(y, x, c)]; }

  bool same_shape(const Tensor3& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }

  std::span<double> values() noexcept { return data; }
  std::span<const double> values() const noexcept { return data; }
};

/// Single-channel real grid (attribution maps, raw CAMs).
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace nailguard
