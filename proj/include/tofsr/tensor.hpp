#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tofsr/types.hpp"

namespace tofsr {

// Stack of per-pixel time traces. Row-major over pixels, time index fastest:
// data[(y*width + x)*num_samples + n].
struct ImageTensor {
  int height = 0;
  int width = 0;
  AcquisitionGrid grid;
  std::vector<double> data;

  int num_pixels() const { return height * width; }

  void validate() const {
    grid.validate();
    if (height < 1 || width < 1) throw std::invalid_argument("tensor dimensions must be positive");
    if (static_cast<std::size_t>(num_pixels()) * grid.num_samples != data.size())
      throw std::invalid_argument("tensor data size mismatch");
  }

  RealVec trace(int y, int x) const {
    const std::size_t base = (static_cast<std::size_t>(y) * width + x) * grid.num_samples;
    return Eigen::Map<const RealVec>(data.data() + base, grid.num_samples);
  }

  void set_trace(int y, int x, const RealVec& t) {
    if (t.size() != grid.num_samples) throw std::invalid_argument("trace length mismatch");
    const std::size_t base = (static_cast<std::size_t>(y) * width + x) * grid.num_samples;
    Eigen::Map<RealVec>(data.data() + base, grid.num_samples) = t;
  }
};

// Ground-truth spike trains for a rectangular pixel array, row-major.
struct SpikeScene {
  int height = 0;
  int width = 0;
  std::vector<SpikeTrain> pixels;

  const SpikeTrain& at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  void validate(double window) const {
    if (height < 1 || width < 1) throw std::invalid_argument("scene dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(height) * width)
      throw std::invalid_argument("scene pixel count mismatch");
    for (const auto& p : pixels) p.validate(window);
  }
};

} // namespace tofsr
