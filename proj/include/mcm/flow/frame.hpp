#pragma once

#include <filesystem>
#include <vector>

#include "mcm/numerics/tensor.hpp"

namespace mcm {

// RGB image with channel values in [0, 1], stored row-major interleaved.
class Frame {
 public:
  Frame() = default;
  Frame(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  // Mean over the three channels.
  double gray(int y, int x) const;

  const std::vector<double>& pixels() const { return pixels_; }

  // [3, H, W] network input.
  Tensor to_tensor() const;
  // Clamps every channel into [0, 1].
  void clamp();

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  size_t index(int y, int x, int c) const {
    return (static_cast<size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

// Binary PPM (P6, maxval 255). Values are quantized on write.
void write_ppm(const Frame& frame, const std::filesystem::path& path);
Frame read_ppm(const std::filesystem::path& path);

}  // namespace mcm
