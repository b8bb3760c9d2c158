#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mcm/flow/frame.hpp"
#include "mcm/numerics/tensor.hpp"

namespace mcm {

// Per-pixel motion in pixels/frame: u along x, v along y.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }

  double& u(int y, int x) { return u_[idx(y, x)]; }
  double u(int y, int x) const { return u_[idx(y, x)]; }
  double& v(int y, int x) { return v_[idx(y, x)]; }
  double v(int y, int x) const { return v_[idx(y, x)]; }

  bool all_zero() const;
  bool all_finite() const;

  // [2, H, W] with both channels divided by `scale`.
  Tensor to_tensor(double scale) const;

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  size_t idx(int y, int x) const { return static_cast<size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> u_, v_;
};

enum class FlowQuality { kFast, kIterative };

std::string flow_quality_name(FlowQuality q);  // "fast" / "iterative"
FlowQuality parse_flow_quality(const std::string& text);

struct BlockMatchParams {
  int block = 8;
  int radius = 4;
};

struct HornSchunckParams {
  double alpha = 0.5;
  int iterations = 100;
};

// Dense integer block matching: each pixel takes the displacement within
// `radius` minimizing the summed squared RGB difference over a block
// centred on it. Ties go to the smallest displacement, zero first.
FlowField block_matching_flow(const Frame& a, const Frame& b,
                              const BlockMatchParams& params = {});

// Horn-Schunck on channel-mean intensity.
FlowField horn_schunck_flow(const Frame& a, const Frame& b,
                            const HornSchunckParams& params = {});

FlowField estimate_flow(const Frame& a, const Frame& b, FlowQuality quality);

// One flow per frame: flow t is estimated from (t, t+1); the last frame
// repeats the previous flow. A single frame gets a zero flow.
std::vector<FlowField> estimate_video_flow(const std::vector<Frame>& frames,
                                           FlowQuality quality);

// Middlebury-style .flo: "PIEH", LE int32 width, height, then interleaved
// (u, v) LE float32 pairs row-major.
std::vector<char> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<char>& bytes);
void write_flow(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace mcm
