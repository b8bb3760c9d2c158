#pragma once

#include <array>

namespace mcm {

// Corner box in normalized image coordinates.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const;
  bool valid() const { return x_min < x_max && y_min < y_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct CenterBox {
  double cx = 0, cy = 0, w = 0, h = 0;
  friend bool operator==(const CenterBox&, const CenterBox&) = default;
};

CenterBox to_center(const Box& b);
Box to_corners(const CenterBox& b);

// Intersection over union; 0 for disjoint or degenerate boxes.
double box_iou(const Box& a, const Box& b);

using BoxOffsets = std::array<double, 4>;

// (g_cx - d_cx) / d_w, (g_cy - d_cy) / d_h, log(g_w / d_w), log(g_h / d_h).
BoxOffsets encode_box(const CenterBox& gt, const CenterBox& anchor);
CenterBox decode_box(const BoxOffsets& offsets, const CenterBox& anchor);

}  // namespace mcm
