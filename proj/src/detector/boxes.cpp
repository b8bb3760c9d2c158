#include "mcm/detector/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcm {

double Box::area() const {
  return valid() ? width() * height() : 0.0;
}

CenterBox to_center(const Box& b) {
  return {0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max), b.width(),
          b.height()};
}

Box to_corners(const CenterBox& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

BoxOffsets encode_box(const CenterBox& gt, const CenterBox& anchor) {
  if (!(anchor.w > 0 && anchor.h > 0)) {
    throw std::invalid_argument("encode_box: anchor must have positive size");
  }
  if (!(gt.w > 0 && gt.h > 0)) {
    throw std::invalid_argument("encode_box: ground truth must have positive size");
  }
  return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

CenterBox decode_box(const BoxOffsets& o, const CenterBox& anchor) {
  if (!(anchor.w > 0 && anchor.h > 0)) {
    throw std::invalid_argument("decode_box: anchor must have positive size");
  }
  return {anchor.cx + o[0] * anchor.w, anchor.cy + o[1] * anchor.h,
          anchor.w * std::exp(o[2]), anchor.h * std::exp(o[3])};
}

}  // namespace mcm
