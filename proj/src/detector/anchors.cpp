#include "mcm/detector/anchors.hpp"

#include <cmath>
#include <stdexcept>

namespace mcm {

AnchorSet generate_anchors(const std::vector<AnchorLevel>& levels) {
  AnchorSet set;
  set.levels = levels;
  const double r = std::sqrt(2.0);
  for (const auto& level : levels) {
    if (level.grid_h <= 0 || level.grid_w <= 0 || !(level.scale > 0)) {
      throw std::invalid_argument("anchor level needs a positive grid and scale");
    }
    for (int y = 0; y < level.grid_h; ++y) {
      for (int x = 0; x < level.grid_w; ++x) {
        const double cx = (x + 0.5) / level.grid_w;
        const double cy = (y + 0.5) / level.grid_h;
        const double s = level.scale;
        set.boxes.push_back({cx, cy, s, s});
        set.boxes.push_back({cx, cy, s * r, s / r});
        set.boxes.push_back({cx, cy, s / r, s * r});
      }
    }
  }
  return set;
}

}  // namespace mcm
