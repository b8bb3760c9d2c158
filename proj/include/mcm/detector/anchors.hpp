#pragma once

#include <vector>

#include "mcm/detector/boxes.hpp"

namespace mcm {

struct AnchorLevel {
  int grid_h = 1;
  int grid_w = 1;
  double scale = 0.5;
};

// Default boxes, ordered level by level, then row-major over cells, then
// by aspect ratio (1:1, 2:1, 1:2 as width:height).
struct AnchorSet {
  std::vector<AnchorLevel> levels;
  std::vector<CenterBox> boxes;

  static constexpr int kPerCell = 3;
  int size() const { return static_cast<int>(boxes.size()); }
};

AnchorSet generate_anchors(const std::vector<AnchorLevel>& levels);

}  // namespace mcm
