#pragma once

#include <vector>

#include "mcm/detector/anchors.hpp"
#include "mcm/numerics/tensor.hpp"

namespace mcm {

// A ground-truth object over K consecutive frames (K = 1 for single-frame
// detection). Class ids start at 1; 0 is background.
struct GroundTruthObject {
  int class_id = 1;
  std::vector<Box> boxes;
};

struct MatchAssignment {
  std::vector<int> gt_index;  // per anchor, -1 for background
  std::vector<int> label;     // per anchor class id, 0 for background
  int num_positive = 0;
};

// Anchor-to-object overlap: mean IoU of the (static) anchor against each of
// the object's K boxes.
double anchor_overlap(const CenterBox& anchor, const GroundTruthObject& gt);

// Each object first claims its best not-yet-claimed anchor; every other
// anchor whose best overlap reaches pos_iou goes to that best object.
// Ties break toward the lower anchor (or object) index.
MatchAssignment match_anchors(const std::vector<GroundTruthObject>& gt,
                              const AnchorSet& anchors, double pos_iou);

// Everything the multibox loss needs for one sample.
struct LossTargets {
  std::vector<int> label;  // per anchor
  Tensor offsets;          // [Q, 4K]; rows of background anchors are zero
  int num_positive = 0;
  int tubelet_len = 1;
};

LossTargets build_targets(const std::vector<GroundTruthObject>& gt,
                          const AnchorSet& anchors, double pos_iou,
                          int tubelet_len);

}  // namespace mcm
