#pragma once

#include <vector>

#include "mcm/detector/anchors.hpp"
#include "mcm/detector/network.hpp"

namespace mcm {

struct Detection {
  Box box;
  int class_id = 1;
  double score = 0;
  int frame_index = 0;
  int anchor_index = -1;
};

// One anchor cuboid's prediction over K frames starting at start_frame.
struct TubeletDetection {
  int start_frame = 0;
  int class_id = 1;
  double score = 0;
  std::vector<Box> boxes;
  int anchor_index = -1;
};

struct DetectParams {
  double conf_thresh = 0.01;
  double nms_iou = 0.45;
  int top_k = 50;
};

// Per-anchor class probabilities and regressed offsets.
struct ScoredAnchors {
  Tensor scores;   // [Q, P+1]
  Tensor offsets;  // [Q, 4K]
};

ScoredAnchors score_outputs(const HeadOutput& out);

// Per-anchor mean of class scores; offsets come from `appearance`.
ScoredAnchors fuse_two_stream(const ScoredAnchors& appearance,
                              const ScoredAnchors& motion);

struct NmsCandidate {
  std::vector<Box> boxes;  // one per frame of the cuboid
  double score;
  int anchor_index;
};

// Greedy suppression in (score desc, anchor asc) order; a candidate is
// dropped when its mean per-frame IoU with a kept one exceeds `iou`.
// Returns indices into `candidates` in keep order.
std::vector<size_t> greedy_nms(const std::vector<NmsCandidate>& candidates,
                               double iou);

// Threshold, per-class NMS, then the top_k highest across classes.
std::vector<TubeletDetection> decode_tubelets(const ScoredAnchors& scored,
                                              const AnchorSet& anchors,
                                              const DetectParams& params,
                                              int start_frame);
std::vector<Detection> decode_detections(const ScoredAnchors& scored,
                                         const AnchorSet& anchors,
                                         const DetectParams& params,
                                         int frame_index);

}  // namespace mcm
