#include "mcm/detector/match.hpp"

#include <stdexcept>

namespace mcm {

double anchor_overlap(const CenterBox& anchor, const GroundTruthObject& gt) {
  if (gt.boxes.empty()) return 0.0;
  const Box a = to_corners(anchor);
  double total = 0.0;
  for (const Box& b : gt.boxes) total += box_iou(a, b);
  return total / static_cast<double>(gt.boxes.size());
}

MatchAssignment match_anchors(const std::vector<GroundTruthObject>& gt,
                              const AnchorSet& anchors, double pos_iou) {
  if (!(pos_iou > 0.0 && pos_iou < 1.0)) {
    throw std::invalid_argument("match_anchors: pos_iou must lie in (0, 1)");
  }
  const int q = anchors.size();
  MatchAssignment m;
  m.gt_index.assign(q, -1);
  m.label.assign(q, 0);
  if (gt.empty()) return m;

  std::vector<std::vector<double>> overlap(gt.size(), std::vector<double>(q));
  for (size_t j = 0; j < gt.size(); ++j)
    for (int i = 0; i < q; ++i) overlap[j][i] = anchor_overlap(anchors.boxes[i], gt[j]);

  std::vector<bool> forced(q, false);
  for (size_t j = 0; j < gt.size(); ++j) {
    int best = -1;
    for (int i = 0; i < q; ++i) {
      if (forced[i]) continue;
      if (best < 0 || overlap[j][i] > overlap[j][best]) best = i;
    }
    if (best < 0 || overlap[j][best] <= 0.0) continue;
    forced[best] = true;
    m.gt_index[best] = static_cast<int>(j);
  }
  for (int i = 0; i < q; ++i) {
    if (forced[i]) continue;
    int best = 0;
    for (size_t j = 1; j < gt.size(); ++j) {
      if (overlap[j][i] > overlap[best][i]) best = static_cast<int>(j);
    }
    if (overlap[best][i] >= pos_iou) m.gt_index[i] = best;
  }
  for (int i = 0; i < q; ++i) {
    if (m.gt_index[i] >= 0) {
      m.label[i] = gt[m.gt_index[i]].class_id;
      ++m.num_positive;
    }
  }
  return m;
}

LossTargets build_targets(const std::vector<GroundTruthObject>& gt,
                          const AnchorSet& anchors, double pos_iou,
                          int tubelet_len) {
  for (const auto& g : gt) {
    if (static_cast<int>(g.boxes.size()) != tubelet_len) {
      throw std::invalid_argument("ground truth has " + std::to_string(g.boxes.size()) +
                                  " boxes, tubelet length is " +
                                  std::to_string(tubelet_len));
    }
  }
  const MatchAssignment m = match_anchors(gt, anchors, pos_iou);
  LossTargets t;
  t.label = m.label;
  t.num_positive = m.num_positive;
  t.tubelet_len = tubelet_len;
  t.offsets = Tensor({anchors.size(), 4 * tubelet_len}, 0.0);
  for (int i = 0; i < anchors.size(); ++i) {
    if (m.gt_index[i] < 0) continue;
    const auto& g = gt[m.gt_index[i]];
    for (int k = 0; k < tubelet_len; ++k) {
      const BoxOffsets o = encode_box(to_center(g.boxes[k]), anchors.boxes[i]);
      for (int c = 0; c < 4; ++c) t.offsets[i * 4 * tubelet_len + 4 * k + c] = o[c];
    }
  }
  return t;
}

}  // namespace mcm
