#include "mcm/detector/detect.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "mcm/numerics/ops.hpp"

namespace mcm {

ScoredAnchors score_outputs(const HeadOutput& out) {
  return {softmax(Var::constant(out.logits.value()), 1).value(), out.boxes.value()};
}

ScoredAnchors fuse_two_stream(const ScoredAnchors& appearance,
                              const ScoredAnchors& motion) {
  if (appearance.scores.shape() != motion.scores.shape()) {
    throw std::invalid_argument("fuse_two_stream: score shapes differ " +
                                shape_to_string(appearance.scores.shape()) + " vs " +
                                shape_to_string(motion.scores.shape()));
  }
  ScoredAnchors fused{Tensor(appearance.scores.shape()), appearance.offsets};
  for (int64_t i = 0; i < fused.scores.numel(); ++i) {
    fused.scores[i] = 0.5 * (appearance.scores[i] + motion.scores[i]);
  }
  return fused;
}

namespace {

double mean_iou(const std::vector<Box>& a, const std::vector<Box>& b) {
  double total = 0.0;
  for (size_t k = 0; k < a.size(); ++k) total += box_iou(a[k], b[k]);
  return total / static_cast<double>(a.size());
}

}  // namespace

std::vector<size_t> greedy_nms(const std::vector<NmsCandidate>& candidates,
                               double iou) {
  std::vector<size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (candidates[a].score != candidates[b].score) {
      return candidates[a].score > candidates[b].score;
    }
    return candidates[a].anchor_index < candidates[b].anchor_index;
  });
  std::vector<size_t> kept;
  for (size_t i : order) {
    bool suppressed = false;
    for (size_t k : kept) {
      if (mean_iou(candidates[i].boxes, candidates[k].boxes) > iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<TubeletDetection> decode_tubelets(const ScoredAnchors& scored,
                                              const AnchorSet& anchors,
                                              const DetectParams& params,
                                              int start_frame) {
  const int64_t q = anchors.size();
  if (scored.scores.rank() != 2 || scored.scores.dim(0) != q ||
      scored.offsets.rank() != 2 || scored.offsets.dim(0) != q ||
      scored.offsets.dim(1) % 4 != 0) {
    throw std::invalid_argument("decode: outputs do not match the anchor set");
  }
  const int64_t classes = scored.scores.dim(1);
  const int k_len = static_cast<int>(scored.offsets.dim(1) / 4);

  // Decoded lazily: most anchors never pass the threshold.
  auto decode_anchor = [&](int64_t i) {
    std::vector<Box> boxes;
    for (int k = 0; k < k_len; ++k) {
      BoxOffsets o;
      for (int c = 0; c < 4; ++c) o[c] = scored.offsets[i * 4 * k_len + 4 * k + c];
      Box b = to_corners(decode_box(o, anchors.boxes[i]));
      b.x_min = std::clamp(b.x_min, 0.0, 1.0);
      b.y_min = std::clamp(b.y_min, 0.0, 1.0);
      b.x_max = std::clamp(b.x_max, 0.0, 1.0);
      b.y_max = std::clamp(b.y_max, 0.0, 1.0);
      boxes.push_back(b);
    }
    return boxes;
  };

  std::vector<TubeletDetection> all;
  for (int64_t c = 1; c < classes; ++c) {
    std::vector<NmsCandidate> cands;
    for (int64_t i = 0; i < q; ++i) {
      const double s = scored.scores[i * classes + c];
      if (s <= params.conf_thresh) continue;
      auto boxes = decode_anchor(i);
      if (!std::all_of(boxes.begin(), boxes.end(), [](const Box& b) { return b.valid(); })) {
        continue;
      }
      cands.push_back({std::move(boxes), s, static_cast<int>(i)});
    }
    for (size_t idx : greedy_nms(cands, params.nms_iou)) {
      all.push_back({start_frame, static_cast<int>(c), cands[idx].score,
                     cands[idx].boxes, cands[idx].anchor_index});
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor_index != b.anchor_index) return a.anchor_index < b.anchor_index;
    return a.class_id < b.class_id;
  });
  if (params.top_k >= 0 && all.size() > static_cast<size_t>(params.top_k)) {
    all.resize(params.top_k);
  }
  return all;
}

std::vector<Detection> decode_detections(const ScoredAnchors& scored,
                                         const AnchorSet& anchors,
                                         const DetectParams& params,
                                         int frame_index) {
  std::vector<Detection> out;
  for (auto& t : decode_tubelets(scored, anchors, params, frame_index)) {
    out.push_back({t.boxes[0], t.class_id, t.score, frame_index, t.anchor_index});
  }
  return out;
}

}  // namespace mcm
