#pragma once

#include "mcm/detector/match.hpp"
#include "mcm/numerics/autograd.hpp"

namespace mcm {

double smooth_l1(double x);

struct LossBreakdown {
  double confidence = 0;    // summed, before division
  double localization = 0;  // summed, before division
  double total = 0;
  int num_positive = 0;
  int num_negative = 0;     // hard negatives selected
};

// SSD multibox objective for one sample:
//   (L_conf + L_loc) / N
// with softmax cross-entropy over positives plus the hardest background
// anchors (neg_ratio per positive, by background loss), and smooth-L1 over
// the positives' offsets. With no positives the divisor is 1, there is no
// localization term, and neg_ratio hardest negatives are kept.
//
// class_logits: [Q, P+1]; box_preds: [Q, 4K].
Var multibox_loss(const Var& class_logits, const Var& box_preds,
                  const LossTargets& targets, int neg_ratio = 3,
                  LossBreakdown* breakdown = nullptr);

}  // namespace mcm
