#include "mcm/detector/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcm {

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

Var multibox_loss(const Var& class_logits, const Var& box_preds,
                  const LossTargets& targets, int neg_ratio,
                  LossBreakdown* breakdown) {
  const Shape& ls = class_logits.shape();
  const Shape& bs = box_preds.shape();
  const int64_t q = static_cast<int64_t>(targets.label.size());
  if (ls.size() != 2 || bs.size() != 2 || ls[0] != q || bs[0] != q ||
      targets.offsets.shape() != bs) {
    throw std::invalid_argument(
        "multibox_loss: inconsistent shapes: logits " + shape_to_string(ls) +
        ", boxes " + shape_to_string(bs) + ", targets " +
        shape_to_string(targets.offsets.shape()) + ", " + std::to_string(q) +
        " labels");
  }
  const int64_t classes = ls[1];
  const int64_t loc_width = bs[1];
  const double* logits = class_logits.value().ptr();

  // log-sum-exp per anchor
  std::vector<double> lse(q);
  for (int64_t i = 0; i < q; ++i) {
    const double* row = logits + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (int64_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
    lse[i] = mx + std::log(s);
  }

  std::vector<int64_t> selected;  // anchors in the confidence term
  std::vector<int64_t> negatives;
  for (int64_t i = 0; i < q; ++i) {
    const int label = targets.label[i];
    if (label < 0 || label >= classes) {
      throw std::invalid_argument("multibox_loss: label out of range");
    }
    (label > 0 ? selected : negatives).push_back(i);
  }
  const int num_pos = static_cast<int>(selected.size());
  const size_t keep = std::min(
      negatives.size(), static_cast<size_t>(neg_ratio) * std::max(num_pos, 1));
  std::stable_sort(negatives.begin(), negatives.end(), [&](int64_t a, int64_t b) {
    return lse[a] - logits[a * classes] > lse[b] - logits[b * classes];
  });
  negatives.resize(keep);
  std::sort(negatives.begin(), negatives.end());
  const int num_neg = static_cast<int>(negatives.size());
  selected.insert(selected.end(), negatives.begin(), negatives.end());

  double conf = 0.0;
  for (int64_t i : selected) conf += lse[i] - logits[i * classes + targets.label[i]];

  double loc = 0.0;
  const double* pred = box_preds.value().ptr();
  const double* tgt = targets.offsets.ptr();
  for (int64_t i = 0; i < q; ++i) {
    if (targets.label[i] == 0) continue;
    for (int64_t c = 0; c < loc_width; ++c) {
      loc += smooth_l1(pred[i * loc_width + c] - tgt[i * loc_width + c]);
    }
  }

  const double divisor = num_pos > 0 ? num_pos : 1.0;
  const double total = (conf + loc) / divisor;
  if (breakdown) *breakdown = {conf, loc, total, num_pos, num_neg};

  return make_result(
      Tensor::scalar(total), {class_logits, box_preds},
      [selected = std::move(selected), lse = std::move(lse), divisor, classes,
       loc_width, labels = targets.label, offsets = targets.offsets,
       ln = class_logits.node(), bn = box_preds.node()](Node& self) {
        const double g = self.grad[0] / divisor;
        if (ln->requires_grad) {
          double* gl = ln->ensure_grad().ptr();
          const double* x = ln->value.ptr();
          for (int64_t i : selected) {
            for (int64_t c = 0; c < classes; ++c) {
              const double p = std::exp(x[i * classes + c] - lse[i]);
              gl[i * classes + c] += g * (p - (c == labels[i] ? 1.0 : 0.0));
            }
          }
        }
        if (bn->requires_grad) {
          double* gb = bn->ensure_grad().ptr();
          const double* p = bn->value.ptr();
          for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == 0) continue;
            for (int64_t c = 0; c < loc_width; ++c) {
              const int64_t k = static_cast<int64_t>(i) * loc_width + c;
              const double d = p[k] - offsets[k];
              gb[k] += g * (std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0));
            }
          }
        }
      });
}

}  // namespace mcm
