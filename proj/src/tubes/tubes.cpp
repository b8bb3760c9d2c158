#include "mcm/tubes/tubes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcm {

void validate_tube(const std::vector<TubeBox>& boxes) {
  if (boxes.empty()) throw std::invalid_argument("tube has no boxes");
  for (size_t i = 1; i < boxes.size(); ++i) {
    if (boxes[i].frame_index != boxes[i - 1].frame_index + 1) {
      throw std::invalid_argument("tube frames must be consecutive and ascending");
    }
  }
}

double spatial_iou(const Box& a, const Box& b) { return box_iou(a, b); }

double tube_iou(const std::vector<TubeBox>& a, const std::vector<TubeBox>& b) {
  if (a.empty() || b.empty()) return 0.0;
  const int a0 = a.front().frame_index, a1 = a.back().frame_index;
  const int b0 = b.front().frame_index, b1 = b.back().frame_index;
  const int lo = std::max(a0, b0), hi = std::min(a1, b1);
  const int shared = std::max(0, hi - lo + 1);
  const int uni = (a1 - a0 + 1) + (b1 - b0 + 1) - shared;
  double total = 0.0;
  for (int f = lo; f <= hi; ++f) total += box_iou(a[f - a0].box, b[f - b0].box);
  return total / uni;
}

double tube_iou(const ActionTube& a, const GroundTruthTube& b) {
  return tube_iou(a.boxes, b.boxes);
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
  const int rows = static_cast<int>(weight.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(weight[0].size());
  const int n = std::max(rows, cols);
  // Hungarian method (min cost) on a square matrix, 1-based potentials.
  auto cost = [&](int i, int j) {
    if (i < rows && j < cols && weight[i][j] > 0.0) return -weight[i][j];
    return 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[j] - 1, c = j - 1;
    if (i < rows && c < cols && weight[i][c] > 0.0) assignment[i] = c;
  }
  return assignment;
}

namespace {

struct GrowingTube {
  std::vector<TubeBox> boxes;
  double score_sum = 0;
  int members = 0;
};

Box lerp(const Box& a, const Box& b, double t) {
  return {a.x_min + t * (b.x_min - a.x_min), a.y_min + t * (b.y_min - a.y_min),
          a.x_max + t * (b.x_max - a.x_max), a.y_max + t * (b.y_max - a.y_max)};
}

std::vector<ActionTube> finish(std::vector<GrowingTube>& growing, int class_id,
                               const LinkParams& params, const std::string& video_id) {
  std::vector<ActionTube> out;
  for (auto& g : growing) {
    if (static_cast<int>(g.boxes.size()) < params.min_length) continue;
    out.push_back({video_id, class_id, g.score_sum / g.members, std::move(g.boxes)});
  }
  return out;
}

}  // namespace

LinkResult link_detections_scored(const std::vector<std::vector<Detection>>& per_frame,
                                  int class_id, const LinkParams& params,
                                  const std::string& video_id) {
  LinkResult result;
  std::vector<GrowingTube> growing;
  for (int t = 0; t < static_cast<int>(per_frame.size()); ++t) {
    std::vector<const Detection*> dets;
    for (const auto& d : per_frame[t]) {
      if (d.class_id == class_id) dets.push_back(&d);
    }
    std::vector<size_t> active;
    for (size_t i = 0; i < growing.size(); ++i) {
      if (t - growing[i].boxes.back().frame_index <= params.gap_max) active.push_back(i);
    }
    std::vector<bool> taken(dets.size(), false);
    if (!active.empty() && !dets.empty()) {
      std::vector<std::vector<double>> w(active.size(), std::vector<double>(dets.size(), 0.0));
      for (size_t a = 0; a < active.size(); ++a) {
        const Box& last = growing[active[a]].boxes.back().box;
        for (size_t d = 0; d < dets.size(); ++d) {
          const double iou = box_iou(last, dets[d]->box);
          if (iou > 0.0) w[a][d] = dets[d]->score + params.lambda_iou * iou;
        }
      }
      const auto assign = max_weight_assignment(w);
      for (size_t a = 0; a < active.size(); ++a) {
        if (assign[a] < 0) continue;
        const Detection& d = *dets[assign[a]];
        GrowingTube& g = growing[active[a]];
        result.objective += w[a][assign[a]];
        const TubeBox last = g.boxes.back();
        for (int f = last.frame_index + 1; f < t; ++f) {
          const double s = double(f - last.frame_index) / (t - last.frame_index);
          g.boxes.push_back({f, lerp(last.box, d.box, s)});
        }
        g.boxes.push_back({t, d.box});
        g.score_sum += d.score;
        ++g.members;
        taken[assign[a]] = true;
      }
    }
    for (size_t d = 0; d < dets.size(); ++d) {
      if (taken[d]) continue;
      growing.push_back({{{t, dets[d]->box}}, dets[d]->score, 1});
    }
  }
  result.tubes = finish(growing, class_id, params, video_id);
  return result;
}

std::vector<ActionTube> link_detections(const std::vector<std::vector<Detection>>& per_frame,
                                        int class_id, const LinkParams& params,
                                        const std::string& video_id) {
  return link_detections_scored(per_frame, class_id, params, video_id).tubes;
}

std::vector<ActionTube> link_tubelets(const std::vector<TubeletDetection>& tubelets,
                                      int class_id, const LinkParams& params,
                                      const std::string& video_id) {
  std::vector<const TubeletDetection*> mine;
  for (const auto& t : tubelets) {
    if (t.class_id == class_id) mine.push_back(&t);
  }
  if (mine.empty()) return {};
  const int k = static_cast<int>(mine.front()->boxes.size());
  for (const auto* t : mine) {
    if (static_cast<int>(t->boxes.size()) != k || k == 0) {
      throw std::invalid_argument("link_tubelets: tubelets must share one length K >= 1");
    }
  }
  if (k == 1) {
    int frames = 0;
    for (const auto* t : mine) frames = std::max(frames, t->start_frame + 1);
    std::vector<std::vector<Detection>> per_frame(frames);
    for (const auto* t : mine) {
      per_frame[t->start_frame].push_back(
          {t->boxes[0], t->class_id, t->score, t->start_frame, t->anchor_index});
    }
    return link_detections(per_frame, class_id, params, video_id);
  }

  struct Accum {
    int first = 0;
    int last_start = 0;
    std::vector<Box> weighted;  // score-weighted box sums per frame
    std::vector<double> weight;
    double score_sum = 0;
    int members = 0;

    int last_frame() const { return first + static_cast<int>(weight.size()) - 1; }
    Box box_at(int f) const {
      const Box& s = weighted[f - first];
      const double w = weight[f - first];
      return {s.x_min / w, s.y_min / w, s.x_max / w, s.y_max / w};
    }
    void add(const TubeletDetection& t) {
      const int end = t.start_frame + static_cast<int>(t.boxes.size()) - 1;
      while (last_frame() < end) {
        weighted.push_back({});
        weight.push_back(0.0);
      }
      for (size_t i = 0; i < t.boxes.size(); ++i) {
        Box& s = weighted[t.start_frame + i - first];
        s.x_min += t.score * t.boxes[i].x_min;
        s.y_min += t.score * t.boxes[i].y_min;
        s.x_max += t.score * t.boxes[i].x_max;
        s.y_max += t.score * t.boxes[i].y_max;
        weight[t.start_frame + i - first] += t.score;
      }
      score_sum += t.score;
      ++members;
      last_start = t.start_frame;
    }
  };

  std::stable_sort(mine.begin(), mine.end(), [](const auto* a, const auto* b) {
    return a->start_frame < b->start_frame;
  });
  std::vector<Accum> tubes;
  size_t i = 0;
  while (i < mine.size()) {
    const int s = mine[i]->start_frame;
    std::vector<const TubeletDetection*> batch;
    for (; i < mine.size() && mine[i]->start_frame == s; ++i) batch.push_back(mine[i]);

    struct Pair {
      double iou;
      size_t tube, tubelet;
    };
    std::vector<Pair> pairs;
    for (size_t a = 0; a < tubes.size(); ++a) {
      const Accum& tube = tubes[a];
      if (s - tube.last_start > params.gap_max || tube.last_frame() < s) continue;
      const int shared_end = std::min(tube.last_frame(), s + k - 1);
      for (size_t b = 0; b < batch.size(); ++b) {
        double total = 0.0;
        for (int f = s; f <= shared_end; ++f) {
          total += box_iou(tube.box_at(f), batch[b]->boxes[f - s]);
        }
        const double iou = total / (shared_end - s + 1);
        if (iou > 0.0) pairs.push_back({iou, a, b});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& x, const Pair& y) { return x.iou > y.iou; });
    std::vector<bool> tube_used(tubes.size(), false), tubelet_used(batch.size(), false);
    for (const Pair& p : pairs) {
      if (tube_used[p.tube] || tubelet_used[p.tubelet]) continue;
      tube_used[p.tube] = tubelet_used[p.tubelet] = true;
      tubes[p.tube].add(*batch[p.tubelet]);
    }
    for (size_t b = 0; b < batch.size(); ++b) {
      if (tubelet_used[b]) continue;
      Accum fresh;
      fresh.first = s;
      fresh.add(*batch[b]);
      tubes.push_back(std::move(fresh));
    }
  }

  std::vector<ActionTube> out;
  for (const Accum& a : tubes) {
    ActionTube tube{video_id, class_id, a.score_sum / a.members, {}};
    for (int f = a.first; f <= a.last_frame(); ++f) tube.boxes.push_back({f, a.box_at(f)});
    if (static_cast<int>(tube.boxes.size()) >= params.min_length) out.push_back(std::move(tube));
  }
  return out;
}

ApResult video_ap(const std::vector<ActionTube>& tubes,
                  const std::vector<GroundTruthTube>& gt, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("video_ap: threshold must lie in (0, 1)");
  }
  ApResult result;
  std::vector<int> classes;
  for (const auto& g : gt) classes.push_back(g.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  for (int c : classes) {
    std::vector<size_t> gts;
    for (size_t j = 0; j < gt.size(); ++j) {
      if (gt[j].class_id == c) gts.push_back(j);
    }
    std::vector<size_t> ranked;
    for (size_t i = 0; i < tubes.size(); ++i) {
      if (tubes[i].class_id == c) ranked.push_back(i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](size_t a, size_t b) {
      return tubes[a].score > tubes[b].score;
    });

    std::vector<bool> matched(gts.size(), false);
    std::vector<int> tp_flags;
    for (size_t i : ranked) {
      double best = -1.0;
      int best_j = -1;
      for (size_t j = 0; j < gts.size(); ++j) {
        if (matched[j] || gt[gts[j]].video_id != tubes[i].video_id) continue;
        const double iou = tube_iou(tubes[i], gt[gts[j]]);
        if (iou > best) {
          best = iou;
          best_j = static_cast<int>(j);
        }
      }
      const bool tp = best_j >= 0 && best >= threshold;
      if (tp) matched[best_j] = true;
      tp_flags.push_back(tp ? 1 : 0);
    }

    // All-points interpolated area under the precision-recall curve.
    const double npos = static_cast<double>(gts.size());
    std::vector<double> recall, precision;
    int tp = 0;
    for (size_t r = 0; r < tp_flags.size(); ++r) {
      tp += tp_flags[r];
      recall.push_back(tp / npos);
      precision.push_back(tp / static_cast<double>(r + 1));
    }
    for (size_t r = precision.size(); r-- > 1;) {
      precision[r - 1] = std::max(precision[r - 1], precision[r]);
    }
    double ap = 0.0, prev_recall = 0.0;
    for (size_t r = 0; r < recall.size(); ++r) {
      ap += (recall[r] - prev_recall) * precision[r];
      prev_recall = recall[r];
    }
    result.per_class[c] = ap;
  }
  if (!result.per_class.empty()) {
    double total = 0.0;
    for (const auto& [c, ap] : result.per_class) total += ap;
    result.mean = total / static_cast<double>(result.per_class.size());
  }
  return result;
}

std::vector<double> coco_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

double MapReport::at(const std::string& label) const {
  for (const auto& [l, r] : rows) {
    if (l == label) return r.mean;
  }
  throw std::out_of_range("no mAP row '" + label + "'");
}

MapReport video_map(const std::vector<ActionTube>& tubes,
                    const std::vector<GroundTruthTube>& gt) {
  MapReport report;
  report.rows.emplace_back("0.20", video_ap(tubes, gt, 0.2));
  report.rows.emplace_back("0.50", video_ap(tubes, gt, 0.5));
  report.rows.emplace_back("0.75", video_ap(tubes, gt, 0.75));
  ApResult avg;
  const auto ts = coco_thresholds();
  for (double t : ts) {
    const ApResult r = video_ap(tubes, gt, t);
    for (const auto& [c, ap] : r.per_class) avg.per_class[c] += ap;
    avg.mean += r.mean;
  }
  // Sum first, divide once: a perfect detector averages to exactly 1.
  const double n = static_cast<double>(ts.size());
  for (auto& [c, ap] : avg.per_class) ap /= n;
  avg.mean /= n;
  report.rows.emplace_back("0.50:0.95", avg);
  return report;
}

}  // namespace mcm

namespace mcm {

std::string format_tube_record(const ActionTube& tube) {
  if (tube.video_id.empty() || tube.video_id.find_first_of(" \t\n") != std::string::npos) {
    throw std::invalid_argument("tube record: video id must be a non-empty token");
  }
  std::string out = tube.video_id + " " + std::to_string(tube.class_id);
  char buf[128];
  std::snprintf(buf, sizeof buf, " %.17g", tube.score);
  out += buf;
  for (const TubeBox& tb : tube.boxes) {
    std::snprintf(buf, sizeof buf, " %d:%.17g,%.17g,%.17g,%.17g", tb.frame_index,
                  tb.box.x_min, tb.box.y_min, tb.box.x_max, tb.box.y_max);
    out += buf;
  }
  return out;
}

ActionTube parse_tube_record(const std::string& line) {
  std::istringstream in(line);
  ActionTube tube;
  std::string class_tok, score_tok;
  if (!(in >> tube.video_id >> class_tok >> score_tok)) {
    throw std::invalid_argument("tube record: expected video_id class_id score");
  }
  try {
    size_t used = 0;
    tube.class_id = std::stoi(class_tok, &used);
    if (used != class_tok.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("tube record: bad class id '" + class_tok + "'");
  }
  try {
    size_t used = 0;
    tube.score = std::stod(score_tok, &used);
    if (used != score_tok.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("tube record: bad score '" + score_tok + "'");
  }
  std::string tok;
  while (in >> tok) {
    TubeBox tb;
    char colon = 0, c1 = 0, c2 = 0, c3 = 0;
    std::istringstream field(tok);
    field >> tb.frame_index >> colon >> tb.box.x_min >> c1 >> tb.box.y_min >> c2 >>
        tb.box.x_max >> c3 >> tb.box.y_max;
    if (!field || colon != ':' || c1 != ',' || c2 != ',' || c3 != ',' ||
        field.peek() != std::char_traits<char>::eof()) {
      throw std::invalid_argument("tube record: bad box field '" + tok + "'");
    }
    tube.boxes.push_back(tb);
  }
  validate_tube(tube.boxes);
  return tube;
}

GroundTruthTube to_ground_truth(const ActionTube& tube) {
  return {tube.video_id, tube.class_id, tube.boxes};
}

ActionTube as_detection(const GroundTruthTube& gt, double score) {
  return {gt.video_id, gt.class_id, score, gt.boxes};
}

}  // namespace mcm
