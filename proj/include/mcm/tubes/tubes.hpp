#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcm/detector/boxes.hpp"
#include "mcm/detector/detect.hpp"

namespace mcm {

struct TubeBox {
  int frame_index = 0;
  Box box;
  friend bool operator==(const TubeBox&, const TubeBox&) = default;
};

struct ActionTube {
  std::string video_id;
  int class_id = 1;
  double score = 0;
  std::vector<TubeBox> boxes;  // consecutive ascending frames

  int first_frame() const { return boxes.front().frame_index; }
  int last_frame() const { return boxes.back().frame_index; }
  friend bool operator==(const ActionTube&, const ActionTube&) = default;
};

struct GroundTruthTube {
  std::string video_id;
  int class_id = 1;
  std::vector<TubeBox> boxes;
  friend bool operator==(const GroundTruthTube&, const GroundTruthTube&) = default;
};

// Throws std::invalid_argument unless frames are consecutive and ascending
// and the tube is non-empty.
void validate_tube(const std::vector<TubeBox>& boxes);

double spatial_iou(const Box& a, const Box& b);

// Mean per-frame IoU over the union of both temporal extents; frames covered
// by only one tube count as 0.
double tube_iou(const std::vector<TubeBox>& a, const std::vector<TubeBox>& b);
double tube_iou(const ActionTube& a, const GroundTruthTube& b);

struct LinkParams {
  double lambda_iou = 1.0;
  int gap_max = 1;      // frames a tube may go unextended before it ends
  int min_length = 2;   // shorter tubes are dropped from the output
};

struct LinkResult {
  std::vector<ActionTube> tubes;
  // Sum over every link made of score(candidate) + lambda * IoU(last, candidate).
  double objective = 0;
};

// Frame-sequential linking of one class. At each frame the active tubes
// and the frame's detections are paired by a maximum-weight assignment on
// score + lambda * IoU (pairs need IoU > 0); leftover detections open new
// tubes. Tube score is the mean member score. `per_frame[t]` holds frame
// t's detections (other classes are ignored).
LinkResult link_detections_scored(const std::vector<std::vector<Detection>>& per_frame,
                                  int class_id, const LinkParams& params = {},
                                  const std::string& video_id = "");
std::vector<ActionTube> link_detections(const std::vector<std::vector<Detection>>& per_frame,
                                        int class_id, const LinkParams& params = {},
                                        const std::string& video_id = "");

// Links tubelets of one class whose start frames overlap by K-1 frames.
// Per start frame, active tubes and new tubelets are paired greedily by
// descending mean IoU over shared frames (must be > 0); a tube's box on a
// frame is the score-weighted mean of all tubelet boxes covering it, and
// its score is the mean tubelet score. K = 1 defers to link_detections.
std::vector<ActionTube> link_tubelets(const std::vector<TubeletDetection>& tubelets,
                                      int class_id, const LinkParams& params = {},
                                      const std::string& video_id = "");

struct ApResult {
  std::map<int, double> per_class;  // classes with at least one GT
  double mean = 0;
};

// Video AP per class with all-points interpolation. Tubes are ranked by
// score (ties by input order); each is a true positive if its best tube_iou
// against a still-unmatched GT of the same class and video reaches
// `threshold`.
ApResult video_ap(const std::vector<ActionTube>& tubes,
                  const std::vector<GroundTruthTube>& gt, double threshold);

struct MapReport {
  std::vector<std::pair<std::string, ApResult>> rows;  // label -> result
  double at(const std::string& label) const;
};

// Standard threshold set: 0.20, 0.50, 0.75 and the 0.50:0.95 average.
MapReport video_map(const std::vector<ActionTube>& tubes,
                    const std::vector<GroundTruthTube>& gt);
std::vector<double> coco_thresholds();  // 0.50, 0.55, ..., 0.95

// Max-weight bipartite assignment; weight <= 0 means "may not pair".
// Returns for each row the assigned column or -1.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight);

}  // namespace mcm

namespace mcm {

// One-line text record: "video_id class_id score f:x0,y0,x1,y1 ...", with
// numbers printed as %.17g so parsing restores the exact doubles.
std::string format_tube_record(const ActionTube& tube);
// Throws std::invalid_argument describing the malformed field.
ActionTube parse_tube_record(const std::string& line);

GroundTruthTube to_ground_truth(const ActionTube& tube);
ActionTube as_detection(const GroundTruthTube& gt, double score = 1.0);

}  // namespace mcm
