#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcm/detector/loss.hpp"
#include "mcm/model/action_detector.hpp"
#include "mcm/synth/synth.hpp"
#include "mcm/tubes/tubes.hpp"

namespace mcm {

// Network inputs and loss targets of one video, computed once.
struct PreparedVideo {
  std::string video_id;
  std::vector<FrameInput> inputs;      // per frame
  std::vector<LossTargets> targets;    // per window start, windows of tubelet_len
  std::vector<GroundTruthTube> gt;

  int num_windows() const { return static_cast<int>(targets.size()); }
};

std::vector<PreparedVideo> prepare_videos(const std::vector<VideoSample>& samples,
                                          const AnchorSet& anchors,
                                          const DetectorConfig& cfg, double flow_scale);

struct TrainSchedule {
  double lr = 0.01;
  double momentum = 0.0;  // 0 is plain SGD
  int epochs = 30;
  int decay_every = 20;   // epochs; 0 disables decay
  double decay_factor = 0.1;
  int batch_size = 1;     // windows whose gradients are averaged per step
  int windows_per_video = 3;  // sampled per video per epoch; 0 = all
  uint64_t seed = 1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double mean_loss = 0;  // over all streams and sampled windows
  double eval_map = -1;  // mAP@0.5 when an evaluator is attached
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainLog log)
      : std::runtime_error(what), log_(std::move(log)) {}
  const TrainLog& log() const { return log_; }

 private:
  TrainLog log_;
};

using EpochEvaluator = std::function<double(const ActionDetector&)>;
using EpochCallback = std::function<void(const EpochLog&)>;

// SGD (optionally with momentum) over sampled windows; every stream is trained on its own loss.
// A non-finite loss restores the parameters saved at the start of the
// epoch and throws TrainingDiverged.
TrainLog train(ActionDetector& detector, const std::vector<PreparedVideo>& videos,
               const TrainSchedule& schedule, const EpochEvaluator& evaluator = {},
               const EpochCallback& on_epoch = {});

// Loss of a single window, summed over streams; no parameter update.
double window_loss(ActionDetector& detector, const PreparedVideo& video, int start,
                   bool accumulate_grad = false);

struct VideoDetections {
  std::string video_id;
  std::vector<TubeletDetection> tubelets;  // K = 1 tubelets are frame detections
};

std::vector<VideoDetections> detect_videos(const ActionDetector& detector,
                                           const std::vector<PreparedVideo>& videos,
                                           const DetectParams& params);

std::vector<ActionTube> link_videos(const std::vector<VideoDetections>& detections,
                                    int num_classes, const LinkParams& params);

struct EvalResult {
  MapReport report;
  std::vector<VideoDetections> detections;
  std::vector<ActionTube> tubes;
  double seconds_per_frame = 0;
};

EvalResult evaluate(const ActionDetector& detector, const std::vector<PreparedVideo>& videos,
                    const DetectParams& detect = {}, const LinkParams& link = {});

std::vector<GroundTruthTube> ground_truth(const std::vector<PreparedVideo>& videos);

}  // namespace mcm
