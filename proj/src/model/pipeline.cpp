#include "mcm/model/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "mcm/numerics/ops.hpp"
#include "mcm/numerics/optim.hpp"
#include "mcm/numerics/random.hpp"

namespace mcm {

std::vector<PreparedVideo> prepare_videos(const std::vector<VideoSample>& samples,
                                          const AnchorSet& anchors,
                                          const DetectorConfig& cfg, double flow_scale) {
  const int k = cfg.tubelet_len;
  std::vector<PreparedVideo> out;
  for (const VideoSample& s : samples) {
    const int frames = static_cast<int>(s.frames.size());
    if (frames < k) {
      throw std::invalid_argument("video " + s.video_id + " has " + std::to_string(frames) +
                                  " frames, fewer than tubelet_len " + std::to_string(k));
    }
    if (s.flows.size() != s.frames.size()) {
      throw std::invalid_argument("video " + s.video_id + ": flow count differs from frame count");
    }
    PreparedVideo v;
    v.video_id = s.video_id;
    v.gt = s.gt_tubes;
    for (int t = 0; t < frames; ++t) {
      if (s.frames[t].height() != cfg.image_size || s.frames[t].width() != cfg.image_size) {
        throw std::invalid_argument("video " + s.video_id + " frame size does not match detector "
                                    "image_size " + std::to_string(cfg.image_size));
      }
      v.inputs.push_back(make_frame_input(s.frames[t], s.flows[t], flow_scale));
    }
    for (int start = 0; start + k <= frames; ++start) {
      std::vector<GroundTruthObject> objects;
      for (const auto& tube : s.gt_tubes) {
        const int first = tube.boxes.front().frame_index;
        if (start < first || start + k - 1 > tube.boxes.back().frame_index) continue;
        GroundTruthObject obj{tube.class_id, {}};
        for (int i = 0; i < k; ++i) obj.boxes.push_back(tube.boxes[start + i - first].box);
        objects.push_back(std::move(obj));
      }
      v.targets.push_back(build_targets(objects, anchors, cfg.pos_iou, k));
    }
    out.push_back(std::move(v));
  }
  return out;
}

void TrainSchedule::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train.lr must be >= 0");
  if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (decay_every < 0) throw std::invalid_argument("train.decay_every must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("train.momentum must lie in [0, 1)");
  }
  if (!(decay_factor > 0.0)) throw std::invalid_argument("train.decay_factor must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (windows_per_video < 0) throw std::invalid_argument("train.windows_per_video must be >= 0");
}

namespace {

std::span<const FrameInput> window(const PreparedVideo& v, int start, int k) {
  return {v.inputs.data() + start, static_cast<size_t>(k)};
}

}  // namespace

double window_loss(ActionDetector& detector, const PreparedVideo& video, int start,
                   bool accumulate_grad) {
  const int k = detector.tubelet_len();
  const int neg_ratio = detector.config().neg_ratio;
  double total = 0.0;
  for (const auto& stream : detector.streams()) {
    const HeadOutput out = stream->forward(window(video, start, k));
    const Var loss = multibox_loss(out.logits, out.boxes, video.targets[start], neg_ratio);
    total += loss.value()[0];
    if (accumulate_grad) backward(loss);
  }
  return total;
}

TrainLog train(ActionDetector& detector, const std::vector<PreparedVideo>& videos,
               const TrainSchedule& schedule, const EpochEvaluator& evaluator,
               const EpochCallback& on_epoch) {
  schedule.validate();
  const StepDecay decay{schedule.lr, schedule.decay_every, schedule.decay_factor};
  const int k = detector.tubelet_len();
  const int neg_ratio = detector.config().neg_ratio;
  const auto streams = detector.streams();
  std::vector<MomentumSgd> optimizers(streams.size(), MomentumSgd(schedule.momentum));
  TrainLog log;

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const auto good = detector.snapshot();
    Rng rng(derive_seed(schedule.seed, 100 + static_cast<uint64_t>(epoch)));
    std::vector<std::pair<int, int>> items;  // (video, window start)
    for (size_t v = 0; v < videos.size(); ++v) {
      std::vector<int> starts(videos[v].num_windows());
      for (size_t i = 0; i < starts.size(); ++i) starts[i] = static_cast<int>(i);
      size_t take = starts.size();
      if (schedule.windows_per_video > 0) {
        take = std::min(take, static_cast<size_t>(schedule.windows_per_video));
      }
      for (size_t i = 0; i < take; ++i) {
        std::swap(starts[i], starts[i + rng.below(static_cast<int64_t>(starts.size() - i))]);
        items.push_back({static_cast<int>(v), starts[i]});
      }
    }
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[rng.below(static_cast<int64_t>(i))]);
    }

    const double lr = decay.rate(epoch);
    double loss_sum = 0.0;
    for (size_t b = 0; b < items.size(); b += schedule.batch_size) {
      const size_t end = std::min(items.size(), b + schedule.batch_size);
      const double inv = 1.0 / static_cast<double>(end - b);
      for (size_t si = 0; si < streams.size(); ++si) {
        const auto& stream = streams[si];
        for (size_t i = b; i < end; ++i) {
          const auto& [v, start] = items[i];
          const HeadOutput out = stream->forward(window(videos[v], start, k));
          Var loss = multibox_loss(out.logits, out.boxes, videos[v].targets[start], neg_ratio);
          const double value = loss.value()[0];
          if (!std::isfinite(value)) {
            detector.assign(good);
            for (const auto& s : streams) s->parameters().clear_grads();
            throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch + 1) +
                                       " (" + stream_kind_name(stream->kind()) +
                                       " stream); parameters restored to the start of the epoch",
                                   log);
          }
          loss_sum += value;
          backward(inv == 1.0 ? loss : scale(loss, inv));
        }
        optimizers[si].step(stream->parameters().items(), lr);
      }
    }

    EpochLog entry{epoch + 1, lr, items.empty() ? 0.0 : loss_sum / items.size(), -1};
    if (evaluator) entry.eval_map = evaluator(detector);
    log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

std::vector<VideoDetections> detect_videos(const ActionDetector& detector,
                                           const std::vector<PreparedVideo>& videos,
                                           const DetectParams& params) {
  const int k = detector.tubelet_len();
  std::vector<VideoDetections> out;
  for (const PreparedVideo& v : videos) {
    VideoDetections vd{v.video_id, {}};
    const int windows = static_cast<int>(v.inputs.size()) - k + 1;
    for (int start = 0; start < windows; ++start) {
      const ScoredAnchors scored = detector.score(window(v, start, k));
      auto found = decode_tubelets(scored, detector.anchors(), params, start);
      vd.tubelets.insert(vd.tubelets.end(), found.begin(), found.end());
    }
    out.push_back(std::move(vd));
  }
  return out;
}

std::vector<ActionTube> link_videos(const std::vector<VideoDetections>& detections,
                                    int num_classes, const LinkParams& params) {
  std::vector<ActionTube> tubes;
  for (const VideoDetections& vd : detections) {
    for (int c = 1; c <= num_classes; ++c) {
      auto linked = link_tubelets(vd.tubelets, c, params, vd.video_id);
      tubes.insert(tubes.end(), linked.begin(), linked.end());
    }
  }
  return tubes;
}

std::vector<GroundTruthTube> ground_truth(const std::vector<PreparedVideo>& videos) {
  std::vector<GroundTruthTube> gt;
  for (const auto& v : videos) gt.insert(gt.end(), v.gt.begin(), v.gt.end());
  return gt;
}

EvalResult evaluate(const ActionDetector& detector, const std::vector<PreparedVideo>& videos,
                    const DetectParams& detect, const LinkParams& link) {
  EvalResult result;
  const auto t0 = std::chrono::steady_clock::now();
  result.detections = detect_videos(detector, videos, detect);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  size_t frames = 0;
  for (const auto& v : videos) frames += v.inputs.size();
  result.seconds_per_frame = frames ? secs / frames : 0.0;
  result.tubes = link_videos(result.detections, detector.config().num_classes, link);
  result.report = video_map(result.tubes, ground_truth(videos));
  return result;
}

}  // namespace mcm
