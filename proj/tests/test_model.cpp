#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mcm/model/pipeline.hpp"
#include "mcm/numerics/random.hpp"

using namespace mcm;
namespace fs = std::filesystem;

namespace {

std::vector<VideoSample> tiny_dataset(int videos, int frames) {
  GenConfig g;
  g.num_train = videos;
  g.num_test = 0;
  g.frames_per_video = frames;
  g.camouflage = false;
  return generate(g);
}

bool same_parameters(const ActionDetector& a, const ActionDetector& b) {
  const auto sa = a.snapshot(), sb = b.snapshot();
  if (sa.size() != sb.size()) return false;
  for (size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].name != sb[i].name || !bitwise_equal(sa[i].tensor, sb[i].tensor)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("mode names round trip") {
  for (auto m : all_modes()) CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("three_stream"), std::invalid_argument);
}

TEST_CASE("two-stream parameter accounting") {
  DetectorConfig cfg;
  ConditionConfig cond;
  auto count = [&](DetectorMode m) { return ActionDetector(m, cfg, cond, 3).parameter_count(); };
  const int64_t rgb = count(DetectorMode::kRgb), flow = count(DetectorMode::kFlow);
  const int64_t tio = count(DetectorMode::kTwoInOne);
  CHECK(count(DetectorMode::kTwoStream) == rgb + flow);
  CHECK(count(DetectorMode::kTwoInOneTwoStream) == tio + flow);
  CHECK(static_cast<double>(tio) / rgb < 1.02);
}

TEST_CASE("fused scores average the two streams") {
  const auto data = tiny_dataset(1, 2);
  DetectorConfig cfg;
  ActionDetector fused(DetectorMode::kTwoStream, cfg, {}, 5);
  const auto prepared = prepare_videos(data, fused.anchors(), cfg, 20.0);
  std::span<const FrameInput> window(prepared[0].inputs.data(), 1);
  const ScoredAnchors s = fused.score(window);
  const ScoredAnchors a = score_outputs(fused.appearance()->forward(window));
  const ScoredAnchors m = score_outputs(fused.motion()->forward(window));
  CHECK(s.scores == fuse_two_stream(a, m).scores);
  CHECK(s.offsets == a.offsets);

  ActionDetector composed(DetectorMode::kTwoStream, fused.appearance(), fused.motion());
  CHECK(composed.score(window).scores == s.scores);
  CHECK_THROWS_AS(ActionDetector(DetectorMode::kTwoInOneTwoStream, fused.appearance(), fused.motion()),
                  std::invalid_argument);
  CHECK_THROWS_AS(ActionDetector(DetectorMode::kRgb, fused.appearance(), fused.motion()),
                  std::invalid_argument);
}

TEST_CASE("checkpoints restore every stream") {
  DetectorConfig cfg;
  ActionDetector a(DetectorMode::kTwoInOneTwoStream, cfg, {}, 1);
  ActionDetector b(DetectorMode::kTwoInOneTwoStream, cfg, {}, 2);
  CHECK_FALSE(same_parameters(a, b));
  const fs::path path = fs::temp_directory_path() / "mcm_model_ckpt.fmw";
  a.save(path);
  b.load(path);
  CHECK(same_parameters(a, b));
  ActionDetector rgb(DetectorMode::kRgb, cfg, {}, 1);
  CHECK_THROWS_AS(rgb.load(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("detection records") {
  TubeletDetection d{4, 2, 0.123456789123, {{0.1, 0.2, 0.3, 0.4}}, 17};
  const std::string line = format_detection_record("clip", d);
  CHECK(line == "clip 4 2 0.123456789 0.1 0.2 0.3 0.4");
  const auto [video, back] = parse_detection_record(line);
  CHECK(video == "clip");
  CHECK(back.start_frame == 4);
  CHECK(back.class_id == 2);
  CHECK(back.score == doctest::Approx(0.123456789));
  CHECK(back.boxes == d.boxes);
  d.boxes.push_back({0.2, 0.2, 0.5, 0.5});
  CHECK(parse_detection_record(format_detection_record("clip", d)).second.boxes.size() == 2);
  CHECK_THROWS_AS(parse_detection_record("clip 1 1 0.5 0 0 1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_detection_record("clip 1 1 0.5 0.5 0 0.2 1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_detection_record("clip 1 1 0.5 0 0 1 x"), std::invalid_argument);
}

TEST_CASE("prepared windows follow the tubelet length") {
  const auto data = tiny_dataset(1, 5);
  DetectorConfig cfg;
  cfg.tubelet_len = 3;
  ActionDetector det(DetectorMode::kRgb, cfg, {}, 1);
  const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
  CHECK(prepared[0].num_windows() == 3);
  CHECK(prepared[0].targets[0].offsets.shape() == Shape{3840, 12});
  CHECK(prepared[0].targets[0].num_positive > 0);
  cfg.tubelet_len = 6;
  CHECK_THROWS_AS(prepare_videos(data, det.anchors(), cfg, 20.0), std::invalid_argument);
}

TEST_CASE("training on one sample lowers its loss step by step") {
  const auto data = tiny_dataset(1, 1);
  DetectorConfig cfg;
  ActionDetector det(DetectorMode::kTwoInOne, cfg, {}, 1);
  const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
  TrainSchedule s;
  s.epochs = 10;
  s.lr = 0.005;
  s.momentum = 0.0;
  const TrainLog log = train(det, prepared, s);
  REQUIRE(log.epochs.size() == 10);
  for (size_t i = 1; i < log.epochs.size(); ++i) {
    CHECK(log.epochs[i].mean_loss < log.epochs[i - 1].mean_loss);
  }
}

TEST_CASE("zero learning rate leaves the loss unchanged") {
  const auto data = tiny_dataset(1, 1);
  DetectorConfig cfg;
  ActionDetector det(DetectorMode::kTwoStream, cfg, {}, 1);
  const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
  const auto before = det.snapshot();
  TrainSchedule s;
  s.epochs = 4;
  s.lr = 0.0;
  const TrainLog log = train(det, prepared, s);
  for (const auto& e : log.epochs) CHECK(e.mean_loss == log.epochs[0].mean_loss);
  ActionDetector fresh(DetectorMode::kTwoStream, cfg, {}, 1);
  CHECK(same_parameters(det, fresh));
}

TEST_CASE("training is deterministic per seed") {
  const auto data = tiny_dataset(2, 3);
  DetectorConfig cfg;
  TrainSchedule s;
  s.epochs = 2;
  s.windows_per_video = 2;
  s.batch_size = 2;
  auto run = [&] {
    ActionDetector det(DetectorMode::kTwoInOne, cfg, {}, 9);
    const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
    train(det, prepared, s);
    return det;
  };
  const ActionDetector a = run(), b = run();
  CHECK(same_parameters(a, b));
}

TEST_CASE("separately trained streams equal a jointly trained two-stream detector") {
  const auto data = tiny_dataset(2, 3);
  DetectorConfig cfg;
  TrainSchedule s;
  s.epochs = 2;
  s.windows_per_video = 2;
  auto trained = [&](DetectorMode m) {
    ActionDetector det(m, cfg, {}, 4);
    const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
    train(det, prepared, s);
    return det;
  };
  const ActionDetector joint = trained(DetectorMode::kTwoInOneTwoStream);
  const ActionDetector tio = trained(DetectorMode::kTwoInOne);
  const ActionDetector flow = trained(DetectorMode::kFlow);
  const ActionDetector composed(DetectorMode::kTwoInOneTwoStream, tio.appearance(), flow.motion());
  CHECK(same_parameters(joint, composed));
}

TEST_CASE("divergence restores the last good parameters") {
  const auto data = tiny_dataset(1, 2);
  DetectorConfig cfg;
  ActionDetector det(DetectorMode::kRgb, cfg, {}, 1);
  const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
  TrainSchedule s;
  s.epochs = 50;
  s.lr = 1e6;
  s.momentum = 0.0;
  try {
    train(det, prepared, s);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    for (const auto& p : det.snapshot()) CHECK(p.tensor.all_finite());
    CHECK(e.log().epochs.size() < 50);
  }
}

TEST_CASE("ground truth as detections evaluates to mAP 1") {
  GenConfig g;
  g.num_train = 0;
  g.num_test = 4;
  const auto data = generate(g);
  std::vector<VideoDetections> dets;
  for (const auto& s : data) {
    VideoDetections vd{s.video_id, {}};
    for (const auto& tb : s.gt_tubes[0].boxes) {
      vd.tubelets.push_back({tb.frame_index, s.gt_tubes[0].class_id, 0.9, {tb.box}, 0});
    }
    dets.push_back(vd);
  }
  std::vector<GroundTruthTube> gt;
  for (const auto& s : data) gt.push_back(s.gt_tubes[0]);
  const MapReport r = video_map(link_videos(dets, 4, {}), gt);
  for (const auto& [label, ap] : r.rows) CHECK(ap.mean == doctest::Approx(1.0));
}

TEST_CASE("evaluation runs end to end on an untrained detector") {
  const auto data = tiny_dataset(2, 3);
  DetectorConfig cfg;
  ActionDetector det(DetectorMode::kTwoInOneTwoStream, cfg, {}, 1);
  const auto prepared = prepare_videos(data, det.anchors(), cfg, 20.0);
  const EvalResult r = evaluate(det, prepared);
  CHECK(r.report.rows.size() == 4);
  CHECK(r.detections.size() == 2);
  for (const auto& [label, ap] : r.report.rows) {
    CHECK(ap.mean >= 0.0);
    CHECK(ap.mean <= 1.0);
  }
  CHECK(r.seconds_per_frame > 0.0);
}
