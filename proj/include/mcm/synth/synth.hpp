#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mcm/flow/flow.hpp"
#include "mcm/flow/frame.hpp"
#include "mcm/tubes/tubes.hpp"

namespace mcm {

enum class MotionPattern { kMoveUp, kMoveDown, kOscillateHorizontal, kDiagonal };

std::string motion_pattern_name(MotionPattern p);
MotionPattern parse_motion_pattern(const std::string& name);

enum class Split { kTrain, kTest };
std::string split_name(Split s);
Split parse_split(const std::string& name);

struct VideoSample {
  std::string video_id;
  std::vector<Frame> frames;
  std::vector<FlowField> flows;
  std::vector<GroundTruthTube> gt_tubes;
  Split split = Split::kTrain;
};

struct GenConfig {
  uint64_t seed = 1;          // layout, class order and motion
  uint64_t texture_seed = 7;  // background and sprite textures only
  int num_train = 40;
  int num_test = 20;
  int frames_per_video = 12;
  int resolution = 64;
  std::vector<MotionPattern> classes = {MotionPattern::kMoveUp, MotionPattern::kMoveDown,
                                        MotionPattern::kOscillateHorizontal,
                                        MotionPattern::kDiagonal};
  bool camouflage = true;
  double noise_level = 0.02;  // per-frame pixel noise standard deviation
  int sprite_min = 12;
  int sprite_max = 20;
  double speed = 2.0;         // pixels per frame
  int drift = 0;              // global background shift in pixels per frame
  FlowQuality flow_quality = FlowQuality::kFast;

  // Throws std::invalid_argument naming the offending field.
  void validate(int tubelet_len = 1) const;
};

// Class ids are 1-based positions in cfg.classes. Classes are balanced and
// assigned round-robin within each split.
std::vector<VideoSample> generate(const GenConfig& cfg);
VideoSample generate_video(const GenConfig& cfg, int index);

// Same appearance, temporal order shuffled per video (GT boxes follow their
// frames), flows recomputed. Motion no longer identifies the class.
std::vector<VideoSample> frame_shuffled(const std::vector<VideoSample>& samples,
                                        uint64_t seed, FlowQuality quality);

// Directory layout:
//   manifest                 "mcm-dataset 1", a "classes ..." line, then
//                            "video <id> <split> <num_frames>" lines
//   <id>/frame_NNNN.ppm      frames
//   <id>/flow_NNNN.flo       flows
//   <id>/gt.txt              one tube record per line (score 1)
void write_dataset(const std::vector<VideoSample>& samples,
                   const std::vector<std::string>& class_names,
                   const std::filesystem::path& dir);

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<VideoSample> samples;
  std::vector<std::string> warnings;
};

// Throws std::runtime_error naming the file and the reason on missing or
// corrupt content. A directory without a manifest reads as empty with a
// warning.
Dataset read_dataset(const std::filesystem::path& dir);

std::vector<std::string> class_names(const GenConfig& cfg);

}  // namespace mcm
