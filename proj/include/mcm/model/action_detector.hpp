#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcm/detector/detect.hpp"
#include "mcm/detector/network.hpp"
#include "mcm/numerics/checkpoint.hpp"

namespace mcm {

enum class DetectorMode { kRgb, kFlow, kTwoInOne, kTwoStream, kTwoInOneTwoStream };

std::string mode_name(DetectorMode mode);
DetectorMode parse_mode(const std::string& text);
std::vector<DetectorMode> all_modes();

// One or two detector networks. Two-stream modes pair an appearance network
// (rgb or two_in_one) with a flow network and average their class scores.
// Parameter names start with "appearance/" or "motion/".
class ActionDetector {
 public:
  ActionDetector(DetectorMode mode, const DetectorConfig& cfg,
                 const ConditionConfig& condition, uint64_t seed);
  // Fused detector built from already trained streams.
  ActionDetector(DetectorMode mode, std::shared_ptr<DetectorNetwork> appearance,
                 std::shared_ptr<DetectorNetwork> motion);

  DetectorMode mode() const { return mode_; }
  const DetectorConfig& config() const;
  const AnchorSet& anchors() const;
  int tubelet_len() const { return config().tubelet_len; }

  // Streams in training order (appearance first).
  std::vector<std::shared_ptr<DetectorNetwork>> streams() const;
  std::shared_ptr<DetectorNetwork> appearance() const { return appearance_; }
  std::shared_ptr<DetectorNetwork> motion() const { return motion_; }

  int64_t parameter_count() const;

  // Class probabilities and offsets for one frame window of tubelet_len.
  ScoredAnchors score(std::span<const FrameInput> frames) const;

  std::vector<NamedTensor> snapshot() const;
  void assign(const std::vector<NamedTensor>& values);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  DetectorMode mode_;
  std::shared_ptr<DetectorNetwork> appearance_;
  std::shared_ptr<DetectorNetwork> motion_;
};

// Line record "video_id frame class score x_min y_min x_max y_max", numbers
// with 9 significant digits. A K-frame tubelet appends the boxes of its
// remaining frames, so it has 4 + 4K fields and `frame` is its start.
std::string format_detection_record(const std::string& video_id, const TubeletDetection& d);
// Throws std::invalid_argument on malformed lines.
std::pair<std::string, TubeletDetection> parse_detection_record(const std::string& line);

}  // namespace mcm
