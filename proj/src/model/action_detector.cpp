#include "mcm/model/action_detector.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mcm/numerics/random.hpp"

namespace mcm {

std::string mode_name(DetectorMode mode) {
  switch (mode) {
    case DetectorMode::kRgb: return "rgb";
    case DetectorMode::kFlow: return "flow";
    case DetectorMode::kTwoInOne: return "two_in_one";
    case DetectorMode::kTwoStream: return "two_stream";
    case DetectorMode::kTwoInOneTwoStream: return "two_in_one_two_stream";
  }
  return "?";
}

std::vector<DetectorMode> all_modes() {
  return {DetectorMode::kRgb, DetectorMode::kFlow, DetectorMode::kTwoStream,
          DetectorMode::kTwoInOne, DetectorMode::kTwoInOneTwoStream};
}

DetectorMode parse_mode(const std::string& text) {
  for (auto m : all_modes()) {
    if (mode_name(m) == text) return m;
  }
  throw std::invalid_argument("unknown mode '" + text +
                              "' (expected rgb, flow, two_in_one, two_stream, "
                              "two_in_one_two_stream)");
}

namespace {

bool has_appearance(DetectorMode m) { return m != DetectorMode::kFlow; }
bool has_motion(DetectorMode m) {
  return m == DetectorMode::kFlow || m == DetectorMode::kTwoStream ||
         m == DetectorMode::kTwoInOneTwoStream;
}
StreamKind appearance_kind(DetectorMode m) {
  return m == DetectorMode::kTwoInOne || m == DetectorMode::kTwoInOneTwoStream
             ? StreamKind::kTwoInOne
             : StreamKind::kRgb;
}

}  // namespace

ActionDetector::ActionDetector(DetectorMode mode, const DetectorConfig& cfg,
                               const ConditionConfig& condition, uint64_t seed)
    : mode_(mode) {
  if (has_appearance(mode)) {
    appearance_ = std::make_shared<DetectorNetwork>(appearance_kind(mode), cfg, condition,
                                                    seed, "appearance");
  }
  if (has_motion(mode)) {
    motion_ = std::make_shared<DetectorNetwork>(StreamKind::kFlow, cfg, condition,
                                                derive_seed(seed, 17), "motion");
  }
}

ActionDetector::ActionDetector(DetectorMode mode, std::shared_ptr<DetectorNetwork> appearance,
                               std::shared_ptr<DetectorNetwork> motion)
    : mode_(mode), appearance_(std::move(appearance)), motion_(std::move(motion)) {
  if (has_appearance(mode) != static_cast<bool>(appearance_) ||
      has_motion(mode) != static_cast<bool>(motion_)) {
    throw std::invalid_argument("streams do not match mode " + mode_name(mode));
  }
  if (appearance_ && appearance_->kind() != appearance_kind(mode)) {
    throw std::invalid_argument("appearance stream is " + stream_kind_name(appearance_->kind()) +
                                ", mode " + mode_name(mode) + " needs " +
                                stream_kind_name(appearance_kind(mode)));
  }
  if (motion_ && motion_->kind() != StreamKind::kFlow) {
    throw std::invalid_argument("motion stream must be a flow network");
  }
  if (appearance_ && motion_ &&
      (appearance_->anchors().boxes.size() != motion_->anchors().boxes.size() ||
       appearance_->config().tubelet_len != motion_->config().tubelet_len)) {
    throw std::invalid_argument("fused streams disagree on anchors or tubelet length");
  }
}

const DetectorConfig& ActionDetector::config() const {
  return appearance_ ? appearance_->config() : motion_->config();
}

const AnchorSet& ActionDetector::anchors() const {
  return appearance_ ? appearance_->anchors() : motion_->anchors();
}

std::vector<std::shared_ptr<DetectorNetwork>> ActionDetector::streams() const {
  std::vector<std::shared_ptr<DetectorNetwork>> out;
  if (appearance_) out.push_back(appearance_);
  if (motion_) out.push_back(motion_);
  return out;
}

int64_t ActionDetector::parameter_count() const {
  int64_t n = 0;
  for (const auto& s : streams()) n += s->parameter_count();
  return n;
}

ScoredAnchors ActionDetector::score(std::span<const FrameInput> frames) const {
  if (appearance_ && motion_) {
    return fuse_two_stream(score_outputs(appearance_->forward(frames)),
                           score_outputs(motion_->forward(frames)));
  }
  return score_outputs(streams().front()->forward(frames));
}

std::vector<NamedTensor> ActionDetector::snapshot() const {
  std::vector<NamedTensor> out;
  for (const auto& s : streams()) {
    auto part = mcm::snapshot(s->parameters());
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void ActionDetector::assign(const std::vector<NamedTensor>& values) {
  size_t used = 0;
  for (const auto& s : streams()) {
    std::vector<NamedTensor> mine;
    for (const auto& v : values) {
      if (s->parameters().find(v.name)) mine.push_back(v);
    }
    assign_parameters(mine, s->parameters());
    used += mine.size();
  }
  if (used != values.size()) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(values.size() - used) +
                                " parameters this " + mode_name(mode_) + " detector lacks");
  }
}

void ActionDetector::save(const std::filesystem::path& path) const {
  const auto bytes = encode_checkpoint(snapshot());
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  if (std::fclose(f) != 0 || n != bytes.size()) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

void ActionDetector::load(const std::filesystem::path& path) {
  const auto values = read_checkpoint(path);
  try {
    assign(values);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string format_detection_record(const std::string& video_id, const TubeletDetection& d) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %d %d %.9g", video_id.c_str(), d.start_frame, d.class_id,
                d.score);
  std::string out = buf;
  for (const Box& b : d.boxes) {
    std::snprintf(buf, sizeof buf, " %.9g %.9g %.9g %.9g", b.x_min, b.y_min, b.x_max, b.y_max);
    out += buf;
  }
  return out;
}

std::pair<std::string, TubeletDetection> parse_detection_record(const std::string& line) {
  std::istringstream in(line);
  std::pair<std::string, TubeletDetection> out;
  TubeletDetection& d = out.second;
  if (!(in >> out.first >> d.start_frame >> d.class_id >> d.score)) {
    throw std::invalid_argument("detection record: expected 'video frame class score x0 y0 x1 y1'");
  }
  std::vector<double> coords;
  std::string tok;
  while (in >> tok) {
    try {
      size_t used = 0;
      coords.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("detection record: bad number '" + tok + "'");
    }
  }
  if (coords.empty() || coords.size() % 4 != 0) {
    throw std::invalid_argument("detection record: box coordinates must come in groups of 4");
  }
  for (size_t i = 0; i < coords.size(); i += 4) {
    d.boxes.push_back({coords[i], coords[i + 1], coords[i + 2], coords[i + 3]});
    if (!d.boxes.back().valid()) throw std::invalid_argument("detection record: degenerate box");
  }
  return out;
}

}  // namespace mcm
