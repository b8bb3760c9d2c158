#include "mcm/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mcm/numerics/random.hpp"

namespace mcm {

namespace fs = std::filesystem;

std::string motion_pattern_name(MotionPattern p) {
  switch (p) {
    case MotionPattern::kMoveUp: return "move_up";
    case MotionPattern::kMoveDown: return "move_down";
    case MotionPattern::kOscillateHorizontal: return "oscillate_horizontal";
    case MotionPattern::kDiagonal: return "diagonal";
  }
  return "?";
}

MotionPattern parse_motion_pattern(const std::string& name) {
  for (auto p : {MotionPattern::kMoveUp, MotionPattern::kMoveDown,
                 MotionPattern::kOscillateHorizontal, MotionPattern::kDiagonal}) {
    if (motion_pattern_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown motion class '" + name +
                              "' (expected move_up, move_down, oscillate_horizontal, diagonal)");
}

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<std::string> class_names(const GenConfig& cfg) {
  std::vector<std::string> out;
  for (auto p : cfg.classes) out.push_back(motion_pattern_name(p));
  return out;
}

namespace {

// Sprite offset from its start position at frame t.
struct Offset {
  double dx = 0, dy = 0;
};

std::vector<Offset> trajectory(MotionPattern p, int frames, double speed, int sx, int sy) {
  std::vector<Offset> out(frames);
  const double amp = 3.0 * speed;
  for (int t = 0; t < frames; ++t) {
    const double s = speed * t;
    switch (p) {
      case MotionPattern::kMoveUp: out[t] = {0, -s}; break;
      case MotionPattern::kMoveDown: out[t] = {0, s}; break;
      case MotionPattern::kDiagonal: out[t] = {sx * s, sy * s}; break;
      case MotionPattern::kOscillateHorizontal: {
        const double ph = std::fmod(s, 4.0 * amp);
        double d = ph;
        if (ph > amp) d = 2.0 * amp - ph;
        if (ph > 3.0 * amp) d = ph - 4.0 * amp;
        out[t] = {sx * d, 0};
        break;
      }
    }
  }
  return out;
}

// Smoothed uniform noise, 3 channels interleaved, rescaled per channel to
// mean 0.5 and standard deviation 0.18.
std::vector<double> smooth_noise(int h, int w, Rng& rng) {
  std::vector<double> img(static_cast<size_t>(h) * w * 3);
  for (auto& v : img) v = rng.uniform();
  std::vector<double> tmp(img.size());
  const int r = 2;
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0;
          for (int k = -r; k <= r; ++k) {
            const int xx = std::clamp(x + k, 0, w - 1);
            acc += img[(static_cast<size_t>(y) * w + xx) * 3 + c];
          }
          tmp[(static_cast<size_t>(y) * w + x) * 3 + c] = acc / (2 * r + 1);
        }
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0;
          for (int k = -r; k <= r; ++k) {
            const int yy = std::clamp(y + k, 0, h - 1);
            acc += tmp[(static_cast<size_t>(yy) * w + x) * 3 + c];
          }
          img[(static_cast<size_t>(y) * w + x) * 3 + c] = acc / (2 * r + 1);
        }
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    const double n = static_cast<double>(h) * w;
    for (size_t i = c; i < img.size(); i += 3) mean += img[i];
    mean /= n;
    for (size_t i = c; i < img.size(); i += 3) sq += (img[i] - mean) * (img[i] - mean);
    const double sd = std::sqrt(sq / n);
    for (size_t i = c; i < img.size(); i += 3) {
      img[i] = 0.5 + 0.18 * (sd > 0 ? (img[i] - mean) / sd : 0.0);
    }
  }
  return img;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

}  // namespace

void GenConfig::validate(int tubelet_len) const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("gen config: " + msg); };
  if (num_train < 0 || num_test < 0) fail("num_train and num_test must be >= 0");
  if (frames_per_video < std::max(1, tubelet_len)) {
    fail("frames_per_video (" + std::to_string(frames_per_video) + ") must be >= tubelet_len (" +
         std::to_string(tubelet_len) + ")");
  }
  if (resolution < 8) fail("resolution must be >= 8");
  if (classes.size() < 2) fail("at least 2 classes are required");
  for (size_t i = 0; i < classes.size(); ++i) {
    for (size_t j = i + 1; j < classes.size(); ++j) {
      if (classes[i] == classes[j]) fail("duplicate class " + motion_pattern_name(classes[i]));
    }
  }
  if (sprite_min < 1 || sprite_max < sprite_min) fail("need 1 <= sprite_min <= sprite_max");
  if (!(speed >= 0.0) || !(noise_level >= 0.0)) fail("speed and noise_level must be >= 0");
  for (auto p : classes) {
    const auto traj = trajectory(p, frames_per_video, speed, 1, 1);
    double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    for (const auto& o : traj) {
      lo_x = std::min(lo_x, std::round(o.dx));
      hi_x = std::max(hi_x, std::round(o.dx));
      lo_y = std::min(lo_y, std::round(o.dy));
      hi_y = std::max(hi_y, std::round(o.dy));
    }
    if (sprite_max + (hi_x - lo_x) > resolution || sprite_max + (hi_y - lo_y) > resolution) {
      fail("sprite (max " + std::to_string(sprite_max) + " px) and its " +
           motion_pattern_name(p) + " path do not fit in a " + std::to_string(resolution) +
           " px frame");
    }
  }
}

VideoSample generate_video(const GenConfig& cfg, int index) {
  const int n = cfg.resolution;
  const int frames = cfg.frames_per_video;
  const bool train = index < cfg.num_train;
  const int split_index = train ? index : index - cfg.num_train;
  const int cls = split_index % static_cast<int>(cfg.classes.size());

  Rng motion(derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(index)));
  Rng texture(derive_seed(cfg.texture_seed, 1000 + static_cast<uint64_t>(index)));

  const int sw = cfg.sprite_min + static_cast<int>(motion.below(cfg.sprite_max - cfg.sprite_min + 1));
  const int sh = cfg.sprite_min + static_cast<int>(motion.below(cfg.sprite_max - cfg.sprite_min + 1));
  const int sx = motion.below(2) ? 1 : -1;
  const int sy = motion.below(2) ? 1 : -1;
  const auto traj = trajectory(cfg.classes[cls], frames, cfg.speed, sx, sy);
  int lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  std::vector<std::pair<int, int>> offsets;
  for (const auto& o : traj) {
    const int dx = static_cast<int>(std::lround(o.dx)), dy = static_cast<int>(std::lround(o.dy));
    offsets.push_back({dx, dy});
    lo_x = std::min(lo_x, dx);
    hi_x = std::max(hi_x, dx);
    lo_y = std::min(lo_y, dy);
    hi_y = std::max(hi_y, dy);
  }
  const int x0 = -lo_x + static_cast<int>(motion.below(n - sw - (hi_x - lo_x) + 1));
  const int y0 = -lo_y + static_cast<int>(motion.below(n - sh - (hi_y - lo_y) + 1));

  const auto background = smooth_noise(n, n, texture);
  std::vector<double> sprite = smooth_noise(sh, sw, texture);
  if (!cfg.camouflage) {
    double tint[3];
    for (double& t : tint) t = texture.uniform(0.6, 1.0);
    tint[texture.below(3)] = 0.1;
    for (size_t i = 0; i < sprite.size(); ++i) {
      sprite[i] = tint[i % 3] + 0.3 * (sprite[i] - 0.5);
    }
  }

  VideoSample sample;
  sample.split = train ? Split::kTrain : Split::kTest;
  char id[32];
  std::snprintf(id, sizeof id, "%s_%03d", train ? "train" : "test", split_index);
  sample.video_id = id;
  GroundTruthTube tube{sample.video_id, cls + 1, {}};

  for (int t = 0; t < frames; ++t) {
    Frame f(n, n);
    const int shift = cfg.drift * t;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const size_t b = (static_cast<size_t>(y) * n + wrap(x - shift, n)) * 3;
        for (int c = 0; c < 3; ++c) f.at(y, x, c) = background[b + c];
      }
    }
    const int px = x0 + offsets[t].first, py = y0 + offsets[t].second;
    for (int y = 0; y < sh; ++y) {
      for (int x = 0; x < sw; ++x) {
        for (int c = 0; c < 3; ++c) {
          f.at(py + y, px + x, c) = sprite[(static_cast<size_t>(y) * sw + x) * 3 + c];
        }
      }
    }
    if (cfg.noise_level > 0) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          for (int c = 0; c < 3; ++c) f.at(y, x, c) += cfg.noise_level * motion.normal();
        }
      }
    }
    f.clamp();
    sample.frames.push_back(std::move(f));
    tube.boxes.push_back({t, {double(px) / n, double(py) / n, double(px + sw) / n,
                              double(py + sh) / n}});
  }
  sample.gt_tubes.push_back(std::move(tube));
  sample.flows = estimate_video_flow(sample.frames, cfg.flow_quality);
  return sample;
}

std::vector<VideoSample> generate(const GenConfig& cfg) {
  cfg.validate();
  std::vector<VideoSample> out;
  for (int i = 0; i < cfg.num_train + cfg.num_test; ++i) out.push_back(generate_video(cfg, i));
  return out;
}

std::vector<VideoSample> frame_shuffled(const std::vector<VideoSample>& samples,
                                        uint64_t seed, FlowQuality quality) {
  std::vector<VideoSample> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    const VideoSample& src = samples[i];
    Rng rng(derive_seed(seed, i));
    std::vector<int> perm(src.frames.size());
    for (size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<int>(k);
    for (size_t k = perm.size(); k > 1; --k) {
      std::swap(perm[k - 1], perm[rng.below(static_cast<int64_t>(k))]);
    }
    VideoSample s;
    s.video_id = src.video_id;
    s.split = src.split;
    for (int k : perm) s.frames.push_back(src.frames[k]);
    for (const auto& g : src.gt_tubes) {
      GroundTruthTube tube{g.video_id, g.class_id, {}};
      for (size_t t = 0; t < perm.size(); ++t) {
        tube.boxes.push_back({static_cast<int>(t), g.boxes[perm[t]].box});
      }
      s.gt_tubes.push_back(std::move(tube));
    }
    s.flows = estimate_video_flow(s.frames, quality);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string numbered(const char* stem, size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, i, ext);
  return buf;
}

[[noreturn]] void corrupt(const fs::path& path, const std::string& reason) {
  throw std::runtime_error(path.string() + ": " + reason);
}

}  // namespace

void write_dataset(const std::vector<VideoSample>& samples,
                   const std::vector<std::string>& names, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest").string());
  manifest << "mcm-dataset 1\nclasses";
  for (const auto& c : names) manifest << ' ' << c;
  manifest << '\n';
  for (const auto& s : samples) {
    if (s.flows.size() != s.frames.size()) {
      throw std::invalid_argument("video " + s.video_id + ": flow count differs from frame count");
    }
    manifest << "video " << s.video_id << ' ' << split_name(s.split) << ' ' << s.frames.size()
             << '\n';
    const fs::path vdir = dir / s.video_id;
    fs::create_directories(vdir);
    for (size_t t = 0; t < s.frames.size(); ++t) {
      write_ppm(s.frames[t], vdir / numbered("frame", t, "ppm"));
      write_flow(s.flows[t], vdir / numbered("flow", t, "flo"));
    }
    std::ofstream gt(vdir / "gt.txt");
    for (const auto& g : s.gt_tubes) gt << format_tube_record(as_detection(g)) << '\n';
    if (!gt) throw std::runtime_error("failed writing " + (vdir / "gt.txt").string());
  }
  if (!manifest) throw std::runtime_error("failed writing " + (dir / "manifest").string());
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  if (!fs::is_directory(dir)) corrupt(dir, "dataset directory does not exist");
  const fs::path mpath = dir / "manifest";
  if (!fs::exists(mpath)) {
    if (fs::is_empty(dir)) {
      ds.warnings.push_back(dir.string() + ": empty directory, no videos loaded");
      return ds;
    }
    corrupt(mpath, "missing manifest");
  }
  std::ifstream manifest(mpath);
  std::string line;
  if (!std::getline(manifest, line) || line != "mcm-dataset 1") {
    corrupt(mpath, "expected header 'mcm-dataset 1'");
  }
  int line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "classes") {
      std::string c;
      while (in >> c) ds.class_names.push_back(c);
      continue;
    }
    if (kind != "video") corrupt(mpath, "line " + std::to_string(line_no) + ": unknown record '" + kind + "'");
    VideoSample s;
    std::string split;
    long frames = -1;
    if (!(in >> s.video_id >> split >> frames) || frames < 1) {
      corrupt(mpath, "line " + std::to_string(line_no) + ": expected 'video <id> <split> <frames>'");
    }
    try {
      s.split = parse_split(split);
    } catch (const std::invalid_argument& e) {
      corrupt(mpath, "line " + std::to_string(line_no) + ": " + e.what());
    }
    const fs::path vdir = dir / s.video_id;
    for (long t = 0; t < frames; ++t) {
      s.frames.push_back(read_ppm(vdir / numbered("frame", t, "ppm")));
      const fs::path fp = vdir / numbered("flow", t, "flo");
      s.flows.push_back(read_flow(fp));
      if (s.flows.back().height() != s.frames.back().height() ||
          s.flows.back().width() != s.frames.back().width()) {
        corrupt(fp, "flow resolution differs from its frame");
      }
      if (s.frames.back().height() != s.frames.front().height() ||
          s.frames.back().width() != s.frames.front().width()) {
        corrupt(vdir / numbered("frame", t, "ppm"), "frame resolution differs within the video");
      }
    }
    const fs::path gpath = vdir / "gt.txt";
    std::ifstream gt(gpath);
    if (!gt) corrupt(gpath, "cannot open");
    std::string rec;
    int rec_no = 0;
    while (std::getline(gt, rec)) {
      ++rec_no;
      if (rec.empty()) continue;
      ActionTube tube;
      try {
        tube = parse_tube_record(rec);
      } catch (const std::invalid_argument& e) {
        corrupt(gpath, "line " + std::to_string(rec_no) + ": " + e.what());
      }
      for (const auto& tb : tube.boxes) {
        const Box& b = tb.box;
        if (tb.frame_index < 0 || tb.frame_index >= frames || b.x_min < 0 || b.y_min < 0 ||
            b.x_max > 1 || b.y_max > 1 || !b.valid()) {
          corrupt(gpath, "line " + std::to_string(rec_no) + ": box outside the video");
        }
      }
      s.gt_tubes.push_back(to_ground_truth(tube));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mcm
