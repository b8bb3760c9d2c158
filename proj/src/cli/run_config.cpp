#include "mcm/cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mcm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("'" + s + "' is not a valid number");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("'" + s + "' is not a boolean (true|false)");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Field builders over an accessor returning a mutable reference; getters
// only read through it.
template <typename Access>
Field int_field(std::string key, Access at) {
  return {std::move(key), [at](const RunConfig& c) { return std::to_string(at(const_cast<RunConfig&>(c))); },
          [at](RunConfig& c, const std::string& v) { at(c) = parse_number<int>(v); }};
}

template <typename Access>
Field u64_field(std::string key, Access at) {
  return {std::move(key), [at](const RunConfig& c) { return std::to_string(at(const_cast<RunConfig&>(c))); },
          [at](RunConfig& c, const std::string& v) { at(c) = parse_number<uint64_t>(v); }};
}

template <typename Access>
Field double_field(std::string key, Access at) {
  return {std::move(key), [at](const RunConfig& c) { return fmt_double(at(const_cast<RunConfig&>(c))); },
          [at](RunConfig& c, const std::string& v) { at(c) = parse_number<double>(v); }};
}

template <typename Access>
Field bool_field(std::string key, Access at) {
  return {std::move(key),
          [at](const RunConfig& c) { return std::string(at(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [at](RunConfig& c, const std::string& v) { at(c) = parse_bool(v); }};
}

template <typename Access>
Field string_field(std::string key, Access at) {
  return {std::move(key), [at](const RunConfig& c) { return at(const_cast<RunConfig&>(c)); },
          [at](RunConfig& c, const std::string& v) { at(c) = v; }};
}

template <typename Access>
Field int_list_field(std::string key, Access at) {
  return {std::move(key),
          [at](const RunConfig& c) {
            std::vector<std::string> parts;
            for (int v : at(const_cast<RunConfig&>(c))) parts.push_back(std::to_string(v));
            return join(parts);
          },
          [at](RunConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& p : split_list(v)) out.push_back(parse_number<int>(p));
            at(c) = out;
          }};
}

template <typename Access>
Field double_list_field(std::string key, Access at) {
  return {std::move(key),
          [at](const RunConfig& c) {
            std::vector<std::string> parts;
            for (double v : at(const_cast<RunConfig&>(c))) parts.push_back(fmt_double(v));
            return join(parts);
          },
          [at](RunConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& p : split_list(v)) out.push_back(parse_number<double>(p));
            at(c) = out;
          }};
}

#define AT(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(u64_field("seed", AT(seed)));
    f.push_back({"mode", [](const RunConfig& c) { return mode_name(c.mode); },
                 [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); }});

    f.push_back(int_list_field("condition.channels", AT(condition.channels)));
    f.push_back({"condition.last_kernel",
                 [](const RunConfig& c) { return last_kernel_name(c.condition.last_kernel); },
                 [](RunConfig& c, const std::string& v) {
                   c.condition.last_kernel = parse_last_kernel(v);
                 }});
    f.push_back({"condition.sites",
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (Site s : c.condition.modulate_at) parts.push_back(site_name(s));
                   return join(parts);
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::vector<Site> out;
                   for (const auto& p : split_list(v)) out.push_back(parse_site(p));
                   c.condition.modulate_at = out;
                 }});
    f.push_back(double_field("condition.flow_scale", AT(condition.flow_scale)));

    f.push_back(int_list_field("detector.widths", AT(detector.widths)));
    f.push_back(double_list_field("detector.anchor_scales", AT(detector.anchor_scales)));
    f.push_back(int_field("detector.tubelet_len", AT(detector.tubelet_len)));
    f.push_back(int_field("detector.head_kernel", AT(detector.head_kernel)));
    f.push_back(double_field("detector.pos_iou", AT(detector.pos_iou)));
    f.push_back(int_field("detector.neg_ratio", AT(detector.neg_ratio)));
    f.push_back(double_field("detect.conf_thresh", AT(detect.conf_thresh)));
    f.push_back(double_field("detect.nms_iou", AT(detect.nms_iou)));
    f.push_back(int_field("detect.top_k", AT(detect.top_k)));

    f.push_back(double_field("link.lambda_iou", AT(link.lambda_iou)));
    f.push_back(int_field("link.gap_max", AT(link.gap_max)));
    f.push_back(int_field("link.min_length", AT(link.min_length)));

    f.push_back(u64_field("data.texture_seed", AT(data.texture_seed)));
    f.push_back(int_field("data.num_train", AT(data.num_train)));
    f.push_back(int_field("data.num_test", AT(data.num_test)));
    f.push_back(int_field("data.frames_per_video", AT(data.frames_per_video)));
    f.push_back(int_field("data.resolution", AT(data.resolution)));
    f.push_back({"data.classes",
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (auto p : c.data.classes) parts.push_back(motion_pattern_name(p));
                   return join(parts);
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::vector<MotionPattern> out;
                   for (const auto& p : split_list(v)) out.push_back(parse_motion_pattern(p));
                   c.data.classes = out;
                 }});
    f.push_back(bool_field("data.camouflage", AT(data.camouflage)));
    f.push_back(double_field("data.noise_level", AT(data.noise_level)));
    f.push_back(int_field("data.sprite_min", AT(data.sprite_min)));
    f.push_back(int_field("data.sprite_max", AT(data.sprite_max)));
    f.push_back(double_field("data.speed", AT(data.speed)));
    f.push_back(int_field("data.drift", AT(data.drift)));
    f.push_back({"data.flow_quality",
                 [](const RunConfig& c) { return flow_quality_name(c.data.flow_quality); },
                 [](RunConfig& c, const std::string& v) {
                   c.data.flow_quality = parse_flow_quality(v);
                 }});

    f.push_back(double_field("train.lr", AT(train.lr)));
    f.push_back(double_field("train.momentum", AT(train.momentum)));
    f.push_back(int_field("train.epochs", AT(train.epochs)));
    f.push_back(int_field("train.decay_every", AT(train.decay_every)));
    f.push_back(double_field("train.decay_factor", AT(train.decay_factor)));
    f.push_back(int_field("train.batch_size", AT(train.batch_size)));
    f.push_back(int_field("train.windows_per_video", AT(train.windows_per_video)));

    f.push_back(string_field("paths.data", AT(paths.data)));
    f.push_back(string_field("paths.checkpoint", AT(paths.checkpoint)));
    f.push_back(string_field("paths.training_log", AT(paths.training_log)));
    f.push_back(string_field("paths.detections", AT(paths.detections)));
    f.push_back(string_field("paths.tubes", AT(paths.tubes)));
    f.push_back(string_field("paths.metrics", AT(paths.metrics)));
    f.push_back(string_field("paths.ablation", AT(paths.ablation)));
    return f;
  }();
  return table;
}

#undef AT

bool has_prefix(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

std::string hash_keys(const RunConfig& cfg, const std::function<bool(const std::string&)>& keep) {
  std::string text;
  for (const Field& f : fields()) {
    if (keep(f.key)) text += f.key + "=" + f.get(cfg) + "\n";
  }
  return fnv1a_hex(text);
}

}  // namespace

GenConfig RunConfig::gen_config() const {
  GenConfig g = data;
  g.seed = seed;
  return g;
}

TrainSchedule RunConfig::schedule() const {
  TrainSchedule s = train;
  s.seed = seed;
  return s;
}

DetectorConfig RunConfig::detector_config() const {
  DetectorConfig d = detector;
  d.num_classes = static_cast<int>(data.classes.size());
  d.image_size = data.resolution;
  return d;
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, const std::function<void()>& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(section) + ": " + e.what());
    }
  };
  wrap("condition", [&] { condition.validate(); });
  wrap("detector", [&] { detector_config().validate(); });
  wrap("data", [&] { gen_config().validate(detector.tubelet_len); });
  wrap("train", [&] { schedule().validate(); });
  if (!(detect.conf_thresh >= 0.0 && detect.conf_thresh < 1.0)) {
    throw std::invalid_argument("detect.conf_thresh must lie in [0, 1)");
  }
  if (!(detect.nms_iou > 0.0 && detect.nms_iou <= 1.0)) {
    throw std::invalid_argument("detect.nms_iou must lie in (0, 1]");
  }
  if (detect.top_k < 1) throw std::invalid_argument("detect.top_k must be positive");
  if (!(link.lambda_iou >= 0.0)) throw std::invalid_argument("link.lambda_iou must be >= 0");
  if (link.gap_max < 1) throw std::invalid_argument("link.gap_max must be >= 1");
  if (link.min_length < 1) throw std::invalid_argument("link.min_length must be >= 1");
}

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw std::invalid_argument(where + "duplicate key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string data_hash(const RunConfig& cfg) {
  return hash_keys(cfg, [](const std::string& k) {
    return k == "seed" || (has_prefix(k, "data.") && k != "data.flow_quality");
  });
}

std::string model_hash(const RunConfig& cfg) {
  return hash_keys(cfg, [](const std::string& k) {
    return !has_prefix(k, "paths.") && !has_prefix(k, "detect.") && !has_prefix(k, "link.");
  });
}

std::string config_hash(const RunConfig& cfg) {
  return hash_keys(cfg, [](const std::string& k) { return !has_prefix(k, "paths."); });
}

}  // namespace mcm
