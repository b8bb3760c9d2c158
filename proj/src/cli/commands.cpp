#include "mcm/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace mcm {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void input_error(const std::string& msg) { throw CommandError(kExitInput, msg); }

void say(const CommandContext& ctx, const std::string& msg) {
  if (ctx.progress) *ctx.progress << msg << '\n' << std::flush;
}

void require_absent(const CommandContext& ctx, const fs::path& p) {
  if (fs::exists(p) && !ctx.force) {
    input_error(p.string() + " already exists; pass --force to replace it");
  }
}

void require_present(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) input_error(p.string() + " not found; " + hint);
}

void check_hash(const CommandContext& ctx, const fs::path& artifact, const std::string& what,
                const std::string& recorded, const std::string& expected) {
  if (ctx.ignore_hash || recorded == expected) return;
  input_error(artifact.string() + " was produced under a different " + what +
              " configuration (" + recorded + ", config gives " + expected +
              "); regenerate it or pass --ignore-hash");
}

ArtifactMeta meta_for(const CommandContext& ctx, const std::string& kind) {
  const RunConfig& c = ctx.config;
  return {kind,          data_hash(c),
          model_hash(c), config_hash(c),
          flow_quality_name(c.data.flow_quality), c.seed};
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) input_error(p.string() + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

// Writes via a temporary file so a failed command leaves no half artifact.
void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw CommandError(kExitRuntime, "failed writing " + tmp.string());
  }
  fs::rename(tmp, p);
}

Dataset load_dataset(const CommandContext& ctx, bool need_flows) {
  const fs::path dir = ctx.resolve(ctx.config.paths.data);
  require_present(dir, "run gen-data first");
  const ArtifactMeta meta = read_meta(dir);
  check_hash(ctx, dir, "data", meta.data_hash, data_hash(ctx.config));
  const std::string want = flow_quality_name(ctx.config.data.flow_quality);
  if (need_flows && !ctx.ignore_hash && meta.flow_quality != want) {
    input_error(dir.string() + " holds " + meta.flow_quality + " flows but the config asks for " +
                want + "; run compute-flow --force");
  }
  Dataset ds;
  try {
    ds = read_dataset(dir);
  } catch (const std::exception& e) {
    input_error(e.what());
  }
  for (const auto& w : ds.warnings) say(ctx, "warning: " + w);
  return ds;
}

std::vector<VideoSample> split_of(const Dataset& ds, Split split) {
  std::vector<VideoSample> out;
  for (const auto& s : ds.samples)
    if (s.split == split) out.push_back(s);
  return out;
}

std::vector<PreparedVideo> prepare(const CommandContext& ctx, const std::vector<VideoSample>& s,
                                   const ActionDetector& det) {
  try {
    return prepare_videos(s, det.anchors(), det.config(), ctx.config.condition.flow_scale);
  } catch (const std::invalid_argument& e) {
    input_error(std::string("dataset does not fit the detector: ") + e.what());
  }
}

ActionDetector make_detector(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  return ActionDetector(c.mode, c.detector_config(), c.condition, c.seed);
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string metrics_csv(const MapReport& report, const std::vector<std::string>& names) {
  std::string out = "threshold,video_map";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (const auto& [label, ap] : report.rows) {
    out += label + "," + fmt(ap.mean, 9);
    for (size_t c = 0; c < names.size(); ++c) {
      const auto it = ap.per_class.find(static_cast<int>(c) + 1);
      out += "," + (it == ap.per_class.end() ? std::string("") : fmt(it->second, 9));
    }
    out += "\n";
  }
  return out;
}

std::string metrics_summary(const MapReport& report) {
  std::string out = "video mAP\n";
  for (const auto& [label, ap] : report.rows) {
    char line[64];
    std::snprintf(line, sizeof line, "  @%-10s %6.2f\n", label.c_str(), 100.0 * ap.mean);
    out += line;
  }
  return out;
}

fs::path with_extension(fs::path p, const std::string& ext) { return p.replace_extension(ext); }

}  // namespace

fs::path CommandContext::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : out_dir / p;
}

fs::path meta_path(const fs::path& artifact) {
  fs::path p = artifact;
  if (!p.has_filename()) p = p.parent_path();
  return p.string() + ".meta";
}

void write_meta(const fs::path& artifact, const ArtifactMeta& m) {
  std::ostringstream os;
  os << "kind=" << m.kind << "\ndata_hash=" << m.data_hash << "\nmodel_hash=" << m.model_hash
     << "\nconfig_hash=" << m.config_hash << "\nflow_quality=" << m.flow_quality
     << "\nseed=" << m.seed << "\n";
  write_text(meta_path(artifact), os.str());
}

ArtifactMeta read_meta(const fs::path& artifact) {
  const fs::path p = meta_path(artifact);
  if (!fs::exists(p)) input_error(p.string() + " not found; the artifact has no provenance record");
  ArtifactMeta m;
  for (const auto& line : read_lines(p)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) input_error(p.string() + ": malformed line '" + line + "'");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "kind") m.kind = v;
    else if (k == "data_hash") m.data_hash = v;
    else if (k == "model_hash") m.model_hash = v;
    else if (k == "config_hash") m.config_hash = v;
    else if (k == "flow_quality") m.flow_quality = v;
    else if (k == "seed") m.seed = std::stoull(v);
    else input_error(p.string() + ": unknown key '" + k + "'");
  }
  return m;
}

void cmd_gen_data(const CommandContext& ctx) {
  const fs::path dir = ctx.resolve(ctx.config.paths.data);
  require_absent(ctx, dir);
  const GenConfig g = ctx.config.gen_config();
  say(ctx, "generating " + std::to_string(g.num_train) + "+" + std::to_string(g.num_test) +
               " videos into " + dir.string());
  const auto samples = generate(g);
  fs::remove_all(dir);
  fs::remove(meta_path(dir));
  write_dataset(samples, class_names(g), dir);
  write_meta(dir, meta_for(ctx, "dataset"));
}

void cmd_compute_flow(const CommandContext& ctx) {
  const fs::path dir = ctx.resolve(ctx.config.paths.data);
  require_present(dir, "run gen-data first");
  ArtifactMeta meta = read_meta(dir);
  check_hash(ctx, dir, "data", meta.data_hash, data_hash(ctx.config));
  const FlowQuality q = ctx.config.data.flow_quality;
  if (meta.flow_quality == flow_quality_name(q)) {
    say(ctx, dir.string() + " already holds " + meta.flow_quality + " flows");
    return;
  }
  if (!ctx.force) {
    input_error(dir.string() + " holds " + meta.flow_quality +
                " flows; pass --force to replace them with " + flow_quality_name(q));
  }
  Dataset ds;
  try {
    ds = read_dataset(dir);
  } catch (const std::exception& e) {
    input_error(e.what());
  }
  say(ctx, "computing " + flow_quality_name(q) + " flow for " +
               std::to_string(ds.samples.size()) + " videos");
  for (auto& s : ds.samples) s.flows = estimate_video_flow(s.frames, q);
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  write_dataset(ds.samples, ds.class_names, tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
  meta.flow_quality = flow_quality_name(q);
  meta.config_hash = config_hash(ctx.config);
  write_meta(dir, meta);
}

void cmd_train(const CommandContext& ctx) {
  const fs::path ckpt = ctx.resolve(ctx.config.paths.checkpoint);
  const fs::path log_path = ctx.resolve(ctx.config.paths.training_log);
  require_absent(ctx, ckpt);
  const Dataset ds = load_dataset(ctx, true);
  const auto samples = split_of(ds, Split::kTrain);
  if (samples.empty()) input_error("dataset has no training videos");
  ActionDetector det = make_detector(ctx);
  const auto videos = prepare(ctx, samples, det);
  say(ctx, "training " + mode_name(det.mode()) + " (" + std::to_string(det.parameter_count()) +
               " parameters) on " + std::to_string(videos.size()) + " videos");

  std::string log = "epoch,lr,mean_loss\n";
  auto on_epoch = [&](const EpochLog& e) {
    log += std::to_string(e.epoch) + "," + fmt(e.lr, 9) + "," + fmt(e.mean_loss, 9) + "\n";
    say(ctx, "  epoch " + std::to_string(e.epoch) + " loss " + fmt(e.mean_loss, 4));
  };
  try {
    train(det, videos, ctx.config.schedule(), {}, on_epoch);
  } catch (const TrainingDiverged& e) {
    write_text(log_path, log);
    throw CommandError(kExitRuntime, std::string(e.what()) + "; lower train.lr");
  }
  write_text(log_path, log);
  det.save(ckpt);
  write_meta(ckpt, meta_for(ctx, "checkpoint"));
}

void cmd_detect(const CommandContext& ctx) {
  const fs::path ckpt = ctx.resolve(ctx.config.paths.checkpoint);
  const fs::path out = ctx.resolve(ctx.config.paths.detections);
  require_absent(ctx, out);
  require_present(ckpt, "run train first");
  check_hash(ctx, ckpt, "model", read_meta(ckpt).model_hash, model_hash(ctx.config));
  ActionDetector det = make_detector(ctx);
  try {
    det.load(ckpt);
  } catch (const std::exception& e) {
    input_error(e.what());
  }
  const Dataset ds = load_dataset(ctx, true);
  const auto videos = prepare(ctx, split_of(ds, Split::kTest), det);
  say(ctx, "detecting on " + std::to_string(videos.size()) + " test videos");
  std::string text;
  for (const auto& vd : detect_videos(det, videos, ctx.config.detect)) {
    for (const auto& d : vd.tubelets) text += format_detection_record(vd.video_id, d) + "\n";
  }
  write_text(out, text);
  write_meta(out, meta_for(ctx, "detections"));
}

void cmd_link(const CommandContext& ctx) {
  const fs::path in = ctx.resolve(ctx.config.paths.detections);
  const fs::path out = ctx.resolve(ctx.config.paths.tubes);
  require_absent(ctx, out);
  require_present(in, "run detect first");
  check_hash(ctx, in, "model", read_meta(in).model_hash, model_hash(ctx.config));
  std::vector<VideoDetections> dets;
  std::map<std::string, size_t> index;
  int lineno = 0;
  for (const auto& line : read_lines(in)) {
    ++lineno;
    std::pair<std::string, TubeletDetection> rec;
    try {
      rec = parse_detection_record(line);
    } catch (const std::invalid_argument& e) {
      input_error(in.string() + ": record " + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, fresh] = index.emplace(rec.first, dets.size());
    if (fresh) dets.push_back({rec.first, {}});
    dets[it->second].tubelets.push_back(rec.second);
  }
  const int classes = static_cast<int>(ctx.config.data.classes.size());
  std::string text;
  for (const auto& t : link_videos(dets, classes, ctx.config.link)) {
    text += format_tube_record(t) + "\n";
  }
  write_text(out, text);
  write_meta(out, meta_for(ctx, "tubes"));
}

void cmd_eval(const CommandContext& ctx) {
  const fs::path in = ctx.resolve(ctx.config.paths.tubes);
  const fs::path out = ctx.resolve(ctx.config.paths.metrics);
  require_absent(ctx, out);
  require_present(in, "run link first");
  const ArtifactMeta meta = read_meta(in);
  check_hash(ctx, in, "model", meta.model_hash, model_hash(ctx.config));
  check_hash(ctx, in, "data", meta.data_hash, data_hash(ctx.config));
  std::vector<ActionTube> tubes;
  int lineno = 0;
  for (const auto& line : read_lines(in)) {
    ++lineno;
    try {
      tubes.push_back(parse_tube_record(line));
    } catch (const std::invalid_argument& e) {
      input_error(in.string() + ": record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  const Dataset ds = load_dataset(ctx, false);
  std::vector<GroundTruthTube> gt;
  for (const auto& s : split_of(ds, Split::kTest))
    for (const auto& g : s.gt_tubes) gt.push_back(g);
  if (gt.empty()) input_error("dataset has no test ground truth");
  const MapReport report = video_map(tubes, gt);
  write_text(out, metrics_csv(report, ds.class_names));
  write_text(with_extension(out, ".txt"), metrics_summary(report));
  write_meta(out, meta_for(ctx, "metrics"));
  say(ctx, metrics_summary(report));
}

std::string ablation_axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kSite: return "site";
    case AblationAxis::kKernel: return "kernel";
    case AblationAxis::kFlowQuality: return "flow_quality";
    case AblationAxis::kMode: return "mode";
  }
  return "?";
}

AblationAxis parse_ablation_axis(const std::string& text) {
  for (auto a : {AblationAxis::kSite, AblationAxis::kKernel, AblationAxis::kFlowQuality,
                 AblationAxis::kMode}) {
    if (ablation_axis_name(a) == text) return a;
  }
  throw std::invalid_argument("unknown ablation axis '" + text +
                              "' (site|kernel|flow_quality|mode)");
}

namespace {

struct AblationRun {
  std::string value;
  RunConfig config;
};

std::vector<AblationRun> ablation_runs(const RunConfig& base, AblationAxis axis) {
  std::vector<AblationRun> runs;
  RunConfig c = base;
  switch (axis) {
    case AblationAxis::kSite:
      c.mode = DetectorMode::kTwoInOne;
      for (Site s : {Site::kConv1, Site::kConv2, Site::kConv3, Site::kConv4}) {
        c.condition.modulate_at = {s};
        runs.push_back({site_name(s), c});
      }
      break;
    case AblationAxis::kKernel:
      c.mode = DetectorMode::kTwoInOne;
      for (LastKernel k : {LastKernel::k1x1, LastKernel::k3x3}) {
        c.condition.last_kernel = k;
        runs.push_back({last_kernel_name(k), c});
      }
      break;
    case AblationAxis::kFlowQuality:
      c.mode = DetectorMode::kTwoInOne;
      for (FlowQuality q : {FlowQuality::kFast, FlowQuality::kIterative}) {
        c.data.flow_quality = q;
        runs.push_back({flow_quality_name(q), c});
      }
      break;
    case AblationAxis::kMode:
      for (DetectorMode m : all_modes()) {
        c.mode = m;
        runs.push_back({mode_name(m), c});
      }
      break;
  }
  return runs;
}

AblationRow evaluate_row(const std::string& value, const ActionDetector& det,
                         const std::vector<PreparedVideo>& test, const RunConfig& c) {
  const EvalResult r = evaluate(det, test, c.detect, c.link);
  return {value, r.report.at("0.50"), r.report.at("0.50:0.95"), det.parameter_count(),
          r.seconds_per_frame};
}

}  // namespace

std::vector<AblationRow> cmd_ablate(const CommandContext& ctx, AblationAxis axis) {
  const std::string stem = ctx.config.paths.ablation + "_" + ablation_axis_name(axis);
  const fs::path csv_path = ctx.resolve(stem + ".csv");
  const fs::path txt_path = ctx.resolve(stem + ".txt");
  require_absent(ctx, csv_path);
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw CommandError(kExitRuntime, "cannot write " + csv_path.string());
  csv << ablation_axis_name(axis) << ",map50,map50_95,parameters,seconds_per_frame\n"
      << std::flush;

  std::vector<AblationRow> rows;
  auto emit = [&](const AblationRow& row) {
    csv << row.value << ',' << fmt(row.map50, 9) << ',' << fmt(row.map_coco, 9) << ','
        << row.parameters << ',' << fmt(row.seconds_per_frame, 6) << '\n'
        << std::flush;
    rows.push_back(row);
    say(ctx, "  " + row.value + ": mAP@0.5 " + fmt(100 * row.map50, 2));
  };

  // Videos per flow quality, generated once.
  std::map<FlowQuality, std::vector<VideoSample>> data;
  auto samples_for = [&](const RunConfig& c) -> const std::vector<VideoSample>& {
    auto it = data.find(c.data.flow_quality);
    if (it == data.end()) it = data.emplace(c.data.flow_quality, generate(c.gen_config())).first;
    return it->second;
  };
  auto split = [](const std::vector<VideoSample>& all, Split s) {
    std::vector<VideoSample> out;
    for (const auto& v : all)
      if (v.split == s) out.push_back(v);
    return out;
  };

  // Two-stream detectors are assembled from the single-stream runs: each
  // stream trains on its own loss over the same sampled windows, so the
  // result is identical to training them together.
  std::map<DetectorMode, ActionDetector> trained;
  try {
    for (const AblationRun& run : ablation_runs(ctx.config, axis)) {
      const RunConfig& c = run.config;
      c.validate();
      say(ctx, "ablation " + ablation_axis_name(axis) + "=" + run.value);
      const auto& all = samples_for(c);
      const DetectorConfig dc = c.detector_config();
      const AnchorSet anchors = ActionDetector(DetectorMode::kRgb, dc, c.condition, c.seed).anchors();
      const auto test = prepare_videos(split(all, Split::kTest), anchors, dc, c.condition.flow_scale);

      const bool fused = c.mode == DetectorMode::kTwoStream ||
                         c.mode == DetectorMode::kTwoInOneTwoStream;
      if (fused) {
        const DetectorMode app = c.mode == DetectorMode::kTwoStream ? DetectorMode::kRgb
                                                                    : DetectorMode::kTwoInOne;
        const ActionDetector& a = trained.at(app);
        const ActionDetector& m = trained.at(DetectorMode::kFlow);
        emit(evaluate_row(run.value, ActionDetector(c.mode, a.appearance(), m.motion()), test, c));
        continue;
      }
      ActionDetector det(c.mode, dc, c.condition, c.seed);
      const auto train_set =
          prepare_videos(split(all, Split::kTrain), anchors, dc, c.condition.flow_scale);
      train(det, train_set, c.schedule());
      emit(evaluate_row(run.value, det, test, c));
      trained.insert_or_assign(c.mode, std::move(det));
    }
  } catch (const CommandError&) {
    throw;
  } catch (const std::exception& e) {
    throw CommandError(kExitRuntime, "ablation stopped after " + std::to_string(rows.size()) +
                                         " rows (kept in " + csv_path.string() + "): " + e.what());
  }

  std::ostringstream txt;
  txt << std::left << std::setw(14) << ablation_axis_name(axis) << std::right << std::setw(9)
      << "mAP@0.5" << std::setw(13) << "mAP@.5:.95" << std::setw(12) << "params"
      << std::setw(12) << "s/frame" << '\n';
  for (const auto& r : rows) {
    txt << std::left << std::setw(14) << r.value << std::right << std::fixed
        << std::setprecision(2) << std::setw(9) << 100 * r.map50 << std::setw(13)
        << 100 * r.map_coco << std::setw(12) << r.parameters << std::setprecision(4)
        << std::setw(12) << r.seconds_per_frame << '\n';
  }
  write_text(txt_path, txt.str());
  return rows;
}

int run_command(const std::string& name, const CommandContext& ctx, std::ostream& err,
                const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  try {
    body();
  } catch (const CommandError& e) {
    err << "mcm " << name << ": " << e.what() << '\n';
    code = e.code();
  } catch (const std::invalid_argument& e) {
    err << "mcm " << name << ": " << e.what() << '\n';
    code = kExitInput;
  } catch (const std::exception& e) {
    err << "mcm " << name << ": " << e.what() << '\n';
    code = kExitRuntime;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  std::ofstream log(ctx.out_dir / "mcm.log", std::ios::app);
  log << stamp << " command=" << name << " seed=" << ctx.config.seed
      << " config_hash=" << config_hash(ctx.config) << " wall_seconds=" << fmt(secs, 3)
      << " exit=" << code << '\n';
  return code;
}

}  // namespace mcm
