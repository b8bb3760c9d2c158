#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mcm/cli/commands.hpp"
#include "mcm/numerics/random.hpp"

using namespace mcm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_config() {
  RunConfig c;
  c.data.num_train = 4;
  c.data.num_test = 4;
  c.data.frames_per_video = 4;
  c.train.epochs = 2;
  c.train.windows_per_video = 1;
  return c;
}

CommandContext context(const std::string& name, RunConfig cfg = tiny_config()) {
  CommandContext ctx;
  ctx.config = std::move(cfg);
  ctx.out_dir = fs::temp_directory_path() / ("mcm_cli_" + name);
  fs::remove_all(ctx.out_dir);
  return ctx;
}

int run(const std::string& name, const CommandContext& ctx, void (*fn)(const CommandContext&)) {
  std::ostringstream err;
  return run_command(name, ctx, err, [&] { fn(ctx); });
}

void full_pipeline(const CommandContext& ctx) {
  REQUIRE(run("gen-data", ctx, cmd_gen_data) == 0);
  REQUIRE(run("train", ctx, cmd_train) == 0);
  REQUIRE(run("detect", ctx, cmd_detect) == 0);
  REQUIRE(run("link", ctx, cmd_link) == 0);
  REQUIRE(run("eval", ctx, cmd_eval) == 0);
}

}  // namespace

TEST_CASE("config serialization round trips") {
  const RunConfig defaults;
  const std::string text = serialize_run_config(defaults);
  CHECK(serialize_run_config(parse_run_config(text)) == text);

  RunConfig c;
  c.seed = 18446744073709551615ULL;
  c.mode = DetectorMode::kTwoInOneTwoStream;
  c.condition.channels = {4, 6, 2};
  c.condition.modulate_at = {Site::kConv1, Site::kConv3};
  c.condition.last_kernel = LastKernel::k1x1;
  c.condition.flow_scale = 0.1 + 0.2;
  c.train.lr = 1.0 / 3.0;
  c.data.camouflage = false;
  c.data.classes = {MotionPattern::kDiagonal, MotionPattern::kMoveUp};
  c.data.flow_quality = FlowQuality::kIterative;
  c.paths.data = "/abs/data dir";
  const RunConfig back = parse_run_config(serialize_run_config(c));
  CHECK(back.seed == c.seed);
  CHECK(back.mode == c.mode);
  CHECK(back.condition.channels == c.condition.channels);
  CHECK(back.condition.modulate_at == c.condition.modulate_at);
  CHECK(back.condition.flow_scale == c.condition.flow_scale);
  CHECK(back.train.lr == c.train.lr);
  CHECK(back.data.classes == c.data.classes);
  CHECK(back.paths.data == c.paths.data);
  CHECK(serialize_run_config(back) == serialize_run_config(c));
}

TEST_CASE("config parsing rejects bad input") {
  CHECK_THROWS_WITH_AS(parse_run_config("seed=1\nfoo.bar=2\n"), "line 2: unknown key 'foo.bar'",
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("seed=1\nseed=2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("seed\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("train.lr=fast\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("train.epochs=3.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("mode=three_stream\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("condition.sites=conv5\n"), std::invalid_argument);
  const RunConfig c = parse_run_config("# comment\n\n  train.lr = 0.5  \n");
  CHECK(c.train.lr == 0.5);
  CHECK(c.seed == RunConfig{}.seed);
}

TEST_CASE("hashes follow the sections they cover") {
  const RunConfig a;
  RunConfig b = a;
  b.train.lr = 0.5;
  CHECK(data_hash(a) == data_hash(b));
  CHECK(model_hash(a) != model_hash(b));
  b = a;
  b.paths.checkpoint = "elsewhere.fmw";
  CHECK(config_hash(a) == config_hash(b));
  b = a;
  b.data.flow_quality = FlowQuality::kIterative;
  CHECK(data_hash(a) == data_hash(b));
  CHECK(model_hash(a) != model_hash(b));
  b = a;
  b.link.gap_max = 3;
  CHECK(model_hash(a) == model_hash(b));
  CHECK(config_hash(a) != config_hash(b));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("full pipeline writes a parseable metrics report") {
  const CommandContext ctx = context("smoke");
  full_pipeline(ctx);
  std::istringstream csv(slurp(ctx.out_dir / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("threshold,video_map,", 0) == 0);
  std::vector<std::string> labels;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    labels.push_back(line.substr(0, comma));
    const double v = std::stod(line.substr(comma + 1));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(labels == std::vector<std::string>{"0.20", "0.50", "0.75", "0.50:0.95"});
  for (const char* artifact : {"data", "model.fmw", "detections.txt", "tubes.txt", "metrics.csv"}) {
    const ArtifactMeta m = read_meta(ctx.out_dir / artifact);
    CHECK(m.config_hash == config_hash(ctx.config));
  }
  const std::string log = slurp(ctx.out_dir / "mcm.log");
  CHECK(log.find("command=eval seed=1 config_hash=" + config_hash(ctx.config)) !=
        std::string::npos);
  CHECK(log.find("wall_seconds=") != std::string::npos);
}

TEST_CASE("rerunning with the same config reproduces the metrics") {
  CommandContext a = context("det_a"), b = context("det_b");
  a.config.mode = b.config.mode = DetectorMode::kTwoInOneTwoStream;
  full_pipeline(a);
  full_pipeline(b);
  CHECK(slurp(a.out_dir / "metrics.csv") == slurp(b.out_dir / "metrics.csv"));
  CHECK(slurp(a.out_dir / "model.fmw") == slurp(b.out_dir / "model.fmw"));
}

TEST_CASE("ground truth tubes evaluate to mAP 1") {
  const CommandContext ctx = context("gt_eval");
  REQUIRE(run("gen-data", ctx, cmd_gen_data) == 0);
  const Dataset ds = read_dataset(ctx.out_dir / "data");
  std::ofstream tubes(ctx.out_dir / "tubes.txt");
  for (const auto& s : ds.samples)
    if (s.split == Split::kTest)
      for (const auto& g : s.gt_tubes) tubes << format_tube_record(as_detection(g, 0.5)) << '\n';
  tubes.close();
  CommandContext forced = ctx;
  CHECK(run("eval", forced, cmd_eval) == kExitInput);  // no provenance record
  forced.ignore_hash = true;
  write_meta(ctx.out_dir / "tubes.txt", {"tubes", "x", "x", "x", "fast", 0});
  REQUIRE(run("eval", forced, cmd_eval) == 0);
  std::istringstream csv(slurp(ctx.out_dir / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    CHECK(line.substr(line.find(',') + 1, 11) == "1.000000000");
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("commands refuse to overwrite or to mix configurations") {
  CommandContext ctx = context("guards");
  REQUIRE(run("gen-data", ctx, cmd_gen_data) == 0);
  CHECK(run("gen-data", ctx, cmd_gen_data) == kExitInput);
  CommandContext forced = ctx;
  forced.force = true;
  CHECK(run("gen-data", forced, cmd_gen_data) == 0);

  CHECK(run("detect", ctx, cmd_detect) == kExitInput);  // no checkpoint yet
  CHECK(run("link", ctx, cmd_link) == kExitInput);

  CommandContext other = ctx;
  other.config.seed = 2;
  CHECK(run("train", other, cmd_train) == kExitInput);  // dataset from seed 1
  other.config = ctx.config;
  other.config.data.flow_quality = FlowQuality::kIterative;
  CHECK(run("train", other, cmd_train) == kExitInput);  // flows are fast
  CHECK(run("compute-flow", other, cmd_compute_flow) == kExitInput);
  other.force = true;
  CHECK(run("compute-flow", other, cmd_compute_flow) == 0);
  CHECK(read_meta(ctx.out_dir / "data").flow_quality == "iterative");
  other.force = false;
  CHECK(run("compute-flow", other, cmd_compute_flow) == 0);  // already done
  CHECK(run("train", other, cmd_train) == 0);
  CHECK(run("train", other, cmd_train) == kExitInput);

  CommandContext changed = other;
  changed.config.train.lr = 0.5;
  CHECK(run("detect", changed, cmd_detect) == kExitInput);
  changed.ignore_hash = true;
  CHECK(run("detect", changed, cmd_detect) == 0);
}

TEST_CASE("divergence is a runtime failure") {
  CommandContext ctx = context("diverge");
  ctx.config.train.lr = 1e8;
  ctx.config.train.epochs = 30;
  ctx.config.train.decay_every = 0;
  REQUIRE(run("gen-data", ctx, cmd_gen_data) == 0);
  std::ostringstream err;
  CHECK(run_command("train", ctx, err, [&] { cmd_train(ctx); }) == kExitRuntime);
  CHECK(err.str().find("lower train.lr") != std::string::npos);
  CHECK_FALSE(fs::exists(ctx.out_dir / "model.fmw"));
  CHECK(fs::exists(ctx.out_dir / "train_log.csv"));
}

TEST_CASE("ablation over modes emits the five detector rows") {
  CommandContext ctx = context("ablate_mode");
  ctx.config.train.epochs = 1;
  const auto rows = cmd_ablate(ctx, AblationAxis::kMode);
  std::vector<std::string> values;
  for (const auto& r : rows) values.push_back(r.value);
  CHECK(values == std::vector<std::string>{"rgb", "flow", "two_stream", "two_in_one",
                                           "two_in_one_two_stream"});
  CHECK(rows[2].parameters == rows[0].parameters + rows[1].parameters);
  CHECK(rows[4].parameters == rows[3].parameters + rows[1].parameters);
  const std::string csv = slurp(ctx.out_dir / "ablation_mode.csv");
  CHECK(csv.rfind("mode,map50,map50_95,parameters,seconds_per_frame\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(fs::exists(ctx.out_dir / "ablation_mode.txt"));
}

TEST_CASE("ablation over sites grows in parameters") {
  CommandContext ctx = context("ablate_site");
  ctx.config.train.epochs = 1;
  ctx.config.data.num_train = 1;
  ctx.config.data.num_test = 1;
  const auto rows = cmd_ablate(ctx, AblationAxis::kSite);
  REQUIRE(rows.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(rows[i].value == "conv" + std::to_string(i + 1));
  for (int i = 1; i < 4; ++i) CHECK(rows[i].parameters > rows[i - 1].parameters);
}

TEST_CASE("a failing ablation run keeps the finished rows") {
  CommandContext ctx = context("ablate_fail");
  ctx.config.train.epochs = 1;
  ctx.config.data.num_train = 1;
  ctx.config.data.num_test = 1;
  // conv4 cannot carry a 4x-strided condition map with one layer.
  ctx.config.condition.channels = {4};
  std::ostringstream err;
  const int code = run_command("ablate", ctx, err, [&] { cmd_ablate(ctx, AblationAxis::kSite); });
  CHECK(code == kExitRuntime);
  const std::string csv = slurp(ctx.out_dir / "ablation_site.csv");
  CHECK(csv.find("conv1,") != std::string::npos);
  CHECK(csv.find("conv4,") == std::string::npos);
  CHECK(err.str().find("kept in") != std::string::npos);
}

TEST_CASE("axis names") {
  for (auto a : {AblationAxis::kSite, AblationAxis::kKernel, AblationAxis::kFlowQuality,
                 AblationAxis::kMode}) {
    CHECK(parse_ablation_axis(ablation_axis_name(a)) == a);
  }
  CHECK_THROWS_AS(parse_ablation_axis("depth"), std::invalid_argument);
}
