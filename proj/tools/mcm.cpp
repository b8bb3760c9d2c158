// mcm: synthetic data, flow, training, detection, linking, evaluation and
// ablation sweeps for the flow-modulated action detector.

#include <iostream>

#include "CLI11.hpp"
#include "mcm/cli/commands.hpp"
#include "mcm/numerics/runtime.hpp"

int main(int argc, char** argv) {
  mcm::configure_allocator();

  CLI::App app{"Flow-modulated action detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool force = false, ignore_hash = false;
  app.add_option("--config", config_path, "key=value run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "directory that relative artifact paths resolve against");
  app.add_flag("--force", force, "replace existing artifacts");
  app.add_flag("--ignore-hash", ignore_hash, "accept inputs produced under another config");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic video dataset");
  auto* flow = app.add_subcommand("compute-flow", "recompute dataset flows at data.flow_quality");
  auto* train = app.add_subcommand("train", "train a detector on the training split");
  auto* detect = app.add_subcommand("detect", "write per-frame detections for the test split");
  auto* link = app.add_subcommand("link", "link detections into action tubes");
  auto* eval = app.add_subcommand("eval", "score tubes against test ground truth");
  auto* ablate = app.add_subcommand("ablate", "train and score one run per axis value");
  std::string axis;
  ablate->add_option("axis", axis, "site | kernel | flow_quality | mode")->required();
  auto* show = app.add_subcommand("show-config", "print the effective configuration");

  for (auto* sub : {gen, flow, train, detect, link, eval, ablate, show}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mcm::kExitOk : mcm::kExitUsage;
  }

  mcm::CommandContext ctx;
  try {
    if (!config_path.empty()) ctx.config = mcm::load_run_config(config_path);
    if (*seed_opt) ctx.config.seed = seed;
    ctx.config.validate();
  } catch (const std::exception& e) {
    std::cerr << "mcm: " << e.what() << '\n';
    return mcm::kExitInput;
  }
  ctx.out_dir = out_dir;
  ctx.force = force;
  ctx.ignore_hash = ignore_hash;
  ctx.progress = &std::cerr;

  if (show->parsed()) {
    std::cout << mcm::serialize_run_config(ctx.config);
    return mcm::kExitOk;
  }
  if (ablate->parsed()) {
    mcm::AblationAxis a;
    try {
      a = mcm::parse_ablation_axis(axis);
    } catch (const std::invalid_argument& e) {
      std::cerr << "mcm: " << e.what() << '\n';
      return mcm::kExitUsage;
    }
    return mcm::run_command("ablate", ctx, std::cerr, [&] { mcm::cmd_ablate(ctx, a); });
  }

  const std::pair<CLI::App*, void (*)(const mcm::CommandContext&)> table[] = {
      {gen, mcm::cmd_gen_data}, {flow, mcm::cmd_compute_flow}, {train, mcm::cmd_train},
      {detect, mcm::cmd_detect}, {link, mcm::cmd_link},        {eval, mcm::cmd_eval}};
  for (const auto& [sub, fn] : table) {
    if (sub->parsed()) {
      return mcm::run_command(sub->get_name(), ctx, std::cerr, [&] { fn(ctx); });
    }
  }
  return mcm::kExitUsage;
}
