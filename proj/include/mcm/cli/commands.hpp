#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcm/cli/run_config.hpp"

namespace mcm {

// Process exit statuses.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInput = 2, kExitRuntime = 3 };

// A failure with a known exit status and a message meant for the user.
class CommandError : public std::runtime_error {
 public:
  CommandError(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

struct CommandContext {
  RunConfig config;
  std::filesystem::path out_dir = ".";
  bool force = false;        // allow replacing existing artifacts
  bool ignore_hash = false;  // accept inputs produced under another config
  std::ostream* progress = nullptr;  // human-readable progress; may be null

  std::filesystem::path resolve(const std::string& path) const;
};

// Artifact sidecar "<artifact>.meta": key=value lines recording which
// configuration produced the artifact.
struct ArtifactMeta {
  std::string kind;
  std::string data_hash;
  std::string model_hash;
  std::string config_hash;
  std::string flow_quality;
  uint64_t seed = 0;
};

std::filesystem::path meta_path(const std::filesystem::path& artifact);
void write_meta(const std::filesystem::path& artifact, const ArtifactMeta& meta);
// Throws CommandError(kExitInput) if the sidecar is missing or malformed.
ArtifactMeta read_meta(const std::filesystem::path& artifact);

// Each command writes its artifact plus sidecar and throws CommandError on
// failure. None replaces an existing artifact unless ctx.force is set.
void cmd_gen_data(const CommandContext& ctx);
void cmd_compute_flow(const CommandContext& ctx);
void cmd_train(const CommandContext& ctx);
void cmd_detect(const CommandContext& ctx);
void cmd_link(const CommandContext& ctx);
void cmd_eval(const CommandContext& ctx);

enum class AblationAxis { kSite, kKernel, kFlowQuality, kMode };
std::string ablation_axis_name(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& text);

struct AblationRow {
  std::string value;
  double map50 = 0;
  double map_coco = 0;  // mAP@0.5:0.95
  int64_t parameters = 0;
  double seconds_per_frame = 0;
};

// Trains and evaluates one configuration per axis value with the shared
// seed, appending each row to "<paths.ablation>_<axis>.csv" as soon as it
// is known, so a failed run leaves the finished rows behind. A plain-text
// table goes to the matching ".txt".
std::vector<AblationRow> cmd_ablate(const CommandContext& ctx, AblationAxis axis);

// Runs `body`, maps exceptions to exit codes, prints failures to `err` and
// appends "<time> command=... seed=... config_hash=... wall_seconds=...
// exit=..." to "<out>/mcm.log".
int run_command(const std::string& name, const CommandContext& ctx, std::ostream& err,
                const std::function<void()>& body);

}  // namespace mcm
