#pragma once

// Everything a pipeline run needs, as one flat key=value document:
//
//   # comment
//   seed=1
//   mode=two_in_one
//   condition.last_kernel=3x3
//   train.lr=0.01
//
// Every key has a default, unknown or repeated keys are errors, and
// serialize() emits every key in a fixed order so that parse(serialize(c))
// reproduces c exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcm/model/pipeline.hpp"

namespace mcm {

struct PathConfig {
  // Relative paths resolve against the output directory.
  std::string data = "data";
  std::string checkpoint = "model.fmw";
  std::string training_log = "train_log.csv";
  std::string detections = "detections.txt";
  std::string tubes = "tubes.txt";
  std::string metrics = "metrics.csv";
  std::string ablation = "ablation";  // prefix; the axis name is appended
};

struct RunConfig {
  uint64_t seed = 1;  // data layout, weight init and window sampling
  DetectorMode mode = DetectorMode::kTwoInOne;
  ConditionConfig condition;
  DetectorConfig detector;
  DetectParams detect;
  LinkParams link;
  GenConfig data;  // data.seed is ignored in favour of `seed`
  TrainSchedule train;
  PathConfig paths;

  // Copies with `seed` pushed into the generator and schedule, and the
  // detector's class count and input size taken from the data section.
  GenConfig gen_config() const;
  TrainSchedule schedule() const;
  DetectorConfig detector_config() const;

  // Throws std::invalid_argument naming the key.
  void validate() const;
};

// Throws std::invalid_argument with "line N: ..." on syntax errors, unknown
// or duplicate keys and bad values. Keys not mentioned keep their defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& cfg);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

// Hashes over the serialized keys. The data hash covers what determines the
// generated videos except flow quality. The model hash covers everything
// that shapes trained weights and their outputs. Paths are never hashed.
std::string data_hash(const RunConfig& cfg);
std::string model_hash(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

}  // namespace mcm
