#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amm/data.hpp"
#include "amm/eval.hpp"
#include "amm/game.hpp"
#include "amm/networks.hpp"

namespace amm {

enum class DataKind { Synthetic, Idx, Raw };

/// How p(y) is set: uniform, the label frequencies of the training split, or explicit values.
enum class ClassProbsMode { Uniform, TrainFrequency, Explicit };

struct SyntheticConfig {
  int64_t per_component = 1000;
  int64_t test_per_component = 1000;
  int64_t dim = 2;
  double separation = 6.0;
  uint64_t seed = 0;  ///< the test set uses seed + 1
};

struct DataConfig {
  DataKind kind = DataKind::Synthetic;
  SyntheticConfig synthetic;
  // IDX inputs.
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  // Raw container inputs.
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  SplitSpec split;
};

struct EvalConfig {
  AssignmentMode assignment = AssignmentMode::Optimal;
  int64_t every = 500;
  int64_t checkpoint_every = 2000;
};

struct RunConfig {
  /// Model description; `shape` is filled in from the data at load time.
  ModelSpec model;
  ClassProbsMode class_probs = ClassProbsMode::Uniform;
  OptimizerConfig optimizer;
  PenaltyConfig penalty;
  int64_t batch_size = 100;
  int64_t max_steps = 5000;
  uint64_t seed = 0;
  DataConfig data;
  EvalConfig eval;
  /// The source text, echoed into checkpoints.
  std::string text;
};

/// Parses and validates YAML configuration text. Relative data paths are resolved
/// against `base_dir`. Unknown or missing keys raise ConfigError naming the key
/// path (e.g. `model.K`); syntax errors report the line number.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Reads a configuration file and checks that every referenced data path exists.
RunConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError when a data path named by the configuration is missing.
void check_paths(const RunConfig& config);

}  // namespace amm
