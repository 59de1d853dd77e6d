#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "amm/game.hpp"

namespace amm {

inline constexpr int64_t kCheckpointVersion = 1;

/// Metadata stored beside the training state.
struct CheckpointInfo {
  int64_t version = kCheckpointVersion;
  long step = 0;
  int64_t components = 0;
  int64_t latent_dim = 0;
  ImageShape shape;
  Factorization factorization = Factorization::Q1;
  std::string config_text;  ///< echo of the run configuration
  /// Lowest validation error seen so far; +inf when never evaluated.
  double best_validation = std::numeric_limits<double>::infinity();
};

/// Writes the full training state (parameters, Adam moments, random stream,
/// step) atomically: the file is written beside `path` and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const std::string& config_text,
                     double best_validation = std::numeric_limits<double>::infinity());

/// Reads only the metadata. Throws CheckpointError on an unreadable or
/// truncated file and CheckpointVersionError on a format version mismatch.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores a state built from `spec` and the optimizer settings. Throws
/// CheckpointConflictError when K, L, the observation shape or the factorization
/// differ from `spec`.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                           const OptimizerConfig& optimizer, const PenaltyConfig& penalty,
                           int64_t batch_size, CheckpointInfo* info = nullptr);

}  // namespace amm
