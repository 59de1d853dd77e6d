#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "amm/checkpoint.hpp"
#include "amm/config.hpp"

namespace amm {

/// Datasets of a run after loading and splitting.
struct PreparedData {
  Dataset train;    ///< unlabeled training pool (labels kept only for reporting)
  Dataset val;      ///< may be empty
  Dataset labeled;  ///< labeled subset for SAMM; may be empty
  Dataset test;     ///< may be empty when no test data is configured
  ImageShape shape;
};

/// Loads the configured data and applies the split.
PreparedData prepare_data(const RunConfig& config);

/// The model description with the observation shape and p(y) resolved from the data.
ModelSpec resolve_model(const RunConfig& config, const PreparedData& data);

enum class TrainMode { Amm, Samm };

struct TrainOptions {
  TrainMode mode = TrainMode::Amm;
  std::filesystem::path out_dir = "run";
  std::optional<std::filesystem::path> resume;
};

struct TrainSummary {
  long steps = 0;
  double best_validation = 0.0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_file;
};

/// Column header of metrics.csv.
inline constexpr char kMetricsHeader[] =
    "step,L_D,L_enc,L_dec,penalty,mean_rho_q,mean_rho_p,val_cluster_error,wall_clock";

/// Trains until `config.max_steps`, appending a metrics row every `eval.every`
/// steps and at the last step, writing checkpoint_<step>.pt every
/// `eval.checkpoint_every` steps, best.pt at each new lowest validation error,
/// and final.pt at the end. Resuming continues the step count, random stream and
/// batch schedule of the checkpoint, so a resumed run matches an uninterrupted one.
/// SAMM mode throws ConfigError when no labeled subset is configured.
TrainSummary train(const RunConfig& config, const PreparedData& data, const TrainOptions& options);

/// Validation error used for metrics and best-checkpoint selection:
/// the clustering error, or NaN when the validation split is empty.
double validation_error(AmmModel& model, const Dataset& val, AssignmentMode mode);

}  // namespace amm
