#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "amm/errors.hpp"
#include "amm/networks.hpp"

namespace amm {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any logarithm.
inline constexpr double kProbClamp = 1e-7;

struct OptimizerConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

/// Which triplets the penalty interpolates between.
enum class PenaltyPairing {
  Joint,       ///< inference (x, ỹ, z̃) against synthesis (x̃, y, z)
  Coordinate,  ///< (data x, prior y, prior z) against (x̃, ỹ, z̃)
};

struct PenaltyConfig {
  double lambda = 10.0;
  bool enabled = true;
  PenaltyPairing pairing = PenaltyPairing::Joint;
};

struct StepMetrics {
  double discriminator_loss = 0.0;  ///< adversarial part only; the penalty is reported separately
  double encoder_loss = 0.0;
  double decoder_loss = 0.0;
  double penalty = 0.0;
  double mean_rho_q = 0.0;
  double mean_rho_p = 0.0;

  bool all_finite() const;
};

/// Thrown when a step produces a non-finite loss or parameter. Carries the
/// metrics of the failed step for diagnosis.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, long step, StepMetrics metrics)
      : NumericError(what, step), metrics_(metrics) {}
  const StepMetrics& metrics() const { return metrics_; }

 private:
  StepMetrics metrics_;
};

/// L_D = -(scale/M) Σ log ρ_q - (scale/M) Σ log(1 - ρ_p). Returns a scalar tensor
/// that carries gradients. Throws ArgumentError on an empty batch.
torch::Tensor discriminator_loss(const torch::Tensor& rho_q, const torch::Tensor& rho_p,
                                 double scale = 1.0);

struct GeneratorLosses {
  torch::Tensor encoder;  ///< -(scale/M) Σ log(1 - ρ_q)
  torch::Tensor decoder;  ///< -(scale/M) Σ log ρ_p
};

GeneratorLosses generator_losses(const torch::Tensor& rho_q, const torch::Tensor& rho_p,
                                 double scale = 1.0);

/// A batch of (x, y, z) triplets aligned by row.
struct Triplets {
  torch::Tensor x;
  torch::Tensor y;
  torch::Tensor z;
};

/// Any differentiable map (x, y, z) → M-vector.
using Critic =
    std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const torch::Tensor&)>;

/// λ · mean[(‖∇_{x̂,ŷ,ẑ} D(x̂,ŷ,ẑ)‖₂ - 1)²] with (x̂,ŷ,ẑ) = α·real + (1-α)·fake and
/// one α ~ U(0,1) per row shared by all three coordinates. The result is
/// differentiable with respect to the critic's parameters.
torch::Tensor gradient_penalty(const Critic& critic, const Triplets& real, const Triplets& fake,
                               const PenaltyConfig& config, torch::Generator& rng);

/// One participant of the game: a parameter set and its Adam state.
struct Player {
  std::string name;
  std::shared_ptr<torch::nn::Module> module;
  std::unique_ptr<torch::optim::Adam> optimizer;
};

/// Everything that evolves during training.
class TrainState {
 public:
  TrainState(const ModelSpec& spec, const OptimizerConfig& optimizer, const PenaltyConfig& penalty,
             int64_t batch_size, uint64_t seed);

  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;

  const ModelSpec& spec() const { return spec_; }
  AmmModel& model() { return model_; }
  const OptimizerConfig& optimizer_config() const { return optimizer_; }
  const PenaltyConfig& penalty() const { return penalty_; }
  int64_t batch_size() const { return batch_size_; }
  long step() const { return step_; }
  torch::Generator& rng() { return rng_; }

  /// Players in update order: discriminator, decoder, prior (Learned only),
  /// encoder_y, encoder_z.
  std::vector<Player>& players() { return players_; }
  Player& player(const std::string& name);
  bool has_player(const std::string& name) const;

  void save(torch::serialize::OutputArchive& archive) const;
  void load(torch::serialize::InputArchive& archive);

  /// Deep copy including optimizer and random stream state.
  TrainState clone() const;

  void advance() { ++step_; }

 private:
  ModelSpec spec_;
  OptimizerConfig optimizer_;
  PenaltyConfig penalty_;
  int64_t batch_size_;
  long step_ = 0;
  AmmModel model_;
  std::vector<Player> players_;
  torch::Generator rng_;
};

/// The loss each player descends on, built from one forward pass.
struct StepGraph {
  std::map<std::string, torch::Tensor> player_losses;  ///< keyed by Player::name
  /// Individual loss terms (e.g. "d_unlabeled", "enc_labeled") for inspection.
  std::map<std::string, torch::Tensor> terms;
  StepMetrics metrics;
};

/// Forward pass of the unsupervised game for one batch.
StepGraph amm_graph(TrainState& state, const torch::Tensor& x, torch::Generator& rng);

/// Forward pass of the semi-supervised game: an unlabeled batch and a labeled
/// batch (`labels` one-hot, M×K).
StepGraph samm_graph(TrainState& state, const torch::Tensor& x_unlabeled,
                     const torch::Tensor& x_labeled, const torch::Tensor& labels,
                     torch::Generator& rng);

/// Computes every player's gradient against the current parameters, then applies
/// all Adam updates. `only` restricts the update to the named players (all when empty).
void apply_simultaneous_update(TrainState& state, const StepGraph& graph,
                               const std::vector<std::string>& only = {});

/// One AMM step: forward, simultaneous update, step counter +1.
StepMetrics amm_train_step(TrainState& state, const torch::Tensor& x, torch::Generator& rng);

/// One SAMM step.
StepMetrics samm_train_step(TrainState& state, const torch::Tensor& x_unlabeled,
                            const torch::Tensor& x_labeled, const torch::Tensor& labels,
                            torch::Generator& rng);

}  // namespace amm
