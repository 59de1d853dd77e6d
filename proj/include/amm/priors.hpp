#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "amm/tensor.hpp"

namespace amm {

/// p(y): a categorical distribution over K mixture components.
class CategoricalPrior {
 public:
  /// Throws ArgumentError unless `probs` has K >= 2 nonnegative entries summing to 1 (1e-9).
  explicit CategoricalPrior(std::vector<double> probs);

  static CategoricalPrior uniform(int64_t components);

  /// Class probabilities set to the label frequencies of a training set.
  static CategoricalPrior from_labels(const torch::Tensor& labels, int64_t components);

  int64_t size() const { return static_cast<int64_t>(probs_.size()); }
  const std::vector<double>& probs() const { return probs_; }
  torch::Tensor probs_tensor() const;

 private:
  std::vector<double> probs_;
};

/// Draws `count` one-hot rows (count×K) from the categorical prior.
torch::Tensor sample_categorical(const CategoricalPrior& prior, int64_t count, torch::Generator& rng);

// Mean placement descriptors.

struct ZerosPlacement {};

/// One axis of a regular grid: points start, start+step, ... up to stop (inclusive).
struct GridAxis {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> points() const;
};

/// Cartesian product of the axes over the leading coordinates; the rest are zero.
/// The first axis varies slowest.
struct GridPlacement {
  std::vector<GridAxis> axes;
};

/// Explicit leading coordinates of each mean, zero padded to the latent dimension.
struct TablePlacement {
  std::vector<std::vector<double>> rows;
};

/// Gaussian random means with the given scale (standard deviation).
struct RandomPlacement {
  uint64_t seed = 0;
  double scale = 1.0;
};

/// Means evenly spaced on a circle of the given radius in the first two coordinates.
struct CirclePlacement {
  double radius = 1.0;
};

using MeanPlacement =
    std::variant<ZerosPlacement, GridPlacement, TablePlacement, RandomPlacement, CirclePlacement>;

/// The 18-component grid used for unsupervised SVHN clustering:
/// {-6,0,6} x {-6,0,6} x {-3,3}.
GridPlacement svhn_cluster_grid();

/// The 10 fixed digit means used for semi-supervised SVHN (four leading coordinates).
TablePlacement svhn_digit_table();

/// Builds the K×L mean matrix. Throws ConfigError when the descriptor does not
/// produce exactly K rows or needs more than L coordinates.
torch::Tensor build_means(const MeanPlacement& placement, int64_t components, int64_t dim);

enum class MeansMode { Fixed, Learned };

/// Smallest standard deviation a mixture component may have.
inline constexpr double kMinStddev = 1e-4;

/// p(y)p(z|y) as a Gaussian mixture with diagonal covariances.
///
/// The module doubles as the prior-mean generator G_z(y) = y·means + (y·stddevs)⊙ε:
/// in Learned mode the means are registered parameters (and, optionally, the
/// log standard deviations), otherwise they are buffers.
class MixturePriorImpl : public torch::nn::Module {
 public:
  MixturePriorImpl(CategoricalPrior categorical, torch::Tensor means, torch::Tensor stddevs,
                   MeansMode mode, bool learn_stddevs = false);

  /// Reparameterized z for one-hot (or simplex) rows `y`. `noise_scale` multiplies
  /// ε and exists so tests can collapse the sampler to its means.
  torch::Tensor forward(const torch::Tensor& y, torch::Generator& rng, double noise_scale = 1.0);

  const CategoricalPrior& categorical() const { return categorical_; }
  int64_t components() const { return categorical_.size(); }
  int64_t dim() const { return means_.size(1); }
  MeansMode means_mode() const { return mode_; }
  bool learns_stddevs() const { return learn_stddevs_; }

  /// Live view of the means (a parameter in Learned mode).
  const torch::Tensor& means() const { return means_; }
  torch::Tensor stddevs() const;

  /// log N(z; means[k], diag(stddevs[k]^2)).
  double log_component_density(std::span<const double> z, int64_t k) const;

  /// M×K matrix of log π_k + log N(z_i; μ_k, σ_k).
  torch::Tensor log_joint(const torch::Tensor& z) const;

  /// argmax_k p(z|y=k)p(y=k); ties go to the lowest index.
  int64_t bayes_classify(std::span<const double> z) const;

  /// Row-wise Bayes classification of an M×L batch.
  std::vector<int64_t> bayes_classify(const torch::Tensor& z) const;

 private:
  CategoricalPrior categorical_;
  MeansMode mode_;
  bool learn_stddevs_;
  torch::Tensor means_;
  torch::Tensor log_stddevs_;
};
TORCH_MODULE(MixturePrior);

/// Free-function form of MixturePriorImpl::forward. Throws DimensionError when
/// `y` does not have K columns.
torch::Tensor sample_mixture_z(MixturePrior& prior, const torch::Tensor& y, torch::Generator& rng,
                               double noise_scale = 1.0);

}  // namespace amm
