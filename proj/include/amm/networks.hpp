#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "amm/priors.hpp"
#include "amm/tensor.hpp"

namespace amm {

enum class NetKind { Dense, Conv };
enum class Activation { ReLU, LeakyReLU, Tanh, ELU };
enum class OutputActivation { Sigmoid, Linear };

/// Shape of one observation. Vector data (e.g. the synthetic mixture) uses
/// channels = D and height = width = 1.
struct ImageShape {
  int64_t channels = 1;
  int64_t height = 1;
  int64_t width = 1;

  int64_t numel() const { return channels * height * width; }
  bool is_vector() const { return height == 1 && width == 1; }
  bool operator==(const ImageShape&) const = default;
};

/// Architecture of one network.
///
/// Dense: the flattened image and any conditioning vectors are concatenated at
/// the input and passed through `hidden` fully connected layers.
/// Conv: `channels` stride-2 4x4 convolutions reduce the image; conditioning
/// vectors are concatenated to the flattened features before the `hidden`
/// layers. Decoders mirror this with transposed convolutions.
struct NetSpec {
  NetKind kind = NetKind::Dense;
  std::vector<int64_t> hidden{256, 256};
  std::vector<int64_t> channels{64, 128, 256};
  Activation activation = Activation::LeakyReLU;
  double leaky_slope = 0.2;
  /// Final squashing of the decoder; ignored by other networks.
  OutputActivation output = OutputActivation::Sigmoid;
  /// Standard deviation of the Gaussian weight initializer; biases start at 0.
  double init_std = 0.02;
};

/// Which ordering the inference path uses.
enum class Factorization {
  Q1,          ///< q(y|x) then q(z|x,y)
  Q2,          ///< q(z|x) then q(y|x,z)
  Supervised,  ///< y observed, q(z|x,y)
};

std::string to_string(NetKind kind);
std::string to_string(Activation act);
std::string to_string(OutputActivation act);
std::string to_string(Factorization f);

/// Output of a reparameterized Gaussian head.
struct GaussianSample {
  torch::Tensor mean;
  torch::Tensor log_stddev;
  torch::Tensor sample;  ///< mean + exp(log_stddev) ⊙ ε
};

/// Shared feature extractor: images (and optional conditioning) to a flat feature vector.
class FeatureTrunkImpl : public torch::nn::Module {
 public:
  FeatureTrunkImpl(const NetSpec& spec, ImageShape input, int64_t cond_dim);

  /// `cond` may be undefined when cond_dim is 0.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

  int64_t output_dim() const { return output_dim_; }
  int64_t cond_dim() const { return cond_dim_; }
  const ImageShape& input_shape() const { return input_; }

 private:
  NetSpec spec_;
  ImageShape input_;
  int64_t cond_dim_;
  int64_t output_dim_ = 0;
  torch::nn::ModuleList convs_;
  torch::nn::ModuleList dense_;
};
TORCH_MODULE(FeatureTrunk);

/// q(·|x[,cond]) with a mean head and a log-stddev head: the generator G_y or G_z
/// of the inference path.
class GaussianEncoderImpl : public torch::nn::Module {
 public:
  GaussianEncoderImpl(const NetSpec& spec, ImageShape input, int64_t cond_dim, int64_t out_dim);

  /// `noise_scale` multiplies ε; 0 makes the sample equal to the mean.
  GaussianSample forward(const torch::Tensor& x, const torch::Tensor& cond, torch::Generator& rng,
                         double noise_scale = 1.0);

  int64_t out_dim() const { return out_dim_; }
  int64_t cond_dim() const { return trunk_->cond_dim(); }
  /// Final layer of the mean head.
  torch::nn::Linear& mean_head() { return mean_head_; }
  torch::nn::Linear& log_stddev_head() { return log_stddev_head_; }

 private:
  int64_t out_dim_;
  FeatureTrunk trunk_{nullptr};
  torch::nn::Linear mean_head_{nullptr};
  torch::nn::Linear log_stddev_head_{nullptr};
};
TORCH_MODULE(GaussianEncoder);

/// G_x(y, z): deterministic decoder to image space.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(const NetSpec& spec, int64_t components, int64_t latent_dim, ImageShape output);

  /// Returns an M×C×H×W batch.
  torch::Tensor forward(const torch::Tensor& y, const torch::Tensor& z);

  const ImageShape& output_shape() const { return output_; }

 private:
  NetSpec spec_;
  int64_t components_;
  int64_t latent_dim_;
  ImageShape output_;
  int64_t seed_height_ = 1;
  int64_t seed_width_ = 1;
  torch::nn::ModuleList dense_;
  torch::nn::ModuleList deconvs_;
};
TORCH_MODULE(Decoder);

/// D(x, y, z) → ρ ∈ (0,1). y and z are concatenated to the image features.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const NetSpec& spec, ImageShape input, int64_t components, int64_t latent_dim);

  /// Pre-sigmoid score, M-vector.
  torch::Tensor logits(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& z);
  /// Sigmoid of the score, M-vector.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& z);

 private:
  int64_t components_;
  int64_t latent_dim_;
  FeatureTrunk trunk_{nullptr};
  torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Gaussian weights with the given std, zero biases, for every Linear/Conv layer in `module`.
void initialize_weights(torch::nn::Module& module, double stddev, torch::Generator& rng);

/// Total number of scalar parameters.
int64_t parameter_count(const torch::nn::Module& module);

/// True when every parameter entry is finite.
bool parameters_finite(const torch::nn::Module& module);

/// Inferred categorical latent: logits h_y and simplex y = softmax(h_y).
struct InferredY {
  torch::Tensor logits;
  torch::Tensor y;
};

/// h_y = μ_y(x[,cond]) + σ_y(x[,cond]) ⊙ ε, y = softmax(h_y). `cond` is the
/// inferred z under Q2 and undefined under Q1.
InferredY sample_inference_y(const torch::Tensor& x, GaussianEncoder& encoder, torch::Generator& rng,
                             const torch::Tensor& cond = {}, double noise_scale = 1.0);

/// z = μ_z(x, cond) + σ_z(x, cond) ⊙ ε. `cond` is h_y under Q1, the one-hot label
/// under Supervised, and undefined for the first stage of Q2.
torch::Tensor sample_inference_z(const torch::Tensor& x, const torch::Tensor& cond,
                                 GaussianEncoder& encoder, torch::Generator& rng,
                                 double noise_scale = 1.0);

/// Output of the full inference path for one batch.
struct InferenceSample {
  torch::Tensor logits;  ///< h_y
  torch::Tensor y;       ///< softmax(h_y)
  torch::Tensor z;
};

/// All networks of one model, without optimizer state.
struct AmmModel {
  int64_t components = 0;
  int64_t latent_dim = 0;
  ImageShape shape;
  Factorization factorization = Factorization::Q1;
  MixturePrior prior{nullptr};
  GaussianEncoder encoder_y{nullptr};
  GaussianEncoder encoder_z{nullptr};
  Decoder decoder{nullptr};
  Discriminator discriminator{nullptr};

  /// Unlabeled inference path (Q1 or Q2 per `factorization`).
  InferenceSample infer(const torch::Tensor& x, torch::Generator& rng, double noise_scale = 1.0);

  /// Labeled inference path: q(z|x,y) with y the observed one-hot label.
  torch::Tensor infer_z_given_y(const torch::Tensor& x, const torch::Tensor& y, torch::Generator& rng,
                                double noise_scale = 1.0);
};

/// Architecture and prior description for building an AmmModel.
struct ModelSpec {
  int64_t components = 10;
  int64_t latent_dim = 64;
  ImageShape shape{1, 28, 28};
  Factorization factorization = Factorization::Q1;
  MeanPlacement placement = ZerosPlacement{};
  MeansMode means_mode = MeansMode::Fixed;
  double prior_stddev = 1.0;
  bool learn_prior_stddev = false;
  /// Empty means uniform.
  std::vector<double> class_probs;
  NetSpec encoder;
  NetSpec decoder;
  NetSpec discriminator;
};

/// Builds and initializes every network of the model.
AmmModel build_model(const ModelSpec& spec, uint64_t init_seed);

}  // namespace amm
