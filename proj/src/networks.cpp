#include "amm/networks.hpp"

#include <cmath>

#include "amm/errors.hpp"

namespace amm {

namespace nn = torch::nn;

std::string to_string(NetKind kind) { return kind == NetKind::Dense ? "dense" : "conv"; }

std::string to_string(Activation act) {
  switch (act) {
    case Activation::ReLU:
      return "relu";
    case Activation::LeakyReLU:
      return "leaky_relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::ELU:
      return "elu";
  }
  return "?";
}

std::string to_string(OutputActivation act) {
  return act == OutputActivation::Sigmoid ? "sigmoid" : "linear";
}

std::string to_string(Factorization f) {
  switch (f) {
    case Factorization::Q1:
      return "q1";
    case Factorization::Q2:
      return "q2";
    case Factorization::Supervised:
      return "supervised";
  }
  return "?";
}

namespace {

torch::Tensor activate(const torch::Tensor& x, const NetSpec& spec) {
  switch (spec.activation) {
    case Activation::ReLU:
      return torch::relu(x);
    case Activation::LeakyReLU:
      return torch::leaky_relu(x, spec.leaky_slope);
    case Activation::Tanh:
      return torch::tanh(x);
    case Activation::ELU:
      return torch::elu(x);
  }
  return x;
}

int64_t downsampled(int64_t size) { return (size + 2 - 4) / 2 + 1; }

torch::Tensor flatten_rows(const torch::Tensor& x) { return x.reshape({x.size(0), -1}); }

torch::Tensor join(const torch::Tensor& features, const torch::Tensor& cond) {
  if (!cond.defined() || cond.size(1) == 0) {
    return features;
  }
  return torch::cat({features, cond.to(kReal)}, 1);
}

}  // namespace

FeatureTrunkImpl::FeatureTrunkImpl(const NetSpec& spec, ImageShape input, int64_t cond_dim)
    : spec_(spec), input_(input), cond_dim_(cond_dim) {
  int64_t features = input_.numel();
  if (spec_.kind == NetKind::Conv) {
    int64_t c = input_.channels;
    int64_t h = input_.height;
    int64_t w = input_.width;
    for (int64_t out : spec_.channels) {
      convs_->push_back(nn::Conv2d(nn::Conv2dOptions(c, out, 4).stride(2).padding(1)));
      c = out;
      h = downsampled(h);
      w = downsampled(w);
      if (h < 1 || w < 1) {
        throw ConfigError("conv net spec downsamples the input below 1x1");
      }
    }
    features = c * h * w;
  }
  int64_t width = features + cond_dim_;
  for (int64_t hidden : spec_.hidden) {
    dense_->push_back(nn::Linear(width, hidden));
    width = hidden;
  }
  output_dim_ = width;
  register_module("convs", convs_);
  register_module("dense", dense_);
}

torch::Tensor FeatureTrunkImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  const int64_t m = x.size(0);
  if (cond_dim_ > 0) {
    require_shape(cond, m, cond_dim_, "network conditioning input");
  }
  torch::Tensor h;
  if (spec_.kind == NetKind::Conv) {
    h = x.reshape({m, input_.channels, input_.height, input_.width});
    for (auto& conv : *convs_) {
      h = activate(conv->as<nn::Conv2d>()->forward(h), spec_);
    }
    h = flatten_rows(h);
  } else {
    h = flatten_rows(x);
    if (h.size(1) != input_.numel()) {
      throw DimensionError("network input has " + std::to_string(h.size(1)) +
                           " features, expected " + std::to_string(input_.numel()));
    }
  }
  h = join(h, cond_dim_ > 0 ? cond : torch::Tensor());
  for (auto& layer : *dense_) {
    h = activate(layer->as<nn::Linear>()->forward(h), spec_);
  }
  return h;
}

GaussianEncoderImpl::GaussianEncoderImpl(const NetSpec& spec, ImageShape input, int64_t cond_dim,
                                         int64_t out_dim)
    : out_dim_(out_dim) {
  trunk_ = register_module("trunk", FeatureTrunk(spec, input, cond_dim));
  mean_head_ = register_module("mean_head", nn::Linear(trunk_->output_dim(), out_dim));
  log_stddev_head_ = register_module("log_stddev_head", nn::Linear(trunk_->output_dim(), out_dim));
}

GaussianSample GaussianEncoderImpl::forward(const torch::Tensor& x, const torch::Tensor& cond,
                                            torch::Generator& rng, double noise_scale) {
  auto h = trunk_->forward(x.to(kReal), cond);
  GaussianSample out;
  out.mean = mean_head_->forward(h);
  out.log_stddev = log_stddev_head_->forward(h);
  if (noise_scale == 0.0) {
    out.sample = out.mean;
  } else {
    auto eps = torch::randn(out.mean.sizes(), rng, real_options());
    out.sample = out.mean + out.log_stddev.exp() * eps * noise_scale;
  }
  return out;
}

DecoderImpl::DecoderImpl(const NetSpec& spec, int64_t components, int64_t latent_dim,
                         ImageShape output)
    : spec_(spec), components_(components), latent_dim_(latent_dim), output_(output) {
  int64_t width = components + latent_dim;
  for (int64_t hidden : spec_.hidden) {
    dense_->push_back(nn::Linear(width, hidden));
    width = hidden;
  }
  if (spec_.kind == NetKind::Conv && !spec_.channels.empty()) {
    std::vector<int64_t> levels(spec_.channels.rbegin(), spec_.channels.rend());
    const auto scale = static_cast<int64_t>(1) << levels.size();
    seed_height_ = (output_.height + scale - 1) / scale;
    seed_width_ = (output_.width + scale - 1) / scale;
    dense_->push_back(nn::Linear(width, levels.front() * seed_height_ * seed_width_));
    for (size_t i = 0; i < levels.size(); ++i) {
      const int64_t out = i + 1 < levels.size() ? levels[i + 1] : output_.channels;
      deconvs_->push_back(
          nn::ConvTranspose2d(nn::ConvTranspose2dOptions(levels[i], out, 4).stride(2).padding(1)));
    }
  } else {
    dense_->push_back(nn::Linear(width, output_.numel()));
  }
  register_module("dense", dense_);
  register_module("deconvs", deconvs_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& y, const torch::Tensor& z) {
  require_shape(y, -1, components_, "decoder y");
  require_shape(z, y.size(0), latent_dim_, "decoder z");
  const int64_t m = y.size(0);
  auto h = torch::cat({y.to(kReal), z.to(kReal)}, 1);
  const bool conv = deconvs_->size() > 0;
  for (size_t i = 0; i < dense_->size(); ++i) {
    h = dense_[i]->as<nn::Linear>()->forward(h);
    const bool last = i + 1 == dense_->size();
    if (!last || conv) {
      h = activate(h, spec_);
    }
  }
  if (conv) {
    h = h.reshape({m, -1, seed_height_, seed_width_});
    for (size_t i = 0; i < deconvs_->size(); ++i) {
      h = deconvs_[i]->as<nn::ConvTranspose2d>()->forward(h);
      if (i + 1 < deconvs_->size()) {
        h = activate(h, spec_);
      }
    }
    const int64_t top = (h.size(2) - output_.height) / 2;
    const int64_t left = (h.size(3) - output_.width) / 2;
    h = h.slice(2, top, top + output_.height).slice(3, left, left + output_.width);
  }
  if (spec_.output == OutputActivation::Sigmoid) {
    h = torch::sigmoid(h);
  }
  return h.reshape({m, output_.channels, output_.height, output_.width});
}

DiscriminatorImpl::DiscriminatorImpl(const NetSpec& spec, ImageShape input, int64_t components,
                                     int64_t latent_dim)
    : components_(components), latent_dim_(latent_dim) {
  trunk_ = register_module("trunk", FeatureTrunk(spec, input, components + latent_dim));
  out_ = register_module("out", nn::Linear(trunk_->output_dim(), 1));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& x, const torch::Tensor& y,
                                        const torch::Tensor& z) {
  const int64_t m = x.size(0);
  require_shape(y, m, components_, "discriminator y");
  require_shape(z, m, latent_dim_, "discriminator z");
  auto h = trunk_->forward(x.to(kReal), torch::cat({y.to(kReal), z.to(kReal)}, 1));
  return out_->forward(h).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x, const torch::Tensor& y,
                                         const torch::Tensor& z) {
  return torch::sigmoid(logits(x, y, z));
}

void initialize_weights(torch::nn::Module& module, double stddev, torch::Generator& rng) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters(/*recurse=*/true)) {
    const auto& name = p.key();
    if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) {
      p.value().zero_();
    } else if (name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0) {
      p.value().normal_(0.0, stddev, rng);
    }
  }
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

bool parameters_finite(const torch::nn::Module& module) {
  for (const auto& p : module.parameters()) {
    if (!torch::isfinite(p).all().item<bool>()) return false;
  }
  return true;
}

InferredY sample_inference_y(const torch::Tensor& x, GaussianEncoder& encoder, torch::Generator& rng,
                             const torch::Tensor& cond, double noise_scale) {
  auto out = encoder->forward(x, cond, rng, noise_scale);
  require_finite(out.sample, "categorical logits h_y");
  return {out.sample, torch::softmax(out.sample, 1)};
}

torch::Tensor sample_inference_z(const torch::Tensor& x, const torch::Tensor& cond,
                                 GaussianEncoder& encoder, torch::Generator& rng,
                                 double noise_scale) {
  if (encoder->cond_dim() > 0) {
    require_shape(cond, x.size(0), encoder->cond_dim(), "sample_inference_z cond");
  }
  auto z = encoder->forward(x, cond, rng, noise_scale).sample;
  require_finite(z, "continuous latent z");
  return z;
}

InferenceSample AmmModel::infer(const torch::Tensor& x, torch::Generator& rng, double noise_scale) {
  InferenceSample out;
  if (factorization == Factorization::Q2) {
    out.z = sample_inference_z(x, {}, encoder_z, rng, noise_scale);
    auto y = sample_inference_y(x, encoder_y, rng, out.z, noise_scale);
    out.logits = y.logits;
    out.y = y.y;
  } else {
    auto y = sample_inference_y(x, encoder_y, rng, {}, noise_scale);
    out.logits = y.logits;
    out.y = y.y;
    out.z = sample_inference_z(x, y.logits, encoder_z, rng, noise_scale);
  }
  return out;
}

torch::Tensor AmmModel::infer_z_given_y(const torch::Tensor& x, const torch::Tensor& y,
                                        torch::Generator& rng, double noise_scale) {
  if (factorization == Factorization::Q2) {
    throw ConfigError("the labeled inference path q(z|x,y) needs the q1 factorization");
  }
  return sample_inference_z(x, y, encoder_z, rng, noise_scale);
}

AmmModel build_model(const ModelSpec& spec, uint64_t init_seed) {
  if (spec.components < 2 || spec.latent_dim < 1) {
    throw ConfigError("model needs K >= 2 and L >= 1");
  }
  AmmModel model;
  model.components = spec.components;
  model.latent_dim = spec.latent_dim;
  model.shape = spec.shape;
  model.factorization = spec.factorization;

  auto categorical = spec.class_probs.empty() ? CategoricalPrior::uniform(spec.components)
                                              : CategoricalPrior(spec.class_probs);
  if (categorical.size() != spec.components) {
    throw ConfigError("class probabilities have " + std::to_string(categorical.size()) +
                      " entries but K = " + std::to_string(spec.components));
  }
  auto means = build_means(spec.placement, spec.components, spec.latent_dim);
  auto stddevs = torch::full({spec.components, spec.latent_dim}, spec.prior_stddev, real_options());
  model.prior = MixturePrior(std::move(categorical), means, stddevs, spec.means_mode,
                             spec.learn_prior_stddev);

  const bool z_first = spec.factorization == Factorization::Q2;
  model.encoder_y = GaussianEncoder(spec.encoder, spec.shape, z_first ? spec.latent_dim : 0,
                                    spec.components);
  model.encoder_z = GaussianEncoder(spec.encoder, spec.shape, z_first ? 0 : spec.components,
                                    spec.latent_dim);
  model.decoder = Decoder(spec.decoder, spec.components, spec.latent_dim, spec.shape);
  model.discriminator =
      Discriminator(spec.discriminator, spec.shape, spec.components, spec.latent_dim);

  model.encoder_y->to(kReal);
  model.encoder_z->to(kReal);
  model.decoder->to(kReal);
  model.discriminator->to(kReal);

  auto rng = make_rng(init_seed);
  initialize_weights(*model.encoder_y, spec.encoder.init_std, rng);
  initialize_weights(*model.encoder_z, spec.encoder.init_std, rng);
  initialize_weights(*model.decoder, spec.decoder.init_std, rng);
  initialize_weights(*model.discriminator, spec.discriminator.init_std, rng);
  return model;
}

}  // namespace amm
