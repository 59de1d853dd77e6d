#include "amm/priors.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "amm/errors.hpp"

namespace amm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

CategoricalPrior::CategoricalPrior(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw ArgumentError("categorical prior needs at least two classes");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) {
      throw ArgumentError("categorical prior has a negative or NaN probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ArgumentError("categorical prior probabilities sum to " + std::to_string(total));
  }
}

CategoricalPrior CategoricalPrior::uniform(int64_t components) {
  if (components < 2) {
    throw ArgumentError("categorical prior needs at least two classes");
  }
  return CategoricalPrior(std::vector<double>(components, 1.0 / static_cast<double>(components)));
}

CategoricalPrior CategoricalPrior::from_labels(const torch::Tensor& labels, int64_t components) {
  if (labels.numel() == 0) {
    throw ArgumentError("cannot estimate class frequencies from an empty label set");
  }
  std::vector<double> counts(components, 0.0);
  auto flat = labels.to(torch::kLong).contiguous();
  auto acc = flat.accessor<int64_t, 1>();
  for (int64_t i = 0; i < acc.size(0); ++i) {
    if (acc[i] < 0 || acc[i] >= components) {
      throw IndexError("label " + std::to_string(acc[i]) + " outside [0, " +
                       std::to_string(components) + ")");
    }
    counts[acc[i]] += 1.0;
  }
  const double n = static_cast<double>(acc.size(0));
  for (double& c : counts) c /= n;
  // Renormalize against rounding so the constructor's 1e-9 check holds.
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (double& c : counts) c /= total;
  return CategoricalPrior(std::move(counts));
}

torch::Tensor CategoricalPrior::probs_tensor() const {
  return torch::tensor(probs_, real_options());
}

torch::Tensor sample_categorical(const CategoricalPrior& prior, int64_t count, torch::Generator& rng) {
  if (count < 1) {
    throw ArgumentError("sample_categorical: count must be positive");
  }
  auto idx = torch::multinomial(prior.probs_tensor(), count, /*replacement=*/true, rng);
  return amm::one_hot(idx, prior.size());
}

std::vector<double> GridAxis::points() const {
  if (!(step > 0.0) || stop < start) {
    throw ConfigError("grid axis needs step > 0 and stop >= start");
  }
  std::vector<double> out;
  const auto n = static_cast<int64_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (int64_t i = 0; i < n; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

GridPlacement svhn_cluster_grid() {
  return GridPlacement{{{-6.0, 6.0, 6.0}, {-6.0, 6.0, 6.0}, {-3.0, 3.0, 6.0}}};
}

TablePlacement svhn_digit_table() {
  return TablePlacement{{
      {-3, 3, -3, -3},
      {-3, -3, 3, 3},
      {-3, 3, 3, -3},
      {3, -3, -3, -3},
      {-3, -3, 3, -3},
      {3, -3, 3, -3},
      {3, 3, 3, -3},
      {-3, 3, 3, 3},
      {3, 3, -3, -3},
      {-3, -3, -3, -3},
  }};
}

namespace {

torch::Tensor rows_to_means(const std::vector<std::vector<double>>& rows, int64_t components,
                            int64_t dim, const char* kind) {
  if (static_cast<int64_t>(rows.size()) != components) {
    throw ConfigError(std::string(kind) + " placement yields " + std::to_string(rows.size()) +
                      " means but the prior has " + std::to_string(components) + " components");
  }
  auto means = torch::zeros({components, dim}, real_options());
  auto acc = means.accessor<double, 2>();
  for (int64_t k = 0; k < components; ++k) {
    if (static_cast<int64_t>(rows[k].size()) > dim) {
      throw ConfigError(std::string(kind) + " placement row " + std::to_string(k) + " has " +
                        std::to_string(rows[k].size()) + " coordinates but the latent dimension is " +
                        std::to_string(dim));
    }
    for (size_t j = 0; j < rows[k].size(); ++j) acc[k][j] = rows[k][j];
  }
  return means;
}

}  // namespace

torch::Tensor build_means(const MeanPlacement& placement, int64_t components, int64_t dim) {
  if (components < 1 || dim < 1) {
    throw ConfigError("mean placement needs positive K and L");
  }
  struct Builder {
    int64_t k;
    int64_t l;

    torch::Tensor operator()(const ZerosPlacement&) const {
      return torch::zeros({k, l}, real_options());
    }
    torch::Tensor operator()(const GridPlacement& grid) const {
      std::vector<std::vector<double>> rows{{}};
      for (const auto& axis : grid.axes) {
        std::vector<std::vector<double>> next;
        for (const auto& prefix : rows) {
          for (double v : axis.points()) {
            auto row = prefix;
            row.push_back(v);
            next.push_back(std::move(row));
          }
        }
        rows = std::move(next);
      }
      return rows_to_means(rows, k, l, "grid");
    }
    torch::Tensor operator()(const TablePlacement& table) const {
      return rows_to_means(table.rows, k, l, "table");
    }
    torch::Tensor operator()(const RandomPlacement& random) const {
      auto rng = make_rng(random.seed);
      return torch::randn({k, l}, rng, real_options()) * random.scale;
    }
    torch::Tensor operator()(const CirclePlacement& circle) const {
      if (l < 2) {
        throw ConfigError("circle placement needs a latent dimension of at least 2");
      }
      std::vector<std::vector<double>> rows;
      for (int64_t i = 0; i < k; ++i) {
        const double angle = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(k);
        rows.push_back({circle.radius * std::cos(angle), circle.radius * std::sin(angle)});
      }
      return rows_to_means(rows, k, l, "circle");
    }
  };
  return std::visit(Builder{components, dim}, placement);
}

MixturePriorImpl::MixturePriorImpl(CategoricalPrior categorical, torch::Tensor means,
                                   torch::Tensor stddevs, MeansMode mode, bool learn_stddevs)
    : categorical_(std::move(categorical)), mode_(mode), learn_stddevs_(learn_stddevs) {
  const int64_t k = categorical_.size();
  require_shape(means, k, -1, "mixture means");
  require_shape(stddevs, k, means.size(1), "mixture stddevs");
  means = means.to(kReal).clone();
  auto log_sd = stddevs.to(kReal).clamp_min(kMinStddev).log();
  if (mode_ == MeansMode::Learned) {
    means_ = register_parameter("means", means);
  } else {
    means_ = register_buffer("means", means);
  }
  if (learn_stddevs_) {
    log_stddevs_ = register_parameter("log_stddevs", log_sd);
  } else {
    log_stddevs_ = register_buffer("log_stddevs", log_sd);
  }
}

torch::Tensor MixturePriorImpl::stddevs() const {
  return log_stddevs_.exp().clamp_min(kMinStddev);
}

torch::Tensor MixturePriorImpl::forward(const torch::Tensor& y, torch::Generator& rng,
                                        double noise_scale) {
  require_shape(y, -1, components(), "sample_mixture_z y");
  auto yr = y.to(kReal);
  auto mu = yr.matmul(means_);
  if (noise_scale == 0.0) {
    return mu;
  }
  auto sigma = yr.matmul(stddevs());
  auto eps = torch::randn(mu.sizes(), rng, real_options());
  return mu + sigma * eps * noise_scale;
}

double MixturePriorImpl::log_component_density(std::span<const double> z, int64_t k) const {
  if (k < 0 || k >= components()) {
    throw IndexError("component index " + std::to_string(k) + " outside [0, " +
                     std::to_string(components()) + ")");
  }
  const int64_t l = dim();
  if (static_cast<int64_t>(z.size()) != l) {
    throw DimensionError("log_component_density: z has length " + std::to_string(z.size()) +
                         ", expected " + std::to_string(l));
  }
  auto mu = means_.detach().contiguous();
  auto sd = stddevs().detach().contiguous();
  auto mu_acc = mu.accessor<double, 2>();
  auto sd_acc = sd.accessor<double, 2>();
  double log_p = -0.5 * static_cast<double>(l) * kLog2Pi;
  for (int64_t j = 0; j < l; ++j) {
    const double s = sd_acc[k][j];
    const double d = z[j] - mu_acc[k][j];
    log_p -= std::log(s) + d * d / (2.0 * s * s);
  }
  return log_p;
}

torch::Tensor MixturePriorImpl::log_joint(const torch::Tensor& z) const {
  require_shape(z, -1, dim(), "log_joint z");
  torch::NoGradGuard no_grad;
  auto mu = means_.detach();                                  // K×L
  auto sd = stddevs().detach();                               // K×L
  auto diff = (z.to(kReal).unsqueeze(1) - mu.unsqueeze(0)) / sd.unsqueeze(0);  // M×K×L
  auto log_norm = -0.5 * static_cast<double>(dim()) * kLog2Pi - sd.log().sum(1);  // K
  auto log_pi = categorical_.probs_tensor().log();
  return log_norm.unsqueeze(0) - 0.5 * diff.pow(2).sum(2) + log_pi.unsqueeze(0);
}

int64_t MixturePriorImpl::bayes_classify(std::span<const double> z) const {
  const auto& probs = categorical_.probs();
  int64_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int64_t k = 0; k < components(); ++k) {
    const double score = log_component_density(z, k) + std::log(probs[k]);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

std::vector<int64_t> MixturePriorImpl::bayes_classify(const torch::Tensor& z) const {
  auto scores = log_joint(z).contiguous();
  auto acc = scores.accessor<double, 2>();
  std::vector<int64_t> out(scores.size(0), 0);
  for (int64_t i = 0; i < scores.size(0); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int64_t k = 0; k < scores.size(1); ++k) {
      if (acc[i][k] > best) {
        best = acc[i][k];
        out[i] = k;
      }
    }
  }
  return out;
}

torch::Tensor sample_mixture_z(MixturePrior& prior, const torch::Tensor& y, torch::Generator& rng,
                               double noise_scale) {
  return prior->forward(y, rng, noise_scale);
}

}  // namespace amm
