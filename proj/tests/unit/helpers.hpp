#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <filesystem>
#include <string>
#include <vector>

#include "amm/networks.hpp"

namespace amm::testing {

/// Small dense model on 2-vectors, used across the test suite.
inline ModelSpec small_spec(int64_t k = 3, int64_t l = 2, Factorization f = Factorization::Q1) {
  ModelSpec spec;
  spec.components = k;
  spec.latent_dim = l;
  spec.shape = {2, 1, 1};
  spec.factorization = f;
  spec.placement = CirclePlacement{3.0};
  spec.encoder.hidden = {16, 16};
  spec.decoder.hidden = {16, 16};
  spec.decoder.output = OutputActivation::Linear;
  spec.discriminator.hidden = {16, 16};
  return spec;
}

/// Small convolutional model on 1×8×8 images.
inline ModelSpec conv_spec(int64_t k = 3, int64_t l = 4) {
  ModelSpec spec;
  spec.components = k;
  spec.latent_dim = l;
  spec.shape = {1, 8, 8};
  NetSpec net;
  net.kind = NetKind::Conv;
  net.channels = {4, 8};
  net.hidden = {16};
  spec.encoder = net;
  spec.decoder = net;
  spec.discriminator = net;
  return spec;
}

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

inline std::vector<torch::Tensor> snapshot(const torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& p : module.parameters()) out.push_back(p.detach().clone());
  return out;
}

/// A fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("amm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

/// Clustering error by exhaustive search over all cluster→label bijections (K == C).
inline double brute_force_error(const std::vector<int64_t>& pred, const std::vector<int64_t>& truth,
                                int64_t k) {
  std::vector<int64_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  int64_t best = static_cast<int64_t>(pred.size());
  do {
    int64_t wrong = 0;
    for (size_t i = 0; i < pred.size(); ++i) wrong += perm[pred[i]] != truth[i];
    best = std::min(best, wrong);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return double(best) / double(pred.size());
}

/// Lloyd's k-means on N×D points, seeded with the farthest-point heuristic.
inline std::vector<int64_t> kmeans(const torch::Tensor& points, int64_t k, int iterations = 100) {
  auto x = points.reshape({points.size(0), -1}).to(torch::kFloat64);
  std::vector<int64_t> picks{0};
  auto dist = (x - x[0]).pow(2).sum(1);
  while (static_cast<int64_t>(picks.size()) < k) {
    picks.push_back(dist.argmax().item<int64_t>());
    dist = torch::minimum(dist, (x - x[picks.back()]).pow(2).sum(1));
  }
  auto centers = x.index_select(0, torch::tensor(picks));
  torch::Tensor assign;
  for (int it = 0; it < iterations; ++it) {
    assign = torch::cdist(x, centers).argmin(1);
    for (int64_t c = 0; c < k; ++c) {
      auto members = x.index_select(0, torch::nonzero(assign == c).flatten());
      if (members.size(0) > 0) centers[c] = members.mean(0);
    }
  }
  std::vector<int64_t> out(assign.data_ptr<int64_t>(), assign.data_ptr<int64_t>() + assign.numel());
  return out;
}

inline std::vector<int64_t> to_vector(const torch::Tensor& t) {
  auto c = t.to(torch::kLong).contiguous();
  return {c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + c.numel()};
}

}  // namespace amm::testing
