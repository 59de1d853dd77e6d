#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace amm {

/// All model arithmetic runs in double precision.
inline constexpr auto kReal = torch::kFloat64;

inline torch::TensorOptions real_options() { return torch::TensorOptions().dtype(kReal); }

/// A seeded CPU random stream.
inline torch::Generator make_rng(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

/// One-hot encoding of an integer index vector as a real M×K matrix.
torch::Tensor one_hot(const torch::Tensor& indices, int64_t classes);

/// Throws DimensionError unless `t` is 2-D with the given shape (-1 matches anything).
void require_shape(const torch::Tensor& t, int64_t rows, int64_t cols, const std::string& what);

/// Throws NumericError if `t` holds a NaN or infinity.
void require_finite(const torch::Tensor& t, const std::string& what);

}  // namespace amm
