#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "amm/networks.hpp"

namespace amm {

enum class SplitTag { Train, Val, Test };

/// N observations stored as an N×C×H×W real tensor plus optional integer labels.
struct Dataset {
  torch::Tensor images;
  std::optional<torch::Tensor> labels;  ///< int64, N
  SplitTag split = SplitTag::Train;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  ImageShape shape() const;
  bool has_labels() const { return labels.has_value(); }

  /// Rows selected by an int64 index vector.
  Dataset subset(const torch::Tensor& indices) const;
};

/// Contents of an IDX file: u8 image tensors (magic 0x00000803) are scaled to
/// [0,1]; u8 label vectors (magic 0x00000801) are returned as int64.
struct IdxArray {
  std::vector<int64_t> dims;
  torch::Tensor values;
};

/// Throws FormatError on a wrong magic number or a truncated payload.
IdxArray load_idx(const std::filesystem::path& path);

/// Writes a u8 IDX file. With `images` set, `values` holds intensities in [0,1]
/// (written as round(255·v), magic 0x00000803); otherwise a label vector of
/// integers in [0,255] (magic 0x00000801).
void write_idx(const std::filesystem::path& path, const torch::Tensor& values, bool images);

/// MNIST-style image + label IDX pair.
Dataset load_mnist(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);

/// The raw RGB container: "AMMRAW1\n", little-endian u32 N, H, W, C, then
/// N·H·W·C channel-last u8 pixels, then N label bytes in [0,9].
inline constexpr char kRawMagic[] = "AMMRAW1\n";

Dataset load_raw_rgb(const std::filesystem::path& path);

/// Writes a labeled dataset in the raw container. Pixels are quantized with
/// round(255·v); labels must lie in [0,9].
void write_raw_rgb(const std::filesystem::path& path, const Dataset& dataset);

/// K unit-variance Gaussian blobs with means on a circle of radius `separation`
/// in the first two coordinates, `per_component` points each. Observations are
/// raw `dim`-vectors (shape dim×1×1), not intensities in [0,1].
Dataset make_synthetic_mixture(int64_t components, int64_t per_component, int64_t dim,
                               double separation, uint64_t seed);

struct SplitSpec {
  int64_t validation_count = 0;
  int64_t labeled_count = 0;
  uint64_t seed = 0;
  /// Draw labeled_count / C examples from each of the C classes instead of a
  /// uniform draw; labeled_count must then be a multiple of C.
  bool stratified = false;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset labeled;
};

/// Random disjoint train/validation split, then a labeled subset drawn without
/// replacement from the training part. Throws ArgumentError when the spec does not fit.
SplitResult split_and_select(const Dataset& dataset, const SplitSpec& spec);

/// Stateless minibatch schedule: the batch for a given step depends only on
/// (n, batch size, seed, step), so training can resume from any step. The index
/// stream is a concatenation of per-epoch permutations, so batches larger than
/// the dataset are fine.
class BatchSampler {
 public:
  BatchSampler(int64_t n, int64_t batch_size, uint64_t seed);

  /// int64 indices of the batch used at `step`.
  torch::Tensor indices(long step) const;

 private:
  torch::Tensor permutation(int64_t epoch) const;

  int64_t n_;
  int64_t batch_size_;
  uint64_t seed_;
};

}  // namespace amm
