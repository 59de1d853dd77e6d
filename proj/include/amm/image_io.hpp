#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

namespace amm {

/// Tiles an N×C×H×W batch into a C×(rows·H + pad)×(cols·W + pad) canvas, row-major,
/// with `padding` pixels of background between tiles. Missing tiles stay blank.
/// Throws ArgumentError when N exceeds rows·cols.
torch::Tensor make_grid(const torch::Tensor& batch, int64_t rows, int64_t cols, int64_t padding = 1);

/// Writes a C×H×W image with values in [0,1] as 8-bit grayscale (C=1) or RGB (C=3) PNG.
/// Values are clamped and quantized with round(255·v).
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace amm
