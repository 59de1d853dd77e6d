#include "amm/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "amm/errors.hpp"
#include "amm/tensor.hpp"

namespace amm {

torch::Tensor make_grid(const torch::Tensor& batch, int64_t rows, int64_t cols, int64_t padding) {
  if (batch.dim() != 4) {
    throw DimensionError("make_grid expects an N×C×H×W batch");
  }
  if (rows < 1 || cols < 1 || padding < 0 || batch.size(0) > rows * cols) {
    throw ArgumentError("grid geometry does not fit the batch");
  }
  const int64_t c = batch.size(1), h = batch.size(2), w = batch.size(3);
  auto canvas = torch::zeros({c, rows * (h + padding) + padding, cols * (w + padding) + padding},
                             real_options());
  auto src = batch.detach().to(kReal);
  for (int64_t i = 0; i < batch.size(0); ++i) {
    const int64_t top = padding + (i / cols) * (h + padding);
    const int64_t left = padding + (i % cols) * (w + padding);
    canvas.slice(1, top, top + h).slice(2, left, left + w).copy_(src[i]);
  }
  return canvas;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw DimensionError("write_png expects a 1×H×W or 3×H×W image");
  }
  const int64_t channels = image.size(0), height = image.size(1), width = image.size(2);
  auto bytes = (image.detach().to(kReal).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) {
    throw IoError("cannot write " + path.string());
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* data = bytes.data_ptr<uint8_t>();
  std::vector<png_bytep> row_ptrs(height);
  for (int64_t r = 0; r < height; ++r) row_ptrs[r] = data + r * width * channels;
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace amm
