#include "amm/data.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "amm/errors.hpp"

namespace amm {

namespace fs = std::filesystem;

namespace {

constexpr uint32_t kIdxLabels = 0x00000801;
constexpr uint32_t kIdxImages = 0x00000803;

std::vector<uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t at) {
  return (uint32_t{b[at]} << 24) | (uint32_t{b[at + 1]} << 16) | (uint32_t{b[at + 2]} << 8) |
         uint32_t{b[at + 3]};
}

uint32_t read_le32(const std::vector<uint8_t>& b, size_t at) {
  return uint32_t{b[at]} | (uint32_t{b[at + 1]} << 8) | (uint32_t{b[at + 2]} << 16) |
         (uint32_t{b[at + 3]} << 24);
}

void push_be32(std::vector<uint8_t>& b, uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<uint8_t>(v >> shift));
}

void push_le32(std::vector<uint8_t>& b, uint32_t v) {
  for (int shift = 0; shift <= 24; shift += 8) b.push_back(static_cast<uint8_t>(v >> shift));
}

torch::Tensor bytes_to_tensor(const uint8_t* data, std::vector<int64_t> shape) {
  return torch::from_blob(const_cast<uint8_t*>(data), shape, torch::kUInt8).clone();
}

torch::Tensor quantize(const torch::Tensor& unit) {
  return (unit.to(kReal) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
}

}  // namespace

ImageShape Dataset::shape() const {
  if (!images.defined() || images.dim() != 4) {
    throw DimensionError("dataset images must be an N×C×H×W tensor");
  }
  return {images.size(1), images.size(2), images.size(3)};
}

Dataset Dataset::subset(const torch::Tensor& indices) const {
  Dataset out;
  out.split = split;
  out.images = images.index_select(0, indices);
  if (labels) out.labels = labels->index_select(0, indices);
  return out;
}

IdxArray load_idx(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 4) {
    throw FormatError(path.string() + ": file too short for an IDX header");
  }
  const uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImages && magic != kIdxLabels) {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "0x%08x", magic);
    throw FormatError(path.string() + ": unsupported IDX magic " + hex);
  }
  const size_t ndims = bytes[3];
  const size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw FormatError(path.string() + ": truncated IDX header");
  }
  IdxArray out;
  size_t payload = 1;
  for (size_t i = 0; i < ndims; ++i) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * i));
    payload *= static_cast<size_t>(out.dims.back());
  }
  const size_t actual = bytes.size() - header;
  if (actual != payload) {
    throw FormatError(path.string() + ": IDX payload has " + std::to_string(actual) +
                      " bytes, expected " + std::to_string(payload));
  }
  auto raw = bytes_to_tensor(bytes.data() + header, out.dims);
  out.values = magic == kIdxImages ? raw.to(kReal) / 255.0 : raw.to(torch::kLong);
  return out;
}

void write_idx(const fs::path& path, const torch::Tensor& values, bool images) {
  if (values.dim() != (images ? 3 : 1)) {
    throw DimensionError(images ? "IDX images must be N×H×W" : "IDX labels must be a vector");
  }
  std::vector<uint8_t> bytes;
  push_be32(bytes, images ? kIdxImages : kIdxLabels);
  for (int64_t d : values.sizes()) push_be32(bytes, static_cast<uint32_t>(d));
  auto u8 = images ? quantize(values) : values.to(torch::kLong).clamp(0, 255).to(torch::kUInt8).contiguous();
  const auto* p = u8.data_ptr<uint8_t>();
  bytes.insert(bytes.end(), p, p + u8.numel());
  write_bytes(path, bytes);
}

Dataset load_mnist(const fs::path& images, const std::optional<fs::path>& labels) {
  auto img = load_idx(images);
  if (img.dims.size() != 3 || !img.values.is_floating_point()) {
    throw FormatError(images.string() + ": expected an N×H×W image tensor");
  }
  Dataset out;
  out.images = img.values.unsqueeze(1);
  if (labels) {
    auto lab = load_idx(*labels);
    if (lab.dims.size() != 1 || lab.values.is_floating_point()) {
      throw FormatError(labels->string() + ": expected a label vector");
    }
    if (lab.dims[0] != img.dims[0]) {
      throw FormatError("label count " + std::to_string(lab.dims[0]) + " does not match image count " +
                        std::to_string(img.dims[0]));
    }
    out.labels = lab.values;
  }
  return out;
}

Dataset load_raw_rgb(const fs::path& path) {
  const auto bytes = read_bytes(path);
  constexpr size_t magic_len = sizeof(kRawMagic) - 1;
  constexpr size_t header = magic_len + 16;
  if (bytes.size() < header || std::memcmp(bytes.data(), kRawMagic, magic_len) != 0) {
    throw FormatError(path.string() + ": not a raw RGB container (bad magic)");
  }
  const int64_t n = read_le32(bytes, magic_len);
  const int64_t h = read_le32(bytes, magic_len + 4);
  const int64_t w = read_le32(bytes, magic_len + 8);
  const int64_t c = read_le32(bytes, magic_len + 12);
  const size_t pixels = static_cast<size_t>(n * h * w * c);
  const size_t expected = pixels + static_cast<size_t>(n);
  if (bytes.size() - header != expected) {
    throw FormatError(path.string() + ": payload has " + std::to_string(bytes.size() - header) +
                      " bytes, expected " + std::to_string(expected));
  }
  Dataset out;
  out.images = bytes_to_tensor(bytes.data() + header, {n, h, w, c}).permute({0, 3, 1, 2}).contiguous().to(kReal) /
               255.0;
  auto labels = bytes_to_tensor(bytes.data() + header + pixels, {n}).to(torch::kLong);
  if (n > 0 && labels.max().item<int64_t>() > 9) {
    throw FormatError(path.string() + ": label " + std::to_string(labels.max().item<int64_t>()) +
                      " outside [0,9]");
  }
  out.labels = labels;
  return out;
}

void write_raw_rgb(const fs::path& path, const Dataset& dataset) {
  if (!dataset.labels) {
    throw ArgumentError("raw RGB container needs labels");
  }
  const auto shape = dataset.shape();
  auto labels = dataset.labels->to(torch::kLong).contiguous();
  if (labels.numel() > 0 && (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() > 9)) {
    throw ArgumentError("raw RGB labels must lie in [0,9]");
  }
  std::vector<uint8_t> bytes(kRawMagic, kRawMagic + sizeof(kRawMagic) - 1);
  push_le32(bytes, static_cast<uint32_t>(dataset.size()));
  push_le32(bytes, static_cast<uint32_t>(shape.height));
  push_le32(bytes, static_cast<uint32_t>(shape.width));
  push_le32(bytes, static_cast<uint32_t>(shape.channels));
  auto pixels = quantize(dataset.images.permute({0, 2, 3, 1}));
  const auto* p = pixels.data_ptr<uint8_t>();
  bytes.insert(bytes.end(), p, p + pixels.numel());
  auto* l = labels.data_ptr<int64_t>();
  for (int64_t i = 0; i < labels.numel(); ++i) bytes.push_back(static_cast<uint8_t>(l[i]));
  write_bytes(path, bytes);
}

Dataset make_synthetic_mixture(int64_t components, int64_t per_component, int64_t dim,
                               double separation, uint64_t seed) {
  if (components < 2) throw ArgumentError("synthetic mixture needs at least two components");
  if (dim < 2) throw ArgumentError("synthetic mixture needs dim >= 2");
  if (per_component < 1) throw ArgumentError("synthetic mixture needs per_component >= 1");
  auto rng = make_rng(seed);
  auto means = torch::zeros({components, dim}, real_options());
  for (int64_t k = 0; k < components; ++k) {
    const double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(components);
    means[k][0] = separation * std::cos(angle);
    means[k][1] = separation * std::sin(angle);
  }
  auto labels = torch::arange(components, torch::kLong).repeat_interleave(per_component);
  auto points = means.index_select(0, labels) +
                torch::randn({components * per_component, dim}, rng, real_options());
  Dataset out;
  out.images = points.reshape({-1, dim, 1, 1});
  out.labels = labels;
  return out;
}

SplitResult split_and_select(const Dataset& dataset, const SplitSpec& spec) {
  const int64_t n = dataset.size();
  if (spec.validation_count < 0 || spec.validation_count >= n) {
    throw ArgumentError("validation count " + std::to_string(spec.validation_count) +
                        " must be below the dataset size " + std::to_string(n));
  }
  const int64_t train_n = n - spec.validation_count;
  if (spec.labeled_count < 0 || spec.labeled_count > train_n) {
    throw ArgumentError("labeled subset of " + std::to_string(spec.labeled_count) +
                        " exceeds the training size " + std::to_string(train_n));
  }
  if (spec.labeled_count > 0 && !dataset.labels) {
    throw ArgumentError("a labeled subset needs a labeled dataset");
  }
  auto rng = make_rng(spec.seed);
  auto perm = torch::randperm(n, rng, torch::kLong);
  SplitResult out;
  out.val = dataset.subset(perm.slice(0, 0, spec.validation_count));
  out.val.split = SplitTag::Val;
  out.train = dataset.subset(perm.slice(0, spec.validation_count, n));
  out.train.split = SplitTag::Train;
  auto order = torch::randperm(train_n, rng, torch::kLong);
  if (!spec.stratified || spec.labeled_count == 0) {
    out.labeled = out.train.subset(order.slice(0, 0, spec.labeled_count));
    return out;
  }
  auto labels = out.train.labels->index_select(0, order);
  const int64_t classes = dataset.labels->max().item<int64_t>() + 1;
  if (spec.labeled_count % classes != 0) {
    throw ArgumentError("stratified labeled subset of " + std::to_string(spec.labeled_count) +
                        " is not a multiple of the " + std::to_string(classes) + " classes");
  }
  const int64_t per_class = spec.labeled_count / classes;
  std::vector<torch::Tensor> picks;
  for (int64_t c = 0; c < classes; ++c) {
    auto members = order.index_select(0, torch::nonzero(labels == c).flatten());
    if (members.size(0) < per_class) {
      throw ArgumentError("class " + std::to_string(c) + " has fewer than " +
                          std::to_string(per_class) + " training examples");
    }
    picks.push_back(members.slice(0, 0, per_class));
  }
  out.labeled = out.train.subset(torch::cat(picks));
  return out;
}

BatchSampler::BatchSampler(int64_t n, int64_t batch_size, uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (n_ < 1 || batch_size_ < 1) {
    throw ArgumentError("batch sampler needs a nonempty dataset and a positive batch size");
  }
}

torch::Tensor BatchSampler::permutation(int64_t epoch) const {
  // splitmix64 of (seed, epoch) so neighbouring epochs get unrelated streams.
  uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  auto rng = make_rng(z);
  return torch::randperm(n_, rng, torch::kLong);
}

torch::Tensor BatchSampler::indices(long step) const {
  const int64_t begin = static_cast<int64_t>(step) * batch_size_;
  const int64_t end = begin + batch_size_;
  std::vector<torch::Tensor> parts;
  for (int64_t pos = begin; pos < end;) {
    const int64_t epoch = pos / n_;
    const int64_t offset = pos % n_;
    const int64_t take = std::min(n_ - offset, end - pos);
    parts.push_back(permutation(epoch).slice(0, offset, offset + take));
    pos += take;
  }
  return torch::cat(parts);
}

}  // namespace amm
