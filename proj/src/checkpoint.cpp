#include "amm/checkpoint.hpp"

#include <fstream>

#include "amm/errors.hpp"

namespace fs = std::filesystem;

namespace amm {

namespace {

torch::Tensor int_tensor(int64_t v) { return torch::tensor(v, torch::kLong); }

int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
  torch::Tensor t;
  archive.read(key, t);
  return t.item<int64_t>();
}

void open_archive(const fs::path& path, torch::serialize::InputArchive& archive) {
  if (!fs::exists(path)) {
    throw CheckpointError("checkpoint not found: " + path.string());
  }
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() +
                          " (truncated or corrupt): " + e.what_without_backtrace());
  }
}

CheckpointInfo read_info(torch::serialize::InputArchive& archive, const fs::path& path) {
  CheckpointInfo info;
  try {
    info.version = read_int(archive, "format_version");
  } catch (const c10::Error&) {
    throw CheckpointError(path.string() + " is not a checkpoint (no format version)");
  }
  if (info.version != kCheckpointVersion) {
    throw CheckpointVersionError(path.string() + " has format version " +
                                 std::to_string(info.version) + ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  try {
    info.step = static_cast<long>(read_int(archive, "step"));
    info.components = read_int(archive, "components");
    info.latent_dim = read_int(archive, "latent_dim");
    torch::Tensor shape;
    archive.read("shape", shape);
    info.shape = {shape[0].item<int64_t>(), shape[1].item<int64_t>(), shape[2].item<int64_t>()};
    info.factorization = static_cast<Factorization>(read_int(archive, "factorization"));
    torch::Tensor best;
    archive.read("best_validation", best);
    info.best_validation = best.item<double>();
    c10::IValue text;
    archive.read("config", text);
    info.config_text = text.toStringRef();
  } catch (const c10::Error& e) {
    throw CheckpointError("incomplete checkpoint " + path.string() + ": " +
                          e.what_without_backtrace());
  }
  return info;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state, const std::string& config_text,
                     double best_validation) {
  auto& model = const_cast<TrainState&>(state).model();
  torch::serialize::OutputArchive archive;
  archive.write("format_version", int_tensor(kCheckpointVersion));
  archive.write("components", int_tensor(model.components));
  archive.write("latent_dim", int_tensor(model.latent_dim));
  archive.write("shape", torch::tensor({model.shape.channels, model.shape.height, model.shape.width},
                                       torch::kLong));
  archive.write("factorization", int_tensor(static_cast<int64_t>(model.factorization)));
  archive.write("best_validation", torch::tensor(best_validation, torch::kFloat64));
  archive.write("config", c10::IValue(config_text));
  state.save(archive);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto partial = fs::path(path.string() + ".partial");
  try {
    archive.save_to(partial.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  fs::rename(partial, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  torch::serialize::InputArchive archive;
  open_archive(path, archive);
  return read_info(archive, path);
}

TrainState load_checkpoint(const fs::path& path, const ModelSpec& spec,
                           const OptimizerConfig& optimizer, const PenaltyConfig& penalty,
                           int64_t batch_size, CheckpointInfo* info_out) {
  torch::serialize::InputArchive archive;
  open_archive(path, archive);
  auto info = read_info(archive, path);
  auto conflict = [&](const std::string& what, const std::string& saved, const std::string& wanted) {
    throw CheckpointConflictError(path.string() + ": checkpoint has " + what + " = " + saved +
                                  " but the configuration asks for " + wanted);
  };
  if (info.components != spec.components) {
    conflict("K", std::to_string(info.components), std::to_string(spec.components));
  }
  if (info.latent_dim != spec.latent_dim) {
    conflict("L", std::to_string(info.latent_dim), std::to_string(spec.latent_dim));
  }
  if (!(info.shape == spec.shape)) {
    auto str = [](const ImageShape& s) {
      return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
             std::to_string(s.width);
    };
    conflict("observation shape", str(info.shape), str(spec.shape));
  }
  if (info.factorization != spec.factorization) {
    conflict("factorization", to_string(info.factorization), to_string(spec.factorization));
  }
  TrainState state(spec, optimizer, penalty, batch_size, 0);
  try {
    state.load(archive);
  } catch (const c10::Error& e) {
    throw CheckpointConflictError(path.string() + " does not match the configured networks: " +
                                  e.what_without_backtrace());
  }
  if (info_out) *info_out = info;
  return state;
}

}  // namespace amm
