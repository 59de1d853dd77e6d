#include "amm/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "amm/checkpoint.hpp"
#include "amm/config.hpp"
#include "amm/errors.hpp"
#include "amm/eval.hpp"
#include "amm/image_io.hpp"
#include "amm/log.hpp"
#include "amm/trainer.hpp"

namespace fs = std::filesystem;

namespace amm {

Dataset read_pixel_csv(const fs::path& path, int64_t height, int64_t width, int64_t channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw ArgumentError("pixel CSV needs a positive height, width and channel count");
  }
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  const int64_t n_pixels = height * width * channels;
  std::vector<uint8_t> pixels;
  std::vector<int64_t> labels;
  std::string line;
  for (long line_no = 1; std::getline(in, line); ++line_no) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<long> values;
    while (std::getline(row, cell, ',')) {
      try {
        size_t used = 0;
        values.push_back(std::stol(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": '" + cell +
                          "' is not an integer");
      }
    }
    if (static_cast<int64_t>(values.size()) != n_pixels + 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(n_pixels + 1) + " fields, found " +
                        std::to_string(values.size()));
    }
    long label = values[0] == 10 ? 0 : values[0];
    if (label < 0 || label > 9) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": label " +
                        std::to_string(values[0]) + " outside [0,10]");
    }
    labels.push_back(label);
    for (int64_t i = 1; i <= n_pixels; ++i) {
      if (values[i] < 0 || values[i] > 255) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": pixel value " +
                          std::to_string(values[i]) + " outside [0,255]");
      }
      pixels.push_back(static_cast<uint8_t>(values[i]));
    }
  }
  const auto n = static_cast<int64_t>(labels.size());
  Dataset out;
  out.images = torch::from_blob(pixels.data(), {n, height, width, channels}, torch::kUInt8)
                   .permute({0, 3, 1, 2})
                   .to(kReal)
                   .div(255.0)
                   .contiguous();
  out.labels = torch::tensor(labels, torch::kLong);
  return out;
}

namespace {

struct Common {
  std::string config;
  std::string out = "run";
  std::optional<uint64_t> seed;
};

struct Loaded {
  RunConfig config;
  PreparedData data;
  std::optional<TrainState> state;
};

RunConfig read_config(const Common& common) {
  auto config = load_config(common.config);
  if (common.seed) config.seed = *common.seed;
  return config;
}

Loaded load_model(const Common& common, const std::string& checkpoint) {
  Loaded out{read_config(common), {}, std::nullopt};
  out.data = prepare_data(out.config);
  const auto spec = resolve_model(out.config, out.data);
  const fs::path path = checkpoint.empty() ? fs::path(common.out) / "final.pt" : fs::path(checkpoint);
  out.state.emplace(load_checkpoint(path, spec, out.config.optimizer, out.config.penalty,
                                    out.config.batch_size));
  return out;
}

const Dataset& pick_split(const PreparedData& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (data.test.size() == 0) {
    throw ConfigError("no test data configured; choose --split train or val");
  }
  return data.test;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Vector observations are written as CSV rows (tag, then the coordinates);
/// images as a PNG grid with the given geometry.
void write_batch(const fs::path& path, const torch::Tensor& batch, int64_t rows, int64_t cols,
                 const std::vector<std::string>& tags) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool vector = batch.size(2) == 1 && batch.size(3) == 1;
  if (!vector) {
    write_png(path, make_grid(batch, rows, cols));
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  auto flat = batch.reshape({batch.size(0), -1}).contiguous();
  out << "tag";
  for (int64_t j = 0; j < flat.size(1); ++j) out << ",x" << j;
  out << '\n';
  auto acc = flat.accessor<double, 2>();
  for (int64_t i = 0; i < flat.size(0); ++i) {
    out << tags[i];
    for (int64_t j = 0; j < flat.size(1); ++j) out << ',' << fmt_double(acc[i][j]);
    out << '\n';
  }
}

fs::path output_file(const std::string& out_dir, const std::string& stem, const Dataset& like) {
  const bool vector = like.shape().is_vector();
  return fs::path(out_dir) / (stem + (vector ? ".csv" : ".png"));
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "run configuration (YAML)")->required();
  cmd->add_option("--out", common.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", common.seed, "overrides optim.seed");
}

int convert_data(const std::string& format, const std::string& input, const std::string& labels,
                 int64_t height, int64_t width, int64_t channels, const std::string& out) {
  Dataset data;
  if (format == "idx") {
    if (labels.empty()) throw ConfigError("convert-data --format idx needs --labels");
    data = load_mnist(input, fs::path(labels));
  } else {
    data = read_pixel_csv(input, height, width, channels);
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_raw_rgb(out, data);
  std::cout << "wrote " << data.size() << " examples to " << out << '\n';
  return 0;
}

int run_train(const Common& common, const std::string& mode, const std::string& resume) {
  auto config = read_config(common);
  auto data = prepare_data(config);
  TrainOptions options;
  options.mode = mode == "samm" ? TrainMode::Samm : TrainMode::Amm;
  options.out_dir = common.out;
  if (!resume.empty()) options.resume = fs::path(resume);
  auto summary = train(config, data, options);
  std::cout << "trained to step " << summary.steps << "; final checkpoint "
            << summary.final_checkpoint.string() << '\n';
  return 0;
}

int run_eval(const Common& common, const std::string& checkpoint, const std::string& split) {
  auto loaded = load_model(common, checkpoint);
  const auto& data = pick_split(loaded.data, split);
  if (!data.labels) throw ConfigError("evaluation needs labeled data");
  auto& model = loaded.state->model();
  auto report = evaluate(model, data, loaded.config.eval.assignment);
  std::cout << "split=" << split << " step=" << loaded.state->step()
            << " cluster_error=" << fmt_double(report.cluster_error)
            << " classification_error=" << fmt_double(report.classification_error)
            << " bayes_error=" << fmt_double(report.bayes_error)
            << " bayes_agreement=" << fmt_double(report.bayes_agreement) << '\n';
  std::cout << "cluster matrix (rows: components, columns: labels)\n";
  for (int64_t k = 0; k < report.matrix.clusters(); ++k) {
    for (int64_t c = 0; c < report.matrix.classes(); ++c) {
      std::cout << (c ? " " : "") << report.matrix.at(k, c);
    }
    std::cout << '\n';
  }
  fs::create_directories(common.out);
  const auto path = fs::path(common.out) / "eval.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  if (fresh) out << "split,step,cluster_error,classification_error,bayes_error,bayes_agreement\n";
  out << split << ',' << loaded.state->step() << ',' << fmt_double(report.cluster_error) << ','
      << fmt_double(report.classification_error) << ',' << fmt_double(report.bayes_error) << ','
      << fmt_double(report.bayes_agreement) << '\n';
  return 0;
}

int run_sample(const Common& common, const std::string& checkpoint, int64_t per_component) {
  auto loaded = load_model(common, checkpoint);
  auto& model = loaded.state->model();
  auto rng = make_rng(loaded.config.seed);
  auto batch = sample_grid(model, per_component, rng);
  std::vector<std::string> tags;
  for (int64_t k = 0; k < model.components; ++k) {
    for (int64_t i = 0; i < per_component; ++i) tags.push_back(std::to_string(k));
  }
  const auto path = output_file(common.out, "samples", loaded.data.train);
  write_batch(path, batch, model.components, per_component, tags);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int run_reconstruct(const Common& common, const std::string& checkpoint, const std::string& split,
                    int64_t count) {
  auto loaded = load_model(common, checkpoint);
  const auto& data = pick_split(loaded.data, split);
  count = std::min(count, data.size());
  if (count < 1) throw ArgumentError("nothing to reconstruct");
  auto x = data.images.slice(0, 0, count);
  auto recon = reconstruct(loaded.state->model(), x);
  std::vector<std::string> tags;
  for (int64_t i = 0; i < count; ++i) tags.push_back("input");
  for (int64_t i = 0; i < count; ++i) tags.push_back("reconstruction");
  const auto path = output_file(common.out, "reconstructions", data);
  write_batch(path, torch::cat({x, recon}), 2, count, tags);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int run_interpolate(const Common& common, const std::string& checkpoint, const std::string& split,
                    int64_t a, int64_t b, int64_t steps) {
  auto loaded = load_model(common, checkpoint);
  const auto& data = pick_split(loaded.data, split);
  if (a < 0 || b < 0 || a >= data.size() || b >= data.size()) {
    throw IndexError("interpolation endpoints must index the " + split + " split");
  }
  auto frames = latent_interpolate(loaded.state->model(), data.images[a], data.images[b], steps);
  std::vector<std::string> tags;
  for (int64_t i = 0; i < steps; ++i) tags.push_back(std::to_string(i));
  const auto path = output_file(common.out, "interpolation", data);
  write_batch(path, frames, 1, steps, tags);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int run_export(const Common& common, const std::string& checkpoint, const std::string& split) {
  auto loaded = load_model(common, checkpoint);
  const auto& data = pick_split(loaded.data, split);
  fs::create_directories(common.out);
  const auto path = fs::path(common.out) / "embeddings.csv";
  export_embeddings(loaded.state->model(), data, path);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Adversarially learned mixture models"};
  app.require_subcommand(1);

  std::string format = "csv", input, labels, convert_out;
  int64_t height = 32, width = 32, channels = 3;
  auto* convert = app.add_subcommand("convert-data", "convert IDX or pixel CSV data to the raw container");
  convert->add_option("--format", format, "input format")
      ->check(CLI::IsMember({"idx", "csv"}))
      ->capture_default_str();
  convert->add_option("--input", input, "IDX image file or pixel CSV")->required();
  convert->add_option("--labels", labels, "IDX label file");
  convert->add_option("--height", height, "CSV image height")->capture_default_str();
  convert->add_option("--width", width, "CSV image width")->capture_default_str();
  convert->add_option("--channels", channels, "CSV image channels")->capture_default_str();
  convert->add_option("--out", convert_out, "raw container to write")->required();

  Common common;
  std::string mode = "amm", resume, checkpoint, split = "test";
  int64_t per_component = 10, count = 10, a = 0, b = 1, steps = 8;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, common);
  train_cmd->add_option("--mode", mode, "game to play")
      ->check(CLI::IsMember({"amm", "samm"}))
      ->capture_default_str();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  auto with_checkpoint = [&](CLI::App* cmd, bool with_split) {
    add_common(cmd, common);
    cmd->add_option("--checkpoint", checkpoint, "checkpoint to load (default <out>/final.pt)");
    if (with_split) {
      cmd->add_option("--split", split, "data split")
          ->check(CLI::IsMember({"train", "val", "test"}))
          ->capture_default_str();
    }
    return cmd;
  };
  auto* eval_cmd = with_checkpoint(app.add_subcommand("eval", "clustering and classification error"), true);
  auto* sample_cmd = with_checkpoint(app.add_subcommand("sample", "decode prior samples per component"), false);
  sample_cmd->add_option("--per-component", per_component, "samples per component")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* recon_cmd = with_checkpoint(app.add_subcommand("reconstruct", "reconstruct inputs"), true);
  recon_cmd->add_option("--count", count, "number of inputs")->check(CLI::PositiveNumber)->capture_default_str();
  auto* interp_cmd = with_checkpoint(app.add_subcommand("interpolate", "decode a latent interpolation"), true);
  interp_cmd->add_option("--a", a, "index of the first endpoint")->capture_default_str();
  interp_cmd->add_option("--b", b, "index of the second endpoint")->capture_default_str();
  interp_cmd->add_option("--steps", steps, "number of frames")->capture_default_str();
  auto* export_cmd = with_checkpoint(app.add_subcommand("export-embeddings", "write inferred latents as CSV"), true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    log::init_from_env();
    if (*convert) return convert_data(format, input, labels, height, width, channels, convert_out);
    if (*train_cmd) return run_train(common, mode, resume);
    if (*eval_cmd) return run_eval(common, checkpoint, split);
    if (*sample_cmd) return run_sample(common, checkpoint, per_component);
    if (*recon_cmd) return run_reconstruct(common, checkpoint, split, count);
    if (*interp_cmd) return run_interpolate(common, checkpoint, split, a, b, steps);
    if (*export_cmd) return run_export(common, checkpoint, split);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace amm
