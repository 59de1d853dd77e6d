#include "amm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "amm/errors.hpp"
#include "amm/log.hpp"

namespace fs = std::filesystem;

namespace amm {

namespace {

// Independent batch streams for the unlabeled and labeled samplers.
constexpr uint64_t kUnlabeledStream = 0x9E3779B97F4A7C15ULL;
constexpr uint64_t kLabeledStream = 0xC2B2AE3D27D4EB4FULL;

Dataset load_split(const RunConfig& config, bool test) {
  const auto& d = config.data;
  Dataset out;
  switch (d.kind) {
    case DataKind::Synthetic: {
      const auto& s = d.synthetic;
      out = make_synthetic_mixture(config.model.components,
                                   test ? s.test_per_component : s.per_component, s.dim,
                                   s.separation, test ? s.seed + 1 : s.seed);
      break;
    }
    case DataKind::Idx:
      if (test) {
        if (d.test_images.empty()) return out;
        out = load_mnist(d.test_images, d.test_labels.empty()
                                            ? std::nullopt
                                            : std::optional<fs::path>(d.test_labels));
      } else {
        out = load_mnist(d.train_images, d.train_labels.empty()
                                             ? std::nullopt
                                             : std::optional<fs::path>(d.train_labels));
      }
      break;
    case DataKind::Raw:
      if (test && d.test_path.empty()) return out;
      out = load_raw_rgb(test ? d.test_path : d.train_path);
      break;
  }
  out.split = test ? SplitTag::Test : SplitTag::Train;
  return out;
}

std::string format_row(long step, const StepMetrics& m, double val, double wall) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", step,
                m.discriminator_loss, m.encoder_loss, m.decoder_loss, m.penalty, m.mean_rho_q,
                m.mean_rho_p, val, wall);
  return buf;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  auto full = load_split(config, false);
  auto split = split_and_select(full, config.data.split);
  PreparedData data;
  data.train = std::move(split.train);
  data.val = std::move(split.val);
  data.labeled = std::move(split.labeled);
  data.test = load_split(config, true);
  data.shape = full.shape();
  if (data.test.size() > 0 && !(data.test.shape() == data.shape)) {
    throw ConfigError("test data shape differs from the training data");
  }
  return data;
}

ModelSpec resolve_model(const RunConfig& config, const PreparedData& data) {
  ModelSpec spec = config.model;
  spec.shape = data.shape;
  switch (config.class_probs) {
    case ClassProbsMode::Uniform:
      spec.class_probs.clear();
      break;
    case ClassProbsMode::TrainFrequency:
      if (!data.train.labels) {
        throw ConfigError("model.class_probs: train_frequency needs training labels");
      }
      spec.class_probs = CategoricalPrior::from_labels(*data.train.labels, spec.components).probs();
      break;
    case ClassProbsMode::Explicit:
      break;
  }
  return spec;
}

double validation_error(AmmModel& model, const Dataset& val, AssignmentMode mode) {
  if (val.size() == 0 || !val.labels) return std::nan("");
  return evaluate(model, val, mode).cluster_error;
}

TrainSummary train(const RunConfig& config, const PreparedData& data, const TrainOptions& options) {
  torch::set_num_threads(1);
  const bool samm = options.mode == TrainMode::Samm;
  if (samm && data.labeled.size() == 0) {
    throw ConfigError("train --mode samm needs a labeled subset: set data.split.labeled");
  }
  if (samm && config.model.factorization != Factorization::Q1) {
    throw ConfigError("train --mode samm needs model.factorization q1");
  }
  if (data.train.size() == 0) {
    throw ConfigError("training split is empty");
  }
  const auto spec = resolve_model(config, data);
  fs::create_directories(options.out_dir);

  double best = std::numeric_limits<double>::infinity();
  std::optional<TrainState> state;
  if (options.resume) {
    CheckpointInfo info;
    state.emplace(load_checkpoint(*options.resume, spec, config.optimizer, config.penalty,
                                  config.batch_size, &info));
    best = info.best_validation;
    log::info("resumed from " + options.resume->string() + " at step " +
              std::to_string(state->step()));
  } else {
    state.emplace(spec, config.optimizer, config.penalty, config.batch_size, config.seed);
  }

  TrainSummary summary;
  summary.metrics_file = options.out_dir / "metrics.csv";
  const bool append = options.resume && fs::exists(summary.metrics_file);
  std::ofstream metrics(summary.metrics_file, append ? std::ios::app : std::ios::trunc);
  if (!metrics) {
    throw IoError("cannot write " + summary.metrics_file.string());
  }
  if (!append) metrics << kMetricsHeader << '\n';

  BatchSampler unlabeled(data.train.size(), config.batch_size, config.seed ^ kUnlabeledStream);
  std::optional<BatchSampler> labeled;
  torch::Tensor labeled_onehot;
  if (samm) {
    labeled.emplace(data.labeled.size(), config.batch_size, config.seed ^ kLabeledStream);
    labeled_onehot = amm::one_hot(*data.labeled.labels, spec.components);
  }

  const auto start = std::chrono::steady_clock::now();
  auto& rng = state->rng();
  while (state->step() < config.max_steps) {
    const long step = state->step();
    auto x = data.train.images.index_select(0, unlabeled.indices(step));
    StepMetrics m;
    if (samm) {
      auto idx = labeled->indices(step);
      m = samm_train_step(*state, x, data.labeled.images.index_select(0, idx),
                          labeled_onehot.index_select(0, idx), rng);
    } else {
      m = amm_train_step(*state, x, rng);
    }
    const long done = state->step();
    if (done % config.eval.every == 0 || done == config.max_steps) {
      const double val = validation_error(state->model(), data.val, config.eval.assignment);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      metrics << format_row(done, m, val, wall) << '\n' << std::flush;
      log::info(format_row(done, m, val, wall));
      if (val < best) {
        best = val;
        save_checkpoint(options.out_dir / "best.pt", *state, config.text, best);
      }
    }
    if (done % config.eval.checkpoint_every == 0) {
      save_checkpoint(options.out_dir / ("checkpoint_" + std::to_string(done) + ".pt"), *state,
                      config.text, best);
    }
  }
  summary.steps = state->step();
  summary.best_validation = best;
  summary.final_checkpoint = options.out_dir / "final.pt";
  save_checkpoint(summary.final_checkpoint, *state, config.text, best);
  return summary;
}

}  // namespace amm
