#include "amm/game.hpp"

#include <cmath>
#include <sstream>

#include "amm/errors.hpp"
#include "amm/priors.hpp"

namespace amm {

bool StepMetrics::all_finite() const {
  return std::isfinite(discriminator_loss) && std::isfinite(encoder_loss) &&
         std::isfinite(decoder_loss) && std::isfinite(penalty) && std::isfinite(mean_rho_q) &&
         std::isfinite(mean_rho_p);
}

namespace {

torch::Tensor clamped(const torch::Tensor& rho) {
  return rho.to(kReal).clamp(kProbClamp, 1.0 - kProbClamp);
}

void require_batch(const torch::Tensor& rho_q, const torch::Tensor& rho_p) {
  if (!rho_q.defined() || !rho_p.defined() || rho_q.numel() == 0 || rho_p.numel() == 0) {
    throw ArgumentError("loss over an empty batch");
  }
}

}  // namespace

torch::Tensor discriminator_loss(const torch::Tensor& rho_q, const torch::Tensor& rho_p,
                                 double scale) {
  require_batch(rho_q, rho_p);
  return -scale * clamped(rho_q).log().mean() - scale * (1.0 - clamped(rho_p)).log().mean();
}

GeneratorLosses generator_losses(const torch::Tensor& rho_q, const torch::Tensor& rho_p,
                                 double scale) {
  require_batch(rho_q, rho_p);
  return {-scale * (1.0 - clamped(rho_q)).log().mean(), -scale * clamped(rho_p).log().mean()};
}

torch::Tensor gradient_penalty(const Critic& critic, const Triplets& real, const Triplets& fake,
                               const PenaltyConfig& config, torch::Generator& rng) {
  if (config.lambda < 0.0) {
    throw ConfigError("gradient penalty weight must be nonnegative");
  }
  const int64_t m = real.x.size(0);
  if (fake.x.size(0) != m || real.y.size(0) != m || real.z.size(0) != m ||
      fake.y.size(0) != m || fake.z.size(0) != m) {
    throw DimensionError("gradient penalty needs real and fake batches of equal size");
  }
  if (!config.enabled) {
    return torch::zeros({}, real_options());
  }
  auto alpha = torch::rand({m, 1}, rng, real_options());
  auto lerp = [&](const torch::Tensor& a, const torch::Tensor& b) {
    std::vector<int64_t> shape(a.dim(), 1);
    shape[0] = m;
    auto w = alpha.reshape(shape);
    return (w * a.detach().to(kReal) + (1.0 - w) * b.detach().to(kReal)).requires_grad_(true);
  };
  auto x_hat = lerp(real.x, fake.x);
  auto y_hat = lerp(real.y, fake.y);
  auto z_hat = lerp(real.z, fake.z);
  auto out = critic(x_hat, y_hat, z_hat);
  auto grads = torch::autograd::grad({out.sum()}, {x_hat, y_hat, z_hat}, {},
                                     /*retain_graph=*/true, /*create_graph=*/true,
                                     /*allow_unused=*/true);
  torch::Tensor sq = torch::zeros({m}, real_options());
  for (const auto& g : grads) {
    if (g.defined()) sq = sq + g.reshape({m, -1}).pow(2).sum(1);
  }
  // The tiny offset keeps the derivative of the norm finite at a zero gradient.
  auto norm = (sq + 1e-12).sqrt();
  return config.lambda * (norm - 1.0).pow(2).mean();
}

TrainState::TrainState(const ModelSpec& spec, const OptimizerConfig& optimizer,
                       const PenaltyConfig& penalty, int64_t batch_size, uint64_t seed)
    : spec_(spec),
      optimizer_(optimizer),
      penalty_(penalty),
      batch_size_(batch_size),
      model_(build_model(spec, seed)),
      rng_(make_rng(seed + 1)) {
  if (batch_size_ < 1) {
    throw ConfigError("batch size must be positive");
  }
  if (penalty_.lambda < 0.0) {
    throw ConfigError("gradient penalty weight must be nonnegative");
  }
  auto options = torch::optim::AdamOptions(optimizer_.learning_rate)
                     .betas({optimizer_.beta1, optimizer_.beta2});
  auto add = [&](std::string name, std::shared_ptr<torch::nn::Module> module) {
    auto params = module->parameters();
    if (params.empty()) return;
    players_.push_back(
        {std::move(name), module, std::make_unique<torch::optim::Adam>(params, options)});
  };
  add("discriminator", model_.discriminator.ptr());
  add("decoder", model_.decoder.ptr());
  add("prior", model_.prior.ptr());
  add("encoder_y", model_.encoder_y.ptr());
  add("encoder_z", model_.encoder_z.ptr());
}

Player& TrainState::player(const std::string& name) {
  for (auto& p : players_) {
    if (p.name == name) return p;
  }
  throw ArgumentError("no player named " + name);
}

bool TrainState::has_player(const std::string& name) const {
  for (const auto& p : players_) {
    if (p.name == name) return true;
  }
  return false;
}

namespace {

std::vector<std::pair<std::string, torch::nn::Module*>> named_modules(AmmModel& m) {
  return {{"prior", m.prior.get()},
          {"encoder_y", m.encoder_y.get()},
          {"encoder_z", m.encoder_z.get()},
          {"decoder", m.decoder.get()},
          {"discriminator", m.discriminator.get()}};
}

}  // namespace

void TrainState::save(torch::serialize::OutputArchive& archive) const {
  auto& self = const_cast<TrainState&>(*this);
  archive.write("step", torch::tensor(static_cast<int64_t>(step_)));
  archive.write("rng", self.rng_.get_state());
  for (auto& [name, module] : named_modules(self.model_)) {
    torch::serialize::OutputArchive sub;
    module->save(sub);
    archive.write("model." + name, sub);
  }
  for (const auto& p : players_) {
    torch::serialize::OutputArchive sub;
    p.optimizer->save(sub);
    archive.write("optim." + p.name, sub);
  }
}

void TrainState::load(torch::serialize::InputArchive& archive) {
  torch::Tensor step;
  archive.read("step", step);
  step_ = static_cast<long>(step.item<int64_t>());
  torch::Tensor rng_state;
  archive.read("rng", rng_state);
  rng_.set_state(rng_state);
  for (auto& [name, module] : named_modules(model_)) {
    torch::serialize::InputArchive sub;
    archive.read("model." + name, sub);
    std::vector<std::vector<int64_t>> sizes;
    for (const auto& t : module->parameters()) sizes.push_back(t.sizes().vec());
    module->load(sub);
    // Module::load swaps in the stored tensors without comparing shapes.
    auto loaded = module->parameters();
    TORCH_CHECK(loaded.size() == sizes.size(), "parameter count mismatch in ", name);
    for (size_t i = 0; i < sizes.size(); ++i) {
      TORCH_CHECK(loaded[i].sizes().vec() == sizes[i], "parameter shape mismatch in ", name);
    }
  }
  for (auto& p : players_) {
    torch::serialize::InputArchive sub;
    archive.read("optim." + p.name, sub);
    p.optimizer->load(sub);
  }
}

TrainState TrainState::clone() const {
  std::stringstream buffer;
  {
    torch::serialize::OutputArchive archive;
    save(archive);
    archive.save_to(buffer);
  }
  TrainState copy(spec_, optimizer_, penalty_, batch_size_, 0);
  torch::serialize::InputArchive archive;
  archive.load_from(buffer);
  copy.load(archive);
  return copy;
}

namespace {

double mean_of(const torch::Tensor& t) { return t.detach().mean().item<double>(); }

struct SynthesisSample {
  torch::Tensor y;
  torch::Tensor z;
  torch::Tensor x;
};

SynthesisSample synthesize(AmmModel& model, int64_t m, torch::Generator& rng) {
  SynthesisSample s;
  s.y = sample_categorical(model.prior->categorical(), m, rng);
  s.z = model.prior->forward(s.y, rng);
  s.x = model.decoder->forward(s.y, s.z);
  return s;
}

Critic critic_of(AmmModel& model) {
  auto d = model.discriminator;
  return [d](const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& z) mutable {
    return d->forward(x, y, z);
  };
}

/// The two endpoint batches of the penalty for one inference and one synthesis batch.
std::pair<Triplets, Triplets> penalty_endpoints(const Triplets& q, const Triplets& p,
                                                PenaltyPairing pairing) {
  if (pairing == PenaltyPairing::Joint) return {q, p};
  return {{q.x, p.y, p.z}, {p.x, q.y, q.z}};
}

void require_batch_size(const TrainState& state, const torch::Tensor& x, const char* what) {
  if (x.size(0) != state.batch_size()) {
    throw DimensionError(std::string(what) + " has " + std::to_string(x.size(0)) +
                         " rows, expected the batch size " + std::to_string(state.batch_size()));
  }
}

void wrap_numeric(const TrainState& state, const std::function<void()>& body) {
  try {
    body();
  } catch (const TrainingDiverged&) {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(e.what(), state.step());
  }
}

}  // namespace

StepGraph amm_graph(TrainState& state, const torch::Tensor& x, torch::Generator& rng) {
  require_batch_size(state, x, "data batch");
  auto& model = state.model();
  const int64_t m = state.batch_size();
  StepGraph graph;
  wrap_numeric(state, [&] {
    auto p = synthesize(model, m, rng);
    auto q = model.infer(x, rng);
    auto rho_q = model.discriminator->forward(x, q.y, q.z);
    auto rho_p = model.discriminator->forward(p.x, p.y, p.z);

    auto l_d = discriminator_loss(rho_q, rho_p);
    auto gen = generator_losses(rho_q, rho_p);
    auto [real, fake] = penalty_endpoints({x, q.y, q.z}, {p.x, p.y, p.z}, state.penalty().pairing);
    auto pen = gradient_penalty(critic_of(model), real, fake, state.penalty(), rng);

    graph.player_losses = {{"discriminator", l_d + pen},
                           {"decoder", gen.decoder},
                           {"prior", gen.decoder},
                           {"encoder_y", gen.encoder},
                           {"encoder_z", gen.encoder}};
    graph.terms = {{"d", l_d}, {"enc", gen.encoder}, {"dec", gen.decoder}, {"penalty", pen}};
    graph.metrics = {l_d.item<double>(),  gen.encoder.item<double>(), gen.decoder.item<double>(),
                     pen.item<double>(),  mean_of(rho_q),             mean_of(rho_p)};
  });
  return graph;
}

StepGraph samm_graph(TrainState& state, const torch::Tensor& x_unlabeled,
                     const torch::Tensor& x_labeled, const torch::Tensor& labels,
                     torch::Generator& rng) {
  require_batch_size(state, x_unlabeled, "unlabeled batch");
  require_batch_size(state, x_labeled, "labeled batch");
  auto& model = state.model();
  const int64_t m = state.batch_size();
  require_shape(labels, m, model.components, "labels");
  StepGraph graph;
  wrap_numeric(state, [&] {
    // Unlabeled game.
    auto pu = synthesize(model, m, rng);
    auto qu = model.infer(x_unlabeled, rng);
    // Labeled game: the observed label replaces G_y on the inference side.
    auto pl = synthesize(model, m, rng);
    auto y_l = labels.to(kReal);
    auto z_l = model.infer_z_given_y(x_labeled, y_l, rng);

    auto rho_qu = model.discriminator->forward(x_unlabeled, qu.y, qu.z);
    auto rho_pu = model.discriminator->forward(pu.x, pu.y, pu.z);
    auto rho_ql = model.discriminator->forward(x_labeled, y_l, z_l);
    auto rho_pl = model.discriminator->forward(pl.x, pl.y, pl.z);

    auto d_u = discriminator_loss(rho_qu, rho_pu, 0.5);
    auto d_l = discriminator_loss(rho_ql, rho_pl, 0.5);
    auto gen_u = generator_losses(rho_qu, rho_pu, 0.5);
    auto gen_l = generator_losses(rho_ql, rho_pl, 0.5);

    auto critic = critic_of(model);
    const auto pairing = state.penalty().pairing;
    auto [real_u, fake_u] =
        penalty_endpoints({x_unlabeled, qu.y, qu.z}, {pu.x, pu.y, pu.z}, pairing);
    auto [real_l, fake_l] = penalty_endpoints({x_labeled, y_l, z_l}, {pl.x, pl.y, pl.z}, pairing);
    auto pen_u = gradient_penalty(critic, real_u, fake_u, state.penalty(), rng);
    auto pen_l = gradient_penalty(critic, real_l, fake_l, state.penalty(), rng);
    auto pen = 0.5 * pen_u + 0.5 * pen_l;

    auto l_d = d_u + d_l;
    auto l_dec = gen_u.decoder + gen_l.decoder;
    graph.player_losses = {{"discriminator", l_d + pen},
                           {"decoder", l_dec},
                           {"prior", l_dec},
                           {"encoder_y", gen_u.encoder},
                           {"encoder_z", gen_u.encoder + gen_l.encoder}};
    graph.terms = {{"d_unlabeled", d_u},         {"d_labeled", d_l},
                   {"enc_unlabeled", gen_u.encoder}, {"enc_labeled", gen_l.encoder},
                   {"dec_unlabeled", gen_u.decoder}, {"dec_labeled", gen_l.decoder},
                   {"penalty_unlabeled", pen_u},   {"penalty_labeled", pen_l}};
    graph.metrics = {l_d.item<double>(),
                     (gen_u.encoder + gen_l.encoder).item<double>(),
                     l_dec.item<double>(),
                     pen.item<double>(),
                     0.5 * (mean_of(rho_qu) + mean_of(rho_ql)),
                     0.5 * (mean_of(rho_pu) + mean_of(rho_pl))};
  });
  return graph;
}

void apply_simultaneous_update(TrainState& state, const StepGraph& graph,
                               const std::vector<std::string>& only) {
  if (!graph.metrics.all_finite()) {
    throw TrainingDiverged("non-finite loss", state.step(), graph.metrics);
  }
  auto selected = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };

  // Every gradient is taken against the pre-step parameters before any update.
  std::vector<std::pair<Player*, std::vector<torch::Tensor>>> pending;
  for (auto& player : state.players()) {
    if (!selected(player.name)) continue;
    auto it = graph.player_losses.find(player.name);
    if (it == graph.player_losses.end()) {
      throw ArgumentError("step graph has no loss for player " + player.name);
    }
    auto params = player.module->parameters();
    auto grads = torch::autograd::grad({it->second}, params, {}, /*retain_graph=*/true,
                                       /*create_graph=*/false, /*allow_unused=*/true);
    pending.emplace_back(&player, std::move(grads));
  }
  for (auto& [player, grads] : pending) {
    auto params = player->module->parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      params[i].mutable_grad() = grads[i].defined() ? grads[i] : torch::zeros_like(params[i]);
    }
    player->optimizer->step();
    for (auto& p : params) p.mutable_grad() = torch::Tensor();
    if (!parameters_finite(*player->module)) {
      throw TrainingDiverged("non-finite parameters in " + player->name, state.step(),
                             graph.metrics);
    }
  }
}

StepMetrics amm_train_step(TrainState& state, const torch::Tensor& x, torch::Generator& rng) {
  auto graph = amm_graph(state, x, rng);
  apply_simultaneous_update(state, graph);
  state.advance();
  return graph.metrics;
}

StepMetrics samm_train_step(TrainState& state, const torch::Tensor& x_unlabeled,
                            const torch::Tensor& x_labeled, const torch::Tensor& labels,
                            torch::Generator& rng) {
  auto graph = samm_graph(state, x_unlabeled, x_labeled, labels, rng);
  apply_simultaneous_update(state, graph);
  state.advance();
  return graph.metrics;
}

}  // namespace amm
