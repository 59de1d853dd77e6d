#include "amm/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "amm/errors.hpp"

namespace fs = std::filesystem;

namespace amm {

namespace {

std::string at_line(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.is_null() ? "" : " (line " + std::to_string(mark.line + 1) + ")";
}

/// A mapping node that remembers which keys were read so the rest can be
/// reported as unknown.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(path_ + " must be a mapping" + at_line(node_));
    }
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  std::optional<YAML::Node> get(const std::string& key, bool required) {
    seen_.insert(key);
    if (!has(key)) {
      if (required) throw ConfigError("missing required key " + key_path(key));
      return std::nullopt;
    }
    return node_[key];
  }

  template <typename T>
  T value(const std::string& key, std::optional<T> fallback = std::nullopt) {
    auto node = get(key, !fallback.has_value());
    if (!node) return *fallback;
    try {
      return node->template as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key) + " has the wrong type" + at_line(*node));
    }
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) {
    auto node = get(key, false);
    if (!node) return fallback;
    if (!node->IsSequence()) {
      throw ConfigError(key_path(key) + " must be a list" + at_line(*node));
    }
    try {
      return node->template as<std::vector<T>>();
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key) + " has an entry of the wrong type" + at_line(*node));
    }
  }

  Section child(const std::string& key) {
    auto node = get(key, false);
    return Section(node ? *node : YAML::Node(), key_path(key));
  }

  /// Rejects keys that were never read.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        throw ConfigError("unknown key " + key_path(key) + at_line(kv.first));
      }
    }
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E choice(Section& s, const std::string& key, const std::vector<std::pair<std::string, E>>& options,
         std::optional<E> fallback) {
  if (fallback && !s.has(key)) {
    s.get(key, false);
    return *fallback;
  }
  const auto name = s.value<std::string>(key);
  for (const auto& [label, e] : options) {
    if (label == name) return e;
  }
  std::string allowed;
  for (const auto& [label, e] : options) allowed += (allowed.empty() ? "" : ", ") + label;
  throw ConfigError(s.key_path(key) + " must be one of " + allowed + ", got '" + name + "'");
}

NetSpec parse_net(Section s) {
  NetSpec spec;
  spec.kind = choice<NetKind>(s, "kind", {{"dense", NetKind::Dense}, {"conv", NetKind::Conv}},
                              spec.kind);
  spec.hidden = s.list<int64_t>("hidden", spec.hidden);
  spec.channels = s.list<int64_t>("channels", spec.channels);
  spec.activation = choice<Activation>(s, "activation",
                                       {{"relu", Activation::ReLU},
                                        {"leaky_relu", Activation::LeakyReLU},
                                        {"tanh", Activation::Tanh},
                                        {"elu", Activation::ELU}},
                                       spec.activation);
  spec.leaky_slope = s.value<double>("leaky_slope", spec.leaky_slope);
  spec.output = choice<OutputActivation>(
      s, "output", {{"sigmoid", OutputActivation::Sigmoid}, {"linear", OutputActivation::Linear}},
      spec.output);
  spec.init_std = s.value<double>("init_std", spec.init_std);
  for (auto w : spec.hidden) {
    if (w < 1) throw ConfigError(s.key_path("hidden") + " entries must be positive");
  }
  for (auto c : spec.channels) {
    if (c < 1) throw ConfigError(s.key_path("channels") + " entries must be positive");
  }
  if (spec.init_std <= 0.0) throw ConfigError(s.key_path("init_std") + " must be positive");
  s.finish();
  return spec;
}

MeanPlacement parse_placement(Section s) {
  const auto kind = s.value<std::string>("kind", std::string("zeros"));
  MeanPlacement out;
  if (kind == "zeros") {
    out = ZerosPlacement{};
  } else if (kind == "circle") {
    out = CirclePlacement{s.value<double>("radius")};
  } else if (kind == "random") {
    out = RandomPlacement{s.value<uint64_t>("seed", uint64_t{0}), s.value<double>("scale", 1.0)};
  } else if (kind == "svhn_grid") {
    out = svhn_cluster_grid();
  } else if (kind == "svhn_table") {
    out = svhn_digit_table();
  } else if (kind == "grid") {
    GridPlacement grid;
    for (const auto& axis : s.list<std::vector<double>>("axes", {})) {
      if (axis.size() != 3) {
        throw ConfigError(s.key_path("axes") + " entries must be [start, stop, step]");
      }
      grid.axes.push_back({axis[0], axis[1], axis[2]});
    }
    if (grid.axes.empty()) throw ConfigError("missing required key " + s.key_path("axes"));
    out = grid;
  } else if (kind == "table") {
    TablePlacement table{s.list<std::vector<double>>("rows", {})};
    if (table.rows.empty()) throw ConfigError("missing required key " + s.key_path("rows"));
    out = table;
  } else {
    throw ConfigError(s.key_path("kind") +
                      " must be one of zeros, circle, random, grid, table, svhn_grid, svhn_table");
  }
  s.finish();
  return out;
}

void parse_model(Section s, RunConfig& config) {
  auto& m = config.model;
  m.components = s.value<int64_t>("K");
  m.latent_dim = s.value<int64_t>("L");
  if (m.components < 2) throw ConfigError("model.K must be at least 2");
  if (m.latent_dim < 1) throw ConfigError("model.L must be positive");
  m.factorization = choice<Factorization>(
      s, "factorization", {{"q1", Factorization::Q1}, {"q2", Factorization::Q2}}, m.factorization);
  m.means_mode = choice<MeansMode>(
      s, "means_mode", {{"fixed", MeansMode::Fixed}, {"learned", MeansMode::Learned}},
      m.means_mode);
  m.placement = parse_placement(s.child("placement"));
  m.prior_stddev = s.value<double>("prior_stddev", 1.0);
  if (m.prior_stddev <= 0.0) throw ConfigError("model.prior_stddev must be positive");
  m.learn_prior_stddev = s.value<bool>("learn_prior_stddev", false);

  auto probs = s.get("class_probs", false);
  if (probs && probs->IsSequence()) {
    config.class_probs = ClassProbsMode::Explicit;
    m.class_probs = s.list<double>("class_probs", {});
    if (static_cast<int64_t>(m.class_probs.size()) != m.components) {
      throw ConfigError("model.class_probs needs K entries" + at_line(*probs));
    }
  } else if (probs) {
    const auto mode = probs->IsScalar() ? probs->as<std::string>() : std::string();
    if (mode == "uniform") {
      config.class_probs = ClassProbsMode::Uniform;
    } else if (mode == "train_frequency") {
      config.class_probs = ClassProbsMode::TrainFrequency;
    } else {
      throw ConfigError("model.class_probs must be uniform, train_frequency or a list" +
                        at_line(*probs));
    }
  }
  m.encoder = parse_net(s.child("encoder"));
  m.decoder = parse_net(s.child("decoder"));
  m.discriminator = parse_net(s.child("discriminator"));
  s.finish();
}

void parse_optim(Section s, RunConfig& config) {
  config.batch_size = s.value<int64_t>("batch_size", int64_t{100});
  config.optimizer.learning_rate = s.value<double>("learning_rate", 2e-4);
  config.optimizer.beta1 = s.value<double>("beta1", 0.5);
  config.optimizer.beta2 = s.value<double>("beta2", 0.999);
  config.penalty.lambda = s.value<double>("lambda", 10.0);
  config.penalty.enabled = s.value<bool>("penalty", true);
  config.penalty.pairing = choice<PenaltyPairing>(
      s, "penalty_pairing",
      {{"joint", PenaltyPairing::Joint}, {"coordinate", PenaltyPairing::Coordinate}},
      config.penalty.pairing);
  config.max_steps = s.value<int64_t>("max_steps", int64_t{5000});
  config.seed = s.value<uint64_t>("seed", uint64_t{0});
  if (config.batch_size < 1) throw ConfigError("optim.batch_size must be positive");
  if (config.optimizer.learning_rate < 0.0) {
    throw ConfigError("optim.learning_rate must be nonnegative");
  }
  if (config.penalty.lambda < 0.0) throw ConfigError("optim.lambda must be nonnegative");
  if (config.max_steps < 0) throw ConfigError("optim.max_steps must be nonnegative");
  s.finish();
}

void parse_data(Section s, RunConfig& config, const fs::path& base) {
  auto& d = config.data;
  d.kind = choice<DataKind>(
      s, "kind", {{"synthetic", DataKind::Synthetic}, {"idx", DataKind::Idx}, {"raw", DataKind::Raw}},
      std::nullopt);
  auto path = [&](const std::string& key, bool required) -> fs::path {
    if (!required && !s.has(key)) {
      s.get(key, false);
      return {};
    }
    fs::path p = s.value<std::string>(key);
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  switch (d.kind) {
    case DataKind::Synthetic: {
      auto syn = s.child("synthetic");
      d.synthetic.per_component = syn.value<int64_t>("per_component", d.synthetic.per_component);
      d.synthetic.test_per_component =
          syn.value<int64_t>("test_per_component", d.synthetic.test_per_component);
      d.synthetic.dim = syn.value<int64_t>("dim", d.synthetic.dim);
      d.synthetic.separation = syn.value<double>("separation", d.synthetic.separation);
      d.synthetic.seed = syn.value<uint64_t>("seed", d.synthetic.seed);
      if (d.synthetic.per_component < 1 || d.synthetic.test_per_component < 1) {
        throw ConfigError("data.synthetic counts must be positive");
      }
      if (d.synthetic.dim < 2) throw ConfigError("data.synthetic.dim must be at least 2");
      syn.finish();
      break;
    }
    case DataKind::Idx:
      d.train_images = path("train_images", true);
      d.train_labels = path("train_labels", false);
      d.test_images = path("test_images", false);
      d.test_labels = path("test_labels", false);
      break;
    case DataKind::Raw:
      d.train_path = path("train", true);
      d.test_path = path("test", false);
      break;
  }
  auto split = s.child("split");
  d.split.validation_count = split.value<int64_t>("validation", int64_t{0});
  d.split.labeled_count = split.value<int64_t>("labeled", int64_t{0});
  d.split.stratified = split.value<bool>("stratified", false);
  d.split.seed = split.value<uint64_t>("seed", uint64_t{0});
  if (d.split.validation_count < 0 || d.split.labeled_count < 0) {
    throw ConfigError("data.split counts must be nonnegative");
  }
  split.finish();
  s.finish();
}

void parse_eval(Section s, RunConfig& config) {
  config.eval.assignment = choice<AssignmentMode>(
      s, "assignment", {{"optimal", AssignmentMode::Optimal}, {"majority", AssignmentMode::Majority}},
      config.eval.assignment);
  config.eval.every = s.value<int64_t>("every", config.eval.every);
  config.eval.checkpoint_every = s.value<int64_t>("checkpoint_every", config.eval.checkpoint_every);
  if (config.eval.every < 1) throw ConfigError("eval.every must be positive");
  if (config.eval.checkpoint_every < 1) throw ConfigError("eval.checkpoint_every must be positive");
  s.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("configuration parse error at line " + std::to_string(e.mark.line + 1) +
                      ": " + e.msg);
  }
  if (!root || !root.IsMap()) {
    throw ConfigError("configuration must be a mapping with model, optim, data and eval sections");
  }
  RunConfig config;
  config.text = text;
  Section top(root, "");
  if (!top.has("model")) throw ConfigError("missing required key model");
  if (!top.has("data")) throw ConfigError("missing required key data");
  parse_model(top.child("model"), config);
  parse_optim(top.child("optim"), config);
  parse_data(top.child("data"), config, base_dir);
  parse_eval(top.child("eval"), config);
  top.finish();
  return config;
}

void check_paths(const RunConfig& config) {
  const auto& d = config.data;
  for (const auto* p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels,
                        &d.train_path, &d.test_path}) {
    if (!p->empty() && !fs::exists(*p)) {
      throw ConfigError("data file not found: " + p->string());
    }
  }
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read configuration " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto config = parse_config(buffer.str(), path.parent_path());
  check_paths(config);
  return config;
}

}  // namespace amm
