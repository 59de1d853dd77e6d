#include "amm/eval.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

#include "amm/errors.hpp"

namespace amm {

std::vector<int64_t> assign_cluster(const torch::Tensor& y) {
  require_shape(y, -1, -1, "assign_cluster y");
  auto yc = y.detach().to(kReal).contiguous();
  auto acc = yc.accessor<double, 2>();
  std::vector<int64_t> out(yc.size(0), 0);
  for (int64_t i = 0; i < yc.size(0); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int64_t k = 0; k < yc.size(1); ++k) {
      if (acc[i][k] > best) {
        best = acc[i][k];
        out[i] = k;
      }
    }
  }
  return out;
}

ClusterMatrix::ClusterMatrix(int64_t clusters, int64_t classes)
    : clusters_(clusters), classes_(classes), counts_(clusters * classes, 0) {
  if (clusters < 1 || classes < 1) {
    throw ArgumentError("cluster matrix needs positive dimensions");
  }
}

int64_t ClusterMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

std::vector<int64_t> ClusterMatrix::class_totals() const {
  std::vector<int64_t> out(classes_, 0);
  for (int64_t k = 0; k < clusters_; ++k) {
    for (int64_t c = 0; c < classes_; ++c) out[c] += at(k, c);
  }
  return out;
}

ClusterMatrix cluster_matrix(std::span<const int64_t> pred, std::span<const int64_t> truth,
                             int64_t clusters, int64_t classes) {
  if (pred.size() != truth.size()) {
    throw ArgumentError("prediction and label vectors differ in length");
  }
  ClusterMatrix m(clusters, classes);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= clusters || truth[i] < 0 || truth[i] >= classes) {
      throw IndexError("cluster or label index out of range at row " + std::to_string(i));
    }
    m.add(pred[i], truth[i]);
  }
  return m;
}

std::vector<int64_t> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const int64_t n = static_cast<int64_t>(cost.size());
  if (n == 0) return {};
  const int64_t m = static_cast<int64_t>(cost[0].size());
  if (n > m) {
    throw ArgumentError("assignment needs at least as many columns as rows");
  }
  // Potentials formulation with 1-based sentinels.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int64_t> match(m + 1, 0), way(m + 1, 0);
  for (int64_t i = 1; i <= n; ++i) {
    match[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int64_t i0 = match[j0];
      double delta = inf;
      int64_t j1 = 0;
      for (int64_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int64_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int64_t> assignment(n, -1);
  for (int64_t j = 1; j <= m; ++j) {
    if (match[j] != 0) assignment[match[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<int64_t> cluster_to_label_map(const ClusterMatrix& matrix, AssignmentMode mode) {
  const int64_t k = matrix.clusters();
  const int64_t c = matrix.classes();
  if (mode == AssignmentMode::Optimal && k < c) {
    throw ArgumentError("optimal assignment needs at least as many clusters as classes");
  }
  if (mode == AssignmentMode::Optimal && k == c) {
    std::vector<std::vector<double>> cost(k, std::vector<double>(c, 0.0));
    for (int64_t i = 0; i < k; ++i) {
      for (int64_t j = 0; j < c; ++j) cost[i][j] = -static_cast<double>(matrix.at(i, j));
    }
    return hungarian_min_cost(cost);
  }
  std::vector<int64_t> map(k, 0);
  for (int64_t i = 0; i < k; ++i) {
    int64_t best = -1;
    for (int64_t j = 0; j < c; ++j) {
      if (matrix.at(i, j) > best) {
        best = matrix.at(i, j);
        map[i] = j;
      }
    }
  }
  return map;
}

double clustering_error(std::span<const int64_t> pred, std::span<const int64_t> truth,
                        int64_t clusters, int64_t classes, AssignmentMode mode) {
  if (pred.empty()) {
    throw ArgumentError("clustering error of an empty set");
  }
  auto matrix = cluster_matrix(pred, truth, clusters, classes);
  auto map = cluster_to_label_map(matrix, mode);
  int64_t correct = 0;
  for (int64_t k = 0; k < clusters; ++k) correct += matrix.at(k, map[k]);
  return 1.0 - static_cast<double>(correct) / static_cast<double>(pred.size());
}

double classification_error(std::span<const int64_t> pred, std::span<const int64_t> truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw ArgumentError("classification error needs equal, nonempty vectors");
  }
  int64_t wrong = 0;
  for (size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

InferenceSample infer_dataset(AmmModel& model, const torch::Tensor& images, int64_t batch_size) {
  torch::NoGradGuard no_grad;
  auto rng = make_rng(0);  // unused: noise is disabled
  std::vector<torch::Tensor> logits, ys, zs;
  for (int64_t begin = 0; begin < images.size(0); begin += batch_size) {
    const int64_t end = std::min(images.size(0), begin + batch_size);
    auto out = model.infer(images.slice(0, begin, end), rng, 0.0);
    logits.push_back(out.logits);
    ys.push_back(out.y);
    zs.push_back(out.z);
  }
  if (logits.empty()) {
    return {torch::zeros({0, model.components}, real_options()),
            torch::zeros({0, model.components}, real_options()),
            torch::zeros({0, model.latent_dim}, real_options())};
  }
  return {torch::cat(logits), torch::cat(ys), torch::cat(zs)};
}

torch::Tensor reconstruct(AmmModel& model, const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  auto q = infer_dataset(model, x);
  return model.decoder->forward(q.y, q.z);
}

torch::Tensor latent_interpolate(AmmModel& model, const torch::Tensor& x_a, const torch::Tensor& x_b,
                                 int64_t steps) {
  if (steps < 2) {
    throw ArgumentError("interpolation needs at least two steps");
  }
  torch::NoGradGuard no_grad;
  auto a = infer_dataset(model, x_a.reshape({1, model.shape.channels, model.shape.height, model.shape.width}));
  auto b = infer_dataset(model, x_b.reshape({1, model.shape.channels, model.shape.height, model.shape.width}));
  auto t = torch::linspace(0.0, 1.0, steps, real_options()).unsqueeze(1);
  auto logits = (1.0 - t) * a.logits + t * b.logits;
  auto z = (1.0 - t) * a.z + t * b.z;
  return model.decoder->forward(torch::softmax(logits, 1), z);
}

torch::Tensor sample_grid(AmmModel& model, int64_t per_component, torch::Generator& rng) {
  torch::NoGradGuard no_grad;
  auto idx = torch::arange(model.components, torch::kLong).repeat_interleave(per_component);
  auto y = amm::one_hot(idx, model.components);
  auto z = model.prior->forward(y, rng);
  return model.decoder->forward(y, z);
}

void export_embeddings(AmmModel& model, const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  auto q = infer_dataset(model, dataset.images);
  auto components = assign_cluster(q.y);
  auto z = q.z.contiguous();
  auto acc = z.accessor<double, 2>();
  out << "component,label";
  for (int64_t j = 0; j < model.latent_dim; ++j) out << ",z" << j;
  out << '\n';
  torch::Tensor labels;
  if (dataset.labels) labels = dataset.labels->to(torch::kLong).contiguous();
  char buf[32];
  for (int64_t i = 0; i < z.size(0); ++i) {
    out << components[i] << ',' << (labels.defined() ? labels[i].item<int64_t>() : -1);
    for (int64_t j = 0; j < z.size(1); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", acc[i][j]);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

EvalReport evaluate(AmmModel& model, const Dataset& dataset, AssignmentMode mode) {
  if (!dataset.labels) {
    throw ArgumentError("evaluation needs labels");
  }
  auto q = infer_dataset(model, dataset.images);
  auto pred = assign_cluster(q.y);
  auto bayes = model.prior->bayes_classify(q.z);
  auto labels = dataset.labels->to(torch::kLong).contiguous();
  std::vector<int64_t> truth(labels.data_ptr<int64_t>(), labels.data_ptr<int64_t>() + labels.numel());
  const int64_t classes = labels.max().item<int64_t>() + 1;
  // With fewer clusters than classes no bijection exists; majority vote still applies.
  const auto effective = classes > model.components ? AssignmentMode::Majority : mode;
  EvalReport report;
  report.matrix = cluster_matrix(pred, truth, model.components, classes);
  report.cluster_error = clustering_error(pred, truth, model.components, classes, effective);
  report.classification_error = classification_error(pred, truth);
  report.bayes_error = classification_error(bayes, truth);
  int64_t agree = 0;
  for (size_t i = 0; i < pred.size(); ++i) agree += pred[i] == bayes[i];
  report.bayes_agreement = static_cast<double>(agree) / static_cast<double>(pred.size());
  return report;
}

}  // namespace amm
