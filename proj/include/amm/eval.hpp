#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amm/data.hpp"
#include "amm/networks.hpp"

namespace amm {

/// Row-wise argmax of an M×K simplex matrix; ties go to the lowest index.
std::vector<int64_t> assign_cluster(const torch::Tensor& y);

/// Contingency counts, cluster-major: counts[k][c] = #{i : pred_i = k, truth_i = c}.
class ClusterMatrix {
 public:
  ClusterMatrix(int64_t clusters, int64_t classes);

  int64_t clusters() const { return clusters_; }
  int64_t classes() const { return classes_; }
  int64_t at(int64_t k, int64_t c) const { return counts_[k * classes_ + c]; }
  void add(int64_t k, int64_t c) { ++counts_[k * classes_ + c]; }
  int64_t total() const;
  /// Column sums: examples per true class.
  std::vector<int64_t> class_totals() const;

 private:
  int64_t clusters_;
  int64_t classes_;
  std::vector<int64_t> counts_;
};

/// Throws IndexError when an entry of `pred` or `truth` is out of range.
ClusterMatrix cluster_matrix(std::span<const int64_t> pred, std::span<const int64_t> truth,
                             int64_t clusters, int64_t classes);

enum class AssignmentMode {
  Optimal,   ///< best cluster→label bijection when K == C, majority vote when K > C
  Majority,  ///< each cluster takes its most frequent label
};

/// Minimum-cost assignment of rows to columns (rows ≤ columns) by the Hungarian
/// method. Returns the column chosen for each row.
std::vector<int64_t> hungarian_min_cost(const std::vector<std::vector<double>>& cost);

/// cluster → label map used by clustering_error.
std::vector<int64_t> cluster_to_label_map(const ClusterMatrix& matrix, AssignmentMode mode);

/// Fraction of examples whose mapped cluster disagrees with the true label.
/// Throws ArgumentError on empty input, mismatched lengths, or K < C.
double clustering_error(std::span<const int64_t> pred, std::span<const int64_t> truth,
                        int64_t clusters, int64_t classes,
                        AssignmentMode mode = AssignmentMode::Optimal);

/// Fraction of rows with pred != truth (the identity map).
double classification_error(std::span<const int64_t> pred, std::span<const int64_t> truth);

/// Noise-free inference over a dataset in batches.
InferenceSample infer_dataset(AmmModel& model, const torch::Tensor& images, int64_t batch_size = 500);

/// decode_x applied to the noise-free inferred (ỹ, z̃).
torch::Tensor reconstruct(AmmModel& model, const torch::Tensor& x);

/// Frames decoded along the straight line between the noise-free latents of
/// two single images: logits h_y and z are interpolated, then y = softmax(h_y).
/// Returns a steps×C×H×W batch. Throws ArgumentError when steps < 2.
torch::Tensor latent_interpolate(AmmModel& model, const torch::Tensor& x_a, const torch::Tensor& x_b,
                                 int64_t steps);

/// `per_component` decoded prior samples for each component, component-major.
torch::Tensor sample_grid(AmmModel& model, int64_t per_component, torch::Generator& rng);

/// CSV with header component,label,z0..z{L-1}; label is -1 when absent.
void export_embeddings(AmmModel& model, const Dataset& dataset, const std::filesystem::path& path);

/// Clustering and classification summary of a labeled dataset.
struct EvalReport {
  double cluster_error = 0.0;        ///< via the assignment mode
  double classification_error = 0.0; ///< identity map from G_y component to label
  double bayes_error = 0.0;          ///< identity map from Bayes(z̃) to label
  double bayes_agreement = 0.0;      ///< fraction where Bayes(z̃) equals the G_y component
  ClusterMatrix matrix{1, 1};
};

EvalReport evaluate(AmmModel& model, const Dataset& dataset, AssignmentMode mode);

}  // namespace amm
