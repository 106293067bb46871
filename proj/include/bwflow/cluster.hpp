#pragma once

// Lloyd k-means over flow sets, either with the integrated metric and Fréchet
// mean centroids or with Euclidean distance on PCA scores.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "bwflow/barycenter.hpp"
#include "bwflow/flow.hpp"

namespace bwflow {

enum class ClusterMode { kRaw, kScores };

ClusterMode parse_cluster_mode(std::string_view name);
std::string_view cluster_mode_name(ClusterMode mode);

template <Scalar S>
struct KMeansConfig {
  ClusterMode mode = ClusterMode::kRaw;
  std::size_t restarts = 20;
  int max_iter = 100;
  std::uint64_t seed = 0;
  /// n x p score matrix, required in scores mode.
  std::optional<Eigen::MatrixXd> scores;
  /// Reused across raw-mode runs; avoids recomputing the n x n distances.
  std::optional<Eigen::MatrixXd> pairwise;
  MeanFlowConfig<S> mean;
};

template <Scalar S>
struct KMeansResult {
  std::vector<int> labels;
  std::vector<BasicFlow<S>> centroids;  // raw mode
  Eigen::MatrixXd score_centroids;      // scores mode, k x p
  double inertia = 0.0;
  double distortion = 0.0;
  std::vector<double> per_iter_inertia;
  int n_iter = 0;
  std::uint64_t seed = 0;
  std::size_t restart = 0;
};

/// Symmetric n x n matrix of flow_distance.
template <Scalar S>
Eigen::MatrixXd pairwise_distances(const BasicFlowSet<S>& set);

/// Best of cfg.restarts runs, run r seeded with seed + r. KOutOfRange unless 1 <= k <= n.
template <Scalar S>
KMeansResult<S> kmeans_flows(const BasicFlowSet<S>& set, std::size_t k, const KMeansConfig<S>& cfg);

struct ElbowRow {
  std::size_t k = 0;
  double inertia = 0.0;
  double distortion = 0.0;
  double second_difference = 0.0;  // NaN at the ends of the range
  bool increased = false;          // inertia above the previous row
};

template <Scalar S>
std::vector<ElbowRow> elbow_scores(const BasicFlowSet<S>& set, std::size_t k_min, std::size_t k_max,
                                   const KMeansConfig<S>& cfg);

/// k of the row with the largest second difference.
std::size_t elbow_k(const std::vector<ElbowRow>& rows);

/// Fraction of matching labels, maximized over label permutations (k <= 8).
double label_agreement(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace bwflow
