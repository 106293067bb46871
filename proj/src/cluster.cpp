#include "bwflow/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "bwflow/error.hpp"

namespace bwflow {

namespace {

// k-means++ seeding on an n x n matrix of distances.
std::vector<std::size_t> plus_plus_seeds(const Eigen::MatrixXd& dist, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(dist.rows());
  std::vector<std::size_t> seeds;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  seeds.push_back(first(rng));
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(seeds[0]));
  while (seeds.size() < k) {
    std::vector<double> w(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool taken = std::find(seeds.begin(), seeds.end(), i) != seeds.end();
      w[i] = taken ? 0.0 : nearest[i] * nearest[i];
      total += w[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> draw(w.begin(), w.end());
      pick = draw(rng);
    } else {
      // Remaining points coincide with chosen seeds: take the first free index.
      pick = 0;
      while (std::find(seeds.begin(), seeds.end(), pick) != seeds.end()) ++pick;
    }
    seeds.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pick)));
    }
  }
  return seeds;
}

// Moves the worst-fitting point of a multi-member cluster into each empty cluster.
// Returns the indices that were moved, paired with their new cluster.
std::vector<std::pair<std::size_t, int>> repair_empty(std::vector<int>& labels, const Eigen::MatrixXd& to_centroid,
                                                      std::size_t k) {
  std::vector<std::pair<std::size_t, int>> moved;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    if (sizes[c] > 0) continue;
    double worst = -1.0;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto l = static_cast<std::size_t>(labels[i]);
      if (sizes[l] < 2) continue;
      const double v = to_centroid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
      if (v > worst) {
        worst = v;
        pick = i;
      }
    }
    labels[pick] = static_cast<int>(c);
    moved.emplace_back(pick, static_cast<int>(c));
  }
  return moved;
}

std::vector<int> nearest_labels(const Eigen::MatrixXd& to_centroid) {
  std::vector<int> labels(static_cast<std::size_t>(to_centroid.rows()));
  for (Eigen::Index i = 0; i < to_centroid.rows(); ++i) {
    Eigen::Index best;
    to_centroid.row(i).minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

template <Scalar S>
BasicFlowSet<S> members_of(const BasicFlowSet<S>& set, const std::vector<int>& labels, int c) {
  std::vector<std::vector<Matrix<S>>> mats;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (labels[i] == c) mats.push_back(set[i].matrices());
  }
  return BasicFlowSet<S>(set.grid_ptr(), std::move(mats));
}

template <Scalar S>
KMeansResult<S> run_raw(const BasicFlowSet<S>& set, std::size_t k, const KMeansConfig<S>& cfg,
                        const Eigen::MatrixXd& pairwise, std::uint64_t seed) {
  const std::size_t n = set.size();
  std::mt19937_64 rng(seed);
  KMeansResult<S> res;
  res.seed = seed;
  for (std::size_t s : plus_plus_seeds(pairwise, k, rng)) res.centroids.push_back(set[s]);

  std::vector<int> labels(n, -1);
  Eigen::MatrixXd to_c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  auto fill = [&](std::size_t c) {
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      to_c(i, static_cast<Eigen::Index>(c)) = flow_distance<S>(set[static_cast<std::size_t>(i)], res.centroids[c]);
    }
  };
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    for (std::size_t c = 0; c < k; ++c) fill(c);
    std::vector<int> next = nearest_labels(to_c);
    for (const auto& [i, c] : repair_empty(next, to_c, k)) res.centroids[static_cast<std::size_t>(c)] = set[i];
    if (next == labels) break;
    labels = std::move(next);

    for (std::size_t c = 0; c < k; ++c) {
      const BasicFlowSet<S> members = members_of(set, labels, static_cast<int>(c));
      if (members.size() == 1) {
        res.centroids[c] = members[0];
        continue;
      }
      MeanFlowConfig<S> mc = cfg.mean;
      mc.init_flow = res.centroids[c];
      res.centroids[c] = frechet_mean_flow<S>(members, mc).mean;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = flow_distance<S>(set[i], res.centroids[static_cast<std::size_t>(labels[i])]);
      inertia += v * v;
    }
    res.per_iter_inertia.push_back(inertia);
    res.n_iter = iter + 1;
  }
  res.labels = std::move(labels);
  res.inertia = res.per_iter_inertia.empty() ? 0.0 : res.per_iter_inertia.back();
  res.distortion = res.inertia / static_cast<double>(n);
  return res;
}

template <Scalar S>
KMeansResult<S> run_scores(const Eigen::MatrixXd& x, std::size_t k, int max_iter, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd pairwise(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) pairwise(i, j) = (x.row(i) - x.row(j)).norm();
  }
  std::mt19937_64 rng(seed);
  KMeansResult<S> res;
  res.seed = seed;
  const auto kk = static_cast<Eigen::Index>(k);
  res.score_centroids.resize(kk, x.cols());
  const std::vector<std::size_t> seeds = plus_plus_seeds(pairwise, k, rng);
  for (Eigen::Index c = 0; c < kk; ++c) res.score_centroids.row(c) = x.row(static_cast<Eigen::Index>(seeds[c]));

  std::vector<int> labels(n, -1);
  Eigen::MatrixXd to_c(x.rows(), kk);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index c = 0; c < kk; ++c) to_c(i, c) = (x.row(i) - res.score_centroids.row(c)).norm();
    }
    std::vector<int> next = nearest_labels(to_c);
    for (const auto& [i, c] : repair_empty(next, to_c, k)) res.score_centroids.row(c) = x.row(static_cast<Eigen::Index>(i));
    if (next == labels) break;
    labels = std::move(next);

    res.score_centroids.setZero();
    std::vector<double> sizes(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      res.score_centroids.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
      sizes[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    for (Eigen::Index c = 0; c < kk; ++c) res.score_centroids.row(c) /= sizes[static_cast<std::size_t>(c)];
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += (x.row(static_cast<Eigen::Index>(i)) - res.score_centroids.row(labels[i])).squaredNorm();
    }
    res.per_iter_inertia.push_back(inertia);
    res.n_iter = iter + 1;
  }
  res.labels = std::move(labels);
  res.inertia = res.per_iter_inertia.empty() ? 0.0 : res.per_iter_inertia.back();
  res.distortion = res.inertia / static_cast<double>(n);
  return res;
}

}  // namespace

ClusterMode parse_cluster_mode(std::string_view name) {
  if (name == "raw") return ClusterMode::kRaw;
  if (name == "scores") return ClusterMode::kScores;
  raise(ErrorCode::kInvalidArgument, "unknown cluster mode '" + std::string(name) + "'");
}

std::string_view cluster_mode_name(ClusterMode mode) {
  return mode == ClusterMode::kRaw ? "raw" : "scores";
}

template <Scalar S>
Eigen::MatrixXd pairwise_distances(const BasicFlowSet<S>& set) {
  const auto n = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  const std::ptrdiff_t pairs = n * (n - 1) / 2;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    // Unrank p into (i, j) with i > j.
    auto i = static_cast<Eigen::Index>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(p))) / 2.0);
    while (i * (i - 1) / 2 > p) --i;
    while ((i + 1) * i / 2 <= p) ++i;
    const Eigen::Index j = p - i * (i - 1) / 2;
    const double v = flow_distance<S>(set[static_cast<std::size_t>(i)], set[static_cast<std::size_t>(j)]);
    out(i, j) = v;
    out(j, i) = v;
  }
  return out;
}

template <Scalar S>
KMeansResult<S> kmeans_flows(const BasicFlowSet<S>& set, std::size_t k, const KMeansConfig<S>& cfg) {
  const std::size_t n = set.size();
  if (k < 1 || k > n) raise(ErrorCode::kKOutOfRange, "k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  if (cfg.restarts == 0) raise(ErrorCode::kInvalidArgument, "restarts must be positive");
  if (cfg.max_iter < 1) raise(ErrorCode::kInvalidArgument, "max_iter must be positive");

  Eigen::MatrixXd pairwise;
  if (cfg.mode == ClusterMode::kScores) {
    if (!cfg.scores) raise(ErrorCode::kInvalidArgument, "scores mode needs a score matrix");
    if (static_cast<std::size_t>(cfg.scores->rows()) != n) raise(ErrorCode::kDimMismatch, "score matrix needs one row per flow");
  } else {
    pairwise = cfg.pairwise ? *cfg.pairwise : pairwise_distances<S>(set);
    if (static_cast<std::size_t>(pairwise.rows()) != n) raise(ErrorCode::kDimMismatch, "distance matrix needs one row per flow");
  }

  KMeansResult<S> best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    const std::uint64_t seed = cfg.seed + r;
    KMeansResult<S> run = cfg.mode == ClusterMode::kScores ? run_scores<S>(*cfg.scores, k, cfg.max_iter, seed)
                                                           : run_raw<S>(set, k, cfg, pairwise, seed);
    run.restart = r;
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

template <Scalar S>
std::vector<ElbowRow> elbow_scores(const BasicFlowSet<S>& set, std::size_t k_min, std::size_t k_max,
                                   const KMeansConfig<S>& cfg) {
  if (k_min < 1 || k_max < k_min || k_max > set.size()) {
    raise(ErrorCode::kKOutOfRange, "k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) + "] is invalid");
  }
  KMeansConfig<S> shared = cfg;
  if (shared.mode == ClusterMode::kRaw && !shared.pairwise) shared.pairwise = pairwise_distances<S>(set);
  std::vector<ElbowRow> rows;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const KMeansResult<S> r = kmeans_flows<S>(set, k, shared);
    ElbowRow row{k, r.inertia, r.distortion, std::numeric_limits<double>::quiet_NaN(), false};
    if (!rows.empty()) row.increased = row.inertia > rows.back().inertia;
    rows.push_back(row);
  }
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    rows[i].second_difference = rows[i - 1].inertia - 2.0 * rows[i].inertia + rows[i + 1].inertia;
  }
  return rows;
}

std::size_t elbow_k(const std::vector<ElbowRow>& rows) {
  std::size_t best = 0;
  double value = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (!std::isnan(r.second_difference) && r.second_difference > value) {
      value = r.second_difference;
      best = r.k;
    }
  }
  if (best == 0) raise(ErrorCode::kInvalidArgument, "elbow needs at least three rows");
  return best;
}

double label_agreement(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) raise(ErrorCode::kInvalidArgument, "label vectors differ in length");
  int k = 0;
  for (int v : a) k = std::max(k, v + 1);
  for (int v : b) k = std::max(k, v + 1);
  if (k > 8) raise(ErrorCode::kInvalidArgument, "label_agreement supports at most 8 labels");
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hits += perm[static_cast<std::size_t>(a[i])] == b[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

#define BWFLOW_INSTANTIATE(S)                                                                        \
  template Eigen::MatrixXd pairwise_distances<S>(const BasicFlowSet<S>&);                            \
  template KMeansResult<S> kmeans_flows<S>(const BasicFlowSet<S>&, std::size_t, const KMeansConfig<S>&); \
  template std::vector<ElbowRow> elbow_scores<S>(const BasicFlowSet<S>&, std::size_t, std::size_t,   \
                                                 const KMeansConfig<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
