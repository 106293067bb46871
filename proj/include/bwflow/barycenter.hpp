#pragma once

// Pointwise Fréchet means of covariance matrices (gradient descent and
// stochastic gradient descent) and their stitching into mean flows.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bwflow/flow.hpp"

namespace bwflow {

enum class InitKind { kEuclideanMean, kSampleIndex, kExplicit };

template <Scalar S>
struct GdConfig {
  int max_iter = 200;
  double tol = 1e-8;  // on the operator norm of (mean map - I)
  InitKind init = InitKind::kEuclideanMean;
  std::size_t init_index = 0;
  std::optional<Matrix<S>> init_matrix;
  double rank_tol = kRankTol;
};

enum class ResampleKind {
  kWithReplacement,
  kReshuffle,  // sampling without replacement, fresh permutation per epoch
};

struct SgdConfig {
  int steps = 5000;
  double step_a = 2.0;  // eta_k = a / (k + b), k = 1, 2, ...
  double step_b = 2.0;
  std::uint64_t seed = 0;
  ResampleKind resample = ResampleKind::kReshuffle;
  double rank_tol = kRankTol;

  double step(int k) const { return step_a / (static_cast<double>(k) + step_b); }
};

struct IterationRecord {
  int iteration = 0;
  double functional = 0.0;  // (1/n) sum Pi^2(M_k, F_i), or its weighted version
  double residual = 0.0;    // || T_k - P_k ||_op on the range of M_k
};

struct ConvergenceTrace {
  std::vector<IterationRecord> records;
  bool converged = false;
};

template <Scalar S>
struct MeanResult {
  Matrix<S> mean;
  ConvergenceTrace trace;
};

template <Scalar S>
MeanResult<S> frechet_mean_gd(std::span<const Matrix<S>> samples, const GdConfig<S>& cfg = {});

/// Gradient descent with signed weights summing to one. When the averaged map
/// leaves the PSD cone the negative weights are clipped at zero and the run is
/// restarted; `clipped` reports that fallback.
template <Scalar S>
struct WeightedMeanResult {
  Matrix<S> mean;
  ConvergenceTrace trace;
  bool clipped = false;
};

template <Scalar S>
WeightedMeanResult<S> weighted_frechet_mean(std::span<const Matrix<S>> samples,
                                            std::span<const double> weights,
                                            const GdConfig<S>& cfg = {});

template <Scalar S>
Matrix<S> frechet_mean_sgd(std::span<const Matrix<S>> samples, const SgdConfig& cfg = {},
                           const std::optional<Matrix<S>>& init = std::nullopt);

/// (1/n) sum_i Pi^2(M, F_i).
template <Scalar S>
double frechet_functional(const Matrix<S>& m, std::span<const Matrix<S>> samples);

/// || (1/n) sum_i T_M^{F_i} - P_M ||_op, the first-order optimality residual.
template <Scalar S>
double fixed_point_residual(const Matrix<S>& m, std::span<const Matrix<S>> samples,
                            double rank_tol = kRankTol);

template <Scalar S>
Matrix<S> euclidean_mean(std::span<const Matrix<S>> samples);

enum class MeanAlgorithm { kGd, kSgd };

template <Scalar S>
struct MeanFlowConfig {
  MeanAlgorithm algorithm = MeanAlgorithm::kGd;
  GdConfig<S> gd;
  SgdConfig sgd;
  bool warm_start = true;
  /// Optional per-grid-point starting flow (same grid); overrides gd.init.
  std::optional<BasicFlow<S>> init_flow;
};

template <Scalar S>
struct MeanFlowResult {
  BasicFlow<S> mean;
  std::vector<ConvergenceTrace> traces;  // one per grid point (empty for SGD)

  bool converged() const;
};

template <Scalar S>
MeanFlowResult<S> frechet_mean_flow(const BasicFlowSet<S>& set, const MeanFlowConfig<S>& cfg = {});

}  // namespace bwflow
