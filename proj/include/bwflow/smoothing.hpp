#pragma once

// Smoothing estimators for discretely or sparsely observed flows.

#include <cstdint>
#include <vector>

#include "bwflow/barycenter.hpp"
#include "bwflow/flow.hpp"

namespace bwflow {

enum class KernelKind { kUniform, kEpanechnikov, kGaussianTruncated };

/// Scaled smoothing kernel K_h(u) = K(u / h) / h with compact support.
struct Kernel {
  KernelKind kind = KernelKind::kEpanechnikov;
  double bandwidth = 0.1;

  Kernel() = default;
  Kernel(KernelKind k, double h);

  /// Unscaled profile K(u).
  double profile(double u) const;
  double operator()(double u) const { return profile(u / bandwidth) / bandwidth; }
  /// Half-width of the support of K (before scaling).
  double support() const { return kind == KernelKind::kGaussianTruncated ? 4.0 : 1.0; }
};

KernelKind parse_kernel_kind(std::string_view name);
std::string_view kernel_kind_name(KernelKind kind);

template <Scalar S>
struct ScatterObs {
  std::vector<double> times;
  std::vector<Matrix<S>> mats;
  std::vector<std::int64_t> flow_ids;

  std::size_t size() const { return times.size(); }
  /// Throws InvalidArgument / DimMismatch; PSD-checks every matrix.
  void validate() const;
  /// Distinct flow ids in first-appearance order.
  std::vector<std::int64_t> distinct_flows() const;
  ScatterObs subset(std::int64_t flow_id, bool keep) const;
};

/// Observations of a flow set at the grid points where mask(i, j) is true.
template <Scalar S>
ScatterObs<S> scatter_from_flowset(const BasicFlowSet<S>& set, const std::vector<std::vector<bool>>& mask);

/// Kernel-weighted Euclidean average at each evaluation point, PSD-projected.
/// EmptyWindow lists every uncovered evaluation point.
template <Scalar S>
BasicFlow<S> nw_smooth(const ScatterObs<S>& obs, const Kernel& kernel, const Grid& eval_grid);

template <Scalar S>
std::vector<Matrix<S>> nw_smooth_at(const ScatterObs<S>& obs, const Kernel& kernel, std::span<const double> times);

struct LfrWeights {
  std::vector<double> s;    // (1/r) sum_j s_j == 1
  bool fell_back = false;   // singular local moments: Nadaraya-Watson weights instead
};

LfrWeights lfr_weights(std::span<const double> times, double t, const Kernel& kernel);

struct LfrPointDiagnostics {
  bool clipped = false;          // negative weights clipped to keep the iteration in the cone
  bool fell_back = false;        // moment matrix singular
  bool low_signed_sum = false;   // signed weight sum < 0.1 * absolute sum
  bool converged = false;
  ConvergenceTrace trace;
};

template <Scalar S>
struct LfrResult {
  BasicFlow<S> flow;
  std::vector<LfrPointDiagnostics> points;

  bool converged() const;
};

/// Local Fréchet regression: at each t the weighted barycenter with local-linear
/// weights s(T, t, h).
template <Scalar S>
LfrResult<S> lfr_estimate(const ScatterObs<S>& obs, const Kernel& kernel, const Grid& eval_grid,
                          const GdConfig<S>& cfg = {});

template <Scalar S>
std::vector<Matrix<S>> lfr_estimate_at(const ScatterObs<S>& obs, const Kernel& kernel,
                                       std::span<const double> times, const GdConfig<S>& cfg,
                                       std::vector<LfrPointDiagnostics>* diagnostics = nullptr);

/// One embedded tangent observation chi_ij at time T_ij of flow i.
template <Scalar S>
struct TangentObs {
  std::int64_t flow_id = 0;
  double time = 0.0;
  Matrix<S> chi;
};

/// Smoothed covariance surface; value(s, t) is a d^2 x d^2 matrix acting on
/// column-major vec() of d x d matrices.
template <Scalar S>
struct CovSurface {
  std::vector<double> grid_s;
  std::vector<double> grid_t;
  Eigen::Index dim = 0;
  std::vector<Matrix<S>> values;  // row-major over (s, t)

  const Matrix<S>& at(std::size_t is, std::size_t it) const { return values[is * grid_t.size() + it]; }
};

/// Local-linear smoother of the cross products chi_ij (x) chi_il, j != l.
template <Scalar S>
CovSurface<S> cov_surface_smooth(const std::vector<TangentObs<S>>& obs, const Kernel& kernel,
                                 std::span<const double> grid_s, std::span<const double> grid_t);

template <Scalar S>
struct SurfaceEigen {
  Eigen::VectorXd eigenvalues;
  std::vector<std::vector<Matrix<S>>> eigenfunctions;  // [k][t], d x d, unit norm under trapezoid weights
};

/// Eigen-analysis of the integral operator of a square surface (grid_s == grid_t).
/// Diagonal blocks are symmetrized and PSD-projected first.
template <Scalar S>
SurfaceEigen<S> surface_eigen(const CovSurface<S>& surface, std::size_t k);

enum class SmoothMode { kNw, kLfr };

struct BandwidthRow {
  double bandwidth = 0.0;
  double cv_error = 0.0;
  std::size_t failures = 0;  // held-out points with an empty window
};

/// Cross-validation sweep: leave-one-observation-out within each flow for NW,
/// leave-one-flow-out for LFR.
template <Scalar S>
std::vector<BandwidthRow> bandwidth_sweep(const ScatterObs<S>& obs, KernelKind kind,
                                          std::span<const double> candidates, SmoothMode mode,
                                          const GdConfig<S>& cfg = {});

/// Candidate with the smallest error among rows without failures.
double best_bandwidth(const std::vector<BandwidthRow>& rows);

/// Log-spaced candidate bandwidths.
std::vector<double> log_bandwidths(double lo, double hi, std::size_t count);

}  // namespace bwflow
