#include "bwflow/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"

namespace bwflow {

namespace {

template <Scalar S>
void require_common_dim(std::span<const Matrix<S>> samples) {
  if (samples.empty()) raise(ErrorCode::kInvalidArgument, "Fréchet mean of an empty sample");
  const Eigen::Index d = samples.front().rows();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].rows() != d || samples[i].cols() != d) {
      raise(ErrorCode::kDimMismatch, "sample " + std::to_string(i) + " has the wrong shape");
    }
    check_psd<S>(samples[i], "sample " + std::to_string(i));
  }
}

template <Scalar S>
Matrix<S> initial_point(std::span<const Matrix<S>> samples, std::span<const double> weights,
                        const GdConfig<S>& cfg) {
  switch (cfg.init) {
    case InitKind::kSampleIndex:
      if (cfg.init_index >= samples.size()) {
        raise(ErrorCode::kInvalidArgument, "init index out of range");
      }
      return samples[cfg.init_index];
    case InitKind::kExplicit:
      if (!cfg.init_matrix) raise(ErrorCode::kInvalidArgument, "explicit init requires a matrix");
      check_psd<S>(*cfg.init_matrix, "initial point");
      return *cfg.init_matrix;
    case InitKind::kEuclideanMean:
      break;
  }
  // Average of the positively weighted samples: PSD even for signed weights.
  const Eigen::Index d = samples.front().rows();
  Matrix<S> acc = Matrix<S>::Zero(d, d);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = std::max(weights[i], 0.0);
    acc += w * samples[i];
    total += w;
  }
  return total > 0.0 ? Matrix<S>(acc / total) : acc;
}

struct GdOutcome {
  bool left_cone = false;
};

template <Scalar S>
std::vector<Matrix<S>> sample_roots(std::span<const Matrix<S>> samples) {
  std::vector<Matrix<S>> roots;
  roots.reserve(samples.size());
  for (const auto& f : samples) roots.push_back(sqrt_psd<S>(f));
  return roots;
}

template <Scalar S>
detail::CouplingWithFidelity<S> coupling_or_degenerate(const PsdRoots<S>& roots, const Matrix<S>& g_sqrt,
                                                       std::size_t i, double rank_tol) {
  try {
    return detail::coupling_with_fidelity<S>(roots, g_sqrt, rank_tol);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kKernelNotNested) throw;
    raise(ErrorCode::kAllDegenerate, "Fréchet mean: iterate is not injective on the support of sample " +
                                         std::to_string(i) + " (" + e.what() + ")");
  }
}

// Gradient descent on the weighted Fréchet functional. Weights are assumed to
// sum to one. The step M -> T M T is taken in factored form: with Y_i the
// optimal coupling factor of M and F_i, the next iterate is (sum w_i Y_i)(...)^*.
// This is the same step whenever the maps exist, needs no inverse of M, and
// lets the iterate settle on a singular barycenter whose kernel is not shared
// by the samples.
template <Scalar S>
GdOutcome run_gd(std::span<const Matrix<S>> samples, std::span<const double> weights,
                 Matrix<S> m, const GdConfig<S>& cfg, bool stop_on_cone_exit,
                 MeanResult<S>& out) {
  const Eigen::Index d = samples.front().rows();
  const std::vector<Matrix<S>> roots_of = sample_roots<S>(samples);
  out.trace = {};
  for (int k = 0; k < cfg.max_iter; ++k) {
    const PsdRoots<S> roots = psd_roots<S>(m, cfg.rank_tol);
    const double m_trace = real_trace<S>(m);
    Matrix<S> y = Matrix<S>::Zero(d, d);
    double functional = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const auto c = coupling_or_degenerate<S>(roots, roots_of[i], i, cfg.rank_tol);
      y += weights[i] * c.factor;
      const double sq = std::max(0.0, m_trace + real_trace<S>(samples[i]) - 2.0 * c.fidelity);
      functional += weights[i] * sq;
    }
    // Y_i = T_i M^{1/2}, so the averaged map minus I on range(M) is (Y - M^{1/2}) M^{+1/2}.
    // One inverse root instead of two keeps the residual accurate on ill-conditioned iterates.
    const Matrix<S> shift_map = hermitian_part<S>(Matrix<S>((y - roots.sqrt) * roots.pinv_sqrt));
    const Matrix<S> t = shift_map + roots.range_projector;
    const Eigen::VectorXd shift = detail::eig_unchecked<S>(shift_map).values;
    const double residual =
        shift.size() ? std::max(std::abs(shift(0)), std::abs(shift(shift.size() - 1))) : 0.0;
    out.trace.records.push_back({k, functional, residual});
    if (residual <= cfg.tol) {
      out.trace.converged = true;
      out.mean = m;
      return {};
    }
    if (stop_on_cone_exit && roots.rank > 0) {
      // The averaged map must stay positive on the range of the iterate.
      const Matrix<S> restricted = roots.range_projector * t * roots.range_projector +
                                   (Matrix<S>::Identity(d, d) - roots.range_projector);
      if (min_eigenvalue<S>(restricted) <= 0.0) {
        out.mean = m;
        return {true};
      }
    }
    m = hermitian_part<S>(Matrix<S>(y * y.adjoint()));
  }
  out.mean = m;
  return {};
}

// Runs GD from the configured start; a singular start that cannot reach every
// sample is replaced by the weighted Euclidean mean before giving up.
template <Scalar S>
GdOutcome run_gd_from_config(std::span<const Matrix<S>> samples, std::span<const double> weights,
                             const GdConfig<S>& cfg, bool stop_on_cone_exit, MeanResult<S>& out) {
  try {
    return run_gd<S>(samples, weights, initial_point<S>(samples, weights, cfg), cfg, stop_on_cone_exit, out);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kAllDegenerate || cfg.init == InitKind::kEuclideanMean) throw;
  }
  GdConfig<S> fallback = cfg;
  fallback.init = InitKind::kEuclideanMean;
  return run_gd<S>(samples, weights, initial_point<S>(samples, weights, fallback), fallback, stop_on_cone_exit,
                   out);
}

}  // namespace

template <Scalar S>
Matrix<S> euclidean_mean(std::span<const Matrix<S>> samples) {
  if (samples.empty()) raise(ErrorCode::kInvalidArgument, "mean of an empty sample");
  Matrix<S> acc = samples.front();
  for (std::size_t i = 1; i < samples.size(); ++i) acc += samples[i];
  return acc / static_cast<double>(samples.size());
}

template <Scalar S>
MeanResult<S> frechet_mean_gd(std::span<const Matrix<S>> samples, const GdConfig<S>& cfg) {
  if (cfg.max_iter < 1) raise(ErrorCode::kInvalidArgument, "max_iter must be at least 1");
  if (!(cfg.tol > 0.0)) raise(ErrorCode::kInvalidArgument, "tol must be positive");
  require_common_dim<S>(samples);
  const std::vector<double> weights(samples.size(), 1.0 / static_cast<double>(samples.size()));
  MeanResult<S> out;
  run_gd_from_config<S>(samples, weights, cfg, false, out);
  return out;
}

template <Scalar S>
WeightedMeanResult<S> weighted_frechet_mean(std::span<const Matrix<S>> samples,
                                            std::span<const double> weights,
                                            const GdConfig<S>& cfg) {
  if (cfg.max_iter < 1) raise(ErrorCode::kInvalidArgument, "max_iter must be at least 1");
  if (!(cfg.tol > 0.0)) raise(ErrorCode::kInvalidArgument, "tol must be positive");
  require_common_dim<S>(samples);
  if (weights.size() != samples.size()) raise(ErrorCode::kInvalidArgument, "one weight per sample required");

  std::vector<double> w(weights.begin(), weights.end());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  WeightedMeanResult<S> result;
  bool has_negative = std::any_of(w.begin(), w.end(), [](double x) { return x < 0.0; });
  if (!(total > 0.0)) {
    has_negative = true;
    result.clipped = true;
    for (double& x : w) x = std::max(x, 0.0);
  }
  auto normalize = [](std::vector<double>& v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    if (!(s > 0.0)) raise(ErrorCode::kEmptyWindow, "weighted Fréchet mean: no positive weight");
    for (double& x : v) x /= s;
  };
  normalize(w);

  MeanResult<S> run;
  GdOutcome outcome = run_gd_from_config<S>(samples, w, cfg, has_negative && !result.clipped, run);
  if (outcome.left_cone) {
    result.clipped = true;
    for (double& x : w) x = std::max(x, 0.0);
    normalize(w);
    run_gd_from_config<S>(samples, w, cfg, false, run);
  }
  result.mean = std::move(run.mean);
  result.trace = std::move(run.trace);
  return result;
}

template <Scalar S>
Matrix<S> frechet_mean_sgd(std::span<const Matrix<S>> samples, const SgdConfig& cfg,
                           const std::optional<Matrix<S>>& init) {
  if (cfg.steps < 1) raise(ErrorCode::kInvalidArgument, "SGD needs at least one step");
  if (!(cfg.step_a > 0.0) || !(cfg.step_b > -1.0) || cfg.step(1) > 1.0) {
    raise(ErrorCode::kInvalidArgument, "SGD step sizes a / (k + b) must lie in (0, 1]");
  }
  require_common_dim<S>(samples);
  Matrix<S> m = init ? *init : euclidean_mean<S>(samples);
  if (init) check_psd<S>(m, "initial point");
  const std::vector<Matrix<S>> roots_of = sample_roots<S>(samples);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  for (int k = 1; k <= cfg.steps; ++k) {
    std::size_t idx = 0;
    if (cfg.resample == ResampleKind::kWithReplacement) {
      idx = pick(rng);
    } else {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx = order[cursor++];
    }
    const double eta = cfg.step(k);
    const PsdRoots<S> roots = psd_roots<S>(m, cfg.rank_tol);
    // Factored geodesic step: ((1 - eta) M^{1/2} + eta Y)(...)^*.
    const Matrix<S> x = (1.0 - eta) * roots.sqrt +
                        eta * coupling_or_degenerate<S>(roots, roots_of[idx], idx, cfg.rank_tol).factor;
    m = hermitian_part<S>(Matrix<S>(x * x.adjoint()));
  }
  return m;
}

template <Scalar S>
double frechet_functional(const Matrix<S>& m, std::span<const Matrix<S>> samples) {
  if (samples.empty()) return 0.0;
  const Matrix<S> root = sqrt_psd<S>(m);
  const double m_trace = real_trace<S>(m);
  double total = 0.0;
  for (const auto& f : samples) total += bw_distance_sq_with_root<S>(root, m_trace, f);
  return total / static_cast<double>(samples.size());
}

template <Scalar S>
double fixed_point_residual(const Matrix<S>& m, std::span<const Matrix<S>> samples, double rank_tol) {
  const PsdRoots<S> roots = psd_roots<S>(m, rank_tol);
  const double n = static_cast<double>(samples.size());
  try {
    // Coupling form: the maps themselves lose sqrt(eps) on rank-deficient samples.
    Matrix<S> y = Matrix<S>::Zero(m.rows(), m.cols());
    for (const auto& f : samples) y += coupling_factor<S>(roots, sqrt_psd<S>(f), rank_tol);
    return operator_norm<S>(Matrix<S>(hermitian_part<S>(Matrix<S>((y / n - roots.sqrt) * roots.pinv_sqrt))));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kKernelNotNested) throw;
  }
  Matrix<S> t = Matrix<S>::Zero(m.rows(), m.cols());
  for (const auto& f : samples) t += detail::transport_with_fidelity<S>(roots, f, rank_tol, false).map;
  return operator_norm<S>(Matrix<S>(hermitian_part<S>(t / n) - roots.range_projector));
}

template <Scalar S>
bool MeanFlowResult<S>::converged() const {
  return std::all_of(traces.begin(), traces.end(), [](const ConvergenceTrace& t) { return t.converged; });
}

template <Scalar S>
MeanFlowResult<S> frechet_mean_flow(const BasicFlowSet<S>& set, const MeanFlowConfig<S>& cfg) {
  if (set.size() == 0) raise(ErrorCode::kInvalidArgument, "Fréchet mean flow of an empty set");
  if (cfg.init_flow && !same_grid(cfg.init_flow->grid_ptr(), set.grid_ptr())) {
    raise(ErrorCode::kGridMismatch, "initial flow is on a different grid");
  }
  const std::size_t m = set.n_times();
  std::vector<Matrix<S>> means(m);
  std::vector<ConvergenceTrace> traces(cfg.algorithm == MeanAlgorithm::kGd ? m : 0);

  auto solve = [&](std::size_t j, const std::optional<Matrix<S>>& start) {
    const std::vector<Matrix<S>> samples = set.slice(j);
    try {
      if (cfg.algorithm == MeanAlgorithm::kGd) {
        GdConfig<S> gd = cfg.gd;
        if (start) {
          gd.init = InitKind::kExplicit;
          gd.init_matrix = start;
        }
        MeanResult<S> r = frechet_mean_gd<S>(samples, gd);
        means[j] = std::move(r.mean);
        traces[j] = std::move(r.trace);
      } else {
        means[j] = frechet_mean_sgd<S>(samples, cfg.sgd, start);
      }
    } catch (const Error& e) {
      raise(ErrorCode::kPointwiseFailure, "grid index " + std::to_string(j) + ": " +
                                              std::string(error_code_name(e.code())) + ": " + e.what());
    }
  };

  if (cfg.warm_start && !cfg.init_flow) {
    std::optional<Matrix<S>> start;
    for (std::size_t j = 0; j < m; ++j) {
      solve(j, start);
      start = means[j];
    }
  } else {
    // Independent grid points; exceptions are collected and rethrown in order.
    std::vector<std::string> failures(m);
    const auto count = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
      try {
        std::optional<Matrix<S>> start;
        if (cfg.init_flow) start = (*cfg.init_flow)[j];
        solve(static_cast<std::size_t>(j), start);
      } catch (const std::exception& e) {
        failures[j] = e.what();
      }
    }
    for (const auto& f : failures) {
      if (!f.empty()) raise(ErrorCode::kPointwiseFailure, f);
    }
  }
  return {BasicFlow<S>(set.grid_ptr(), std::move(means)), std::move(traces)};
}

#define BWFLOW_INSTANTIATE(S)                                                                       \
  template MeanResult<S> frechet_mean_gd<S>(std::span<const Matrix<S>>, const GdConfig<S>&);         \
  template WeightedMeanResult<S> weighted_frechet_mean<S>(std::span<const Matrix<S>>,               \
                                                          std::span<const double>,                 \
                                                          const GdConfig<S>&);                     \
  template Matrix<S> frechet_mean_sgd<S>(std::span<const Matrix<S>>, const SgdConfig&,              \
                                         const std::optional<Matrix<S>>&);                         \
  template double frechet_functional<S>(const Matrix<S>&, std::span<const Matrix<S>>);              \
  template double fixed_point_residual<S>(const Matrix<S>&, std::span<const Matrix<S>>, double);    \
  template Matrix<S> euclidean_mean<S>(std::span<const Matrix<S>>);                                 \
  template struct MeanFlowResult<S>;                                                                \
  template MeanFlowResult<S> frechet_mean_flow<S>(const BasicFlowSet<S>&, const MeanFlowConfig<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
