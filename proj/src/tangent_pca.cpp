#include "bwflow/tangent_pca.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"

namespace bwflow {

namespace {

// Eigenvalues below this fraction of the mean's integrated trace count as zero.
constexpr double kAbsoluteZero = 1e-20;
constexpr double kRelativeZero = 1e-12;
constexpr double kModeMargin = 1e-6;

template <Scalar S>
double integrated_trace(const BasicFlow<S>& flow, std::span<const double> w) {
  double total = 0.0;
  for (std::size_t j = 0; j < flow.size(); ++j) total += w[j] * std::abs(real_trace<S>(flow[j]));
  return total;
}

}  // namespace

template <Scalar S>
double field_inner(const TangentField<S>& a, const TangentField<S>& b, std::span<const double> weights) {
  if (a.mats.size() != b.mats.size() || a.mats.size() != weights.size()) {
    raise(ErrorCode::kGridMismatch, "field_inner: fields live on different grids");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < a.mats.size(); ++j) total += weights[j] * hs_inner<S>(a.mats[j], b.mats[j]);
  return total;
}

template <Scalar S>
Eigen::VectorXd PcaModel<S>::variance_fractions() const {
  if (!(total_variance > 0.0)) return Eigen::VectorXd::Zero(eigenvalues.size());
  return eigenvalues / total_variance;
}

template <Scalar S>
TangentField<S> log_field(const BasicFlow<S>& flow, const BasicFlow<S>& mean) {
  if (!same_grid(flow.grid_ptr(), mean.grid_ptr())) {
    raise(ErrorCode::kGridMismatch, "log_field: flow and mean are on different grids");
  }
  if (flow.dim() != mean.dim()) raise(ErrorCode::kDimMismatch, "log_field: dimension mismatch");
  const std::size_t m = mean.size();
  TangentField<S> out{mean.grid_ptr(), std::vector<Matrix<S>>(m)};
  std::vector<std::optional<Error>> failures(m);
  const auto count = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    try {
      const PsdRoots<S> roots = psd_roots<S>(mean[j]);
      check_psd<S>(flow[j], "flow matrix");
      // (T - I) M^{1/2} written through the coupling factor, which also covers a
      // singular mean whose kernel the flow does not share.
      out.mats[j] = coupling_factor<S>(roots, sqrt_psd<S>(flow[j])) - roots.sqrt;
    } catch (const Error& e) {
      failures[j] = e;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (failures[j]) raise(failures[j]->code(), "log_field: time index " + std::to_string(j) + ": " + failures[j]->what());
  }
  return out;
}

template <Scalar S>
std::vector<TangentField<S>> log_field(const BasicFlowSet<S>& set, const BasicFlow<S>& mean) {
  std::vector<TangentField<S>> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    try {
      out.push_back(log_field<S>(set[i], mean));
    } catch (const Error& e) {
      raise(e.code(), "flow " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

template <Scalar S>
PcaModel<S> fit_pca(const std::vector<TangentField<S>>& fields, const BasicFlow<S>& mean, std::size_t k) {
  const std::size_t n = fields.size();
  if (n == 0) raise(ErrorCode::kInvalidArgument, "fit_pca: no fields");
  if (k > n) raise(ErrorCode::kKTooLarge, "fit_pca: K = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  for (const auto& f : fields) {
    if (!same_grid(f.grid, mean.grid_ptr())) raise(ErrorCode::kGridMismatch, "fit_pca: field grid differs from mean grid");
  }
  const std::vector<double> w = trapezoid_weights(mean.grid());

  Eigen::MatrixXd gram(n, n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    for (std::ptrdiff_t j = 0; j <= i; ++j) {
      const double g = field_inner<S>(fields[i], fields[j], w);
      gram(i, j) = g;
      gram(j, i) = g;
    }
  }

  PcaModel<S> model{mean, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k)), {}, {}, 0.0, 0.0};
  const double nd = static_cast<double>(n);
  model.total_variance = gram.trace() / nd;

  // Centering residual: norm of the average field.
  double mean_sq = gram.sum() / (nd * nd);
  model.mean_field_norm = std::sqrt(std::max(0.0, mean_sq));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram / nd);
  const Eigen::VectorXd values = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

  const double scale = integrated_trace<S>(mean, w);
  const double floor = std::max(kRelativeZero * (values.size() ? values(0) : 0.0), kAbsoluteZero * scale);
  std::size_t nonzero = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double lambda = values(static_cast<Eigen::Index>(c));
    if (lambda > floor && lambda > 0.0) {
      model.eigenvalues(static_cast<Eigen::Index>(c)) = lambda;
      ++nonzero;
    }
  }
  if (model.total_variance <= kAbsoluteZero * scale) model.total_variance = 0.0;

  const std::size_t m = mean.size();
  model.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nonzero));
  for (std::size_t c = 0; c < nonzero; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double lambda = values(ci);
    const double norm = std::sqrt(nd * lambda);
    TangentField<S> phi{mean.grid_ptr(), std::vector<Matrix<S>>(m)};
    for (std::size_t j = 0; j < m; ++j) {
      Matrix<S> acc = Matrix<S>::Zero(mean.dim(), mean.dim());
      for (std::size_t i = 0; i < n; ++i) acc += (vectors(static_cast<Eigen::Index>(i), ci) / norm) * fields[i].mats[j];
      phi.mats[j] = std::move(acc);
    }
    model.components.push_back(std::move(phi));
    model.scores.col(ci) = norm * vectors.col(ci);
  }
  return model;
}

template <Scalar S>
std::vector<Matrix<S>> unembedded_component(const PcaModel<S>& model, std::size_t k) {
  if (k >= model.n_components()) {
    raise(ErrorCode::kKOutOfRange, "component " + std::to_string(k) + " of " + std::to_string(model.n_components()));
  }
  std::vector<Matrix<S>> out(model.mean.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = hermitian_part<S>(Matrix<S>(model.components[k].mats[j] * pinv_sqrt_psd<S>(model.mean[j])));
  }
  return out;
}

template <Scalar S>
double mode_lambda_max(const PcaModel<S>& model, std::size_t k) {
  double largest = 0.0;
  for (const auto& psi : unembedded_component<S>(model, k)) largest = std::max(largest, operator_norm<S>(psi));
  return 1.0 / (largest + kModeMargin);
}

template <Scalar S>
BasicFlow<S> mode_of_variation(const PcaModel<S>& model, std::size_t k, double lambda) {
  const std::vector<Matrix<S>> psi = unembedded_component<S>(model, k);
  double largest = 0.0;
  for (const auto& p : psi) largest = std::max(largest, operator_norm<S>(p));
  const double lambda_star = 1.0 / (largest + kModeMargin);
  if (std::abs(lambda) > lambda_star) {
    raise(ErrorCode::kLambdaTooLarge, "mode_of_variation: |lambda| exceeds lambda* = " + std::to_string(lambda_star));
  }
  std::vector<Matrix<S>> mats(psi.size());
  for (std::size_t j = 0; j < psi.size(); ++j) {
    const Eigen::Index d = psi[j].rows();
    const Matrix<S> step = lambda * psi[j] + Matrix<S>::Identity(d, d);
    mats[j] = project_psd<S>(hermitian_part<S>(Matrix<S>(step * model.mean[j] * step)));
  }
  return BasicFlow<S>(model.mean.grid_ptr(), std::move(mats));
}

template <Scalar S>
Eigen::VectorXd project_scores(const BasicFlow<S>& flow, const PcaModel<S>& model) {
  const TangentField<S> chi = log_field<S>(flow, model.mean);
  const std::vector<double> w = model.weights();
  Eigen::VectorXd out(static_cast<Eigen::Index>(model.n_components()));
  for (std::size_t c = 0; c < model.n_components(); ++c) {
    out(static_cast<Eigen::Index>(c)) = field_inner<S>(chi, model.components[c], w);
  }
  return out;
}

#define BWFLOW_INSTANTIATE(S)                                                                              \
  template double field_inner<S>(const TangentField<S>&, const TangentField<S>&, std::span<const double>); \
  template struct PcaModel<S>;                                                                             \
  template TangentField<S> log_field<S>(const BasicFlow<S>&, const BasicFlow<S>&);                         \
  template std::vector<TangentField<S>> log_field<S>(const BasicFlowSet<S>&, const BasicFlow<S>&);         \
  template PcaModel<S> fit_pca<S>(const std::vector<TangentField<S>>&, const BasicFlow<S>&, std::size_t);  \
  template double mode_lambda_max<S>(const PcaModel<S>&, std::size_t);                                     \
  template BasicFlow<S> mode_of_variation<S>(const PcaModel<S>&, std::size_t, double);                     \
  template std::vector<Matrix<S>> unembedded_component<S>(const PcaModel<S>&, std::size_t);                \
  template Eigen::VectorXd project_scores<S>(const BasicFlow<S>&, const PcaModel<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
