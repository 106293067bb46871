#pragma once

// Tangent-space PCA of a flow set at its Fréchet mean flow. Log-fields are
// embedded into Hilbert-Schmidt matrices (chi = (T - I) M^{1/2}), where the
// geometry is flat and ordinary PCA applies.

#include <cstddef>
#include <vector>

#include "bwflow/flow.hpp"

namespace bwflow {

/// Per-grid-point matrices on a shared grid; entries need not be Hermitian.
template <Scalar S>
struct TangentField {
  Grid grid;
  std::vector<Matrix<S>> mats;
};

/// sum_t w_t Re tr(A_t B_t^*).
template <Scalar S>
double field_inner(const TangentField<S>& a, const TangentField<S>& b, std::span<const double> weights);

template <Scalar S>
struct PcaModel {
  BasicFlow<S> mean;
  Eigen::VectorXd eigenvalues;           // first K eigenvalues, descending, zeros allowed
  std::vector<TangentField<S>> components;  // one per nonzero eigenvalue among the first K
  Eigen::MatrixXd scores;                // n x components.size()
  double total_variance = 0.0;
  double mean_field_norm = 0.0;          // || (1/n) sum chi_i ||, the centering residual

  std::size_t n_components() const { return components.size(); }
  /// eigenvalues / total_variance (zero when the total is zero).
  Eigen::VectorXd variance_fractions() const;
  std::vector<double> weights() const { return trapezoid_weights(mean.grid()); }
};

/// chi_i(t) = (T_{M(t)}^{F_i(t)} - I) M(t)^{1/2}; KernelNotNested carries (i, t).
template <Scalar S>
std::vector<TangentField<S>> log_field(const BasicFlowSet<S>& set, const BasicFlow<S>& mean);

/// Log-field of one flow.
template <Scalar S>
TangentField<S> log_field(const BasicFlow<S>& flow, const BasicFlow<S>& mean);

/// PCA through the n x n Gram matrix of the fields. K <= n (KTooLarge).
template <Scalar S>
PcaModel<S> fit_pca(const std::vector<TangentField<S>>& fields, const BasicFlow<S>& mean,
                    std::size_t k);

/// Largest |lambda| for which lambda Psi_k + I stays PSD (with a 1e-6 margin).
template <Scalar S>
double mode_lambda_max(const PcaModel<S>& model, std::size_t k);

/// t -> (lambda Psi_k(t) + I) M(t) (lambda Psi_k(t) + I), k zero-based.
template <Scalar S>
BasicFlow<S> mode_of_variation(const PcaModel<S>& model, std::size_t k, double lambda);

/// Un-embedded component Psi_k(t) = phi_k(t) M(t)^{-1/2}, Hermitian part.
template <Scalar S>
std::vector<Matrix<S>> unembedded_component(const PcaModel<S>& model, std::size_t k);

template <Scalar S>
Eigen::VectorXd project_scores(const BasicFlow<S>& flow, const PcaModel<S>& model);

}  // namespace bwflow
