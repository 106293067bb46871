#pragma once

// Pointwise Bures-Wasserstein geometry on covariance matrices.

#include "bwflow/psd.hpp"

namespace bwflow {

/// Pi(F, G) = sqrt(tr F + tr G - 2 tr (G^{1/2} F G^{1/2})^{1/2}).
template <Scalar S>
double bw_distance(const Matrix<S>& f, const Matrix<S>& g);

/// Squared distance computed from a precomputed square root of F.
template <Scalar S>
double bw_distance_sq_with_root(const Matrix<S>& f_sqrt, double f_trace, const Matrix<S>& g);

/// tr (A^{1/2} B A^{1/2})^{1/2}, the fidelity term of the distance.
template <Scalar S>
double bw_fidelity(const Matrix<S>& a, const Matrix<S>& b);

/// Optimal map T with T F T = G, under the pseudo-inverse convention on
/// ker(F). Throws KernelNotNested unless ker(F) is contained in ker(G).
template <Scalar S>
Matrix<S> transport_map(const Matrix<S>& f, const Matrix<S>& g, double rank_tol = kRankTol);

/// Same as transport_map but reuses the roots of F.
template <Scalar S>
Matrix<S> transport_map_from_roots(const PsdRoots<S>& f_roots, const Matrix<S>& g,
                                   double rank_tol = kRankTol);

/// Optimal coupling factor Y = G^{1/2} Q: the pair (F^{1/2} Z, Y Z) is an
/// optimal coupling of N(0, F) and N(0, G). Equals T F^{1/2} whenever the map
/// T from F to G exists, and stays defined when F is singular with a kernel
/// that is not nested in ker(G). Throws KernelNotNested when F^{1/2} cannot
/// reach the support of G: some direction of range(G) is orthogonal to range(F)
/// up to a principal-angle cosine of sqrt(rank_tol).
template <Scalar S>
Matrix<S> coupling_factor(const PsdRoots<S>& f_roots, const Matrix<S>& g_sqrt, double rank_tol = kRankTol);

/// McCann interpolant [lambda T + (1 - lambda) I] F0 [lambda T + (1 - lambda) I].
template <Scalar S>
Matrix<S> geodesic(const Matrix<S>& f0, const Matrix<S>& f1, double lambda,
                   double rank_tol = kRankTol);

/// log_F(G) = T_F^G - I.
template <Scalar S>
Matrix<S> log_map(const Matrix<S>& f, const Matrix<S>& g, double rank_tol = kRankTol);

/// exp_F(Gamma) = (Gamma + I) F (Gamma + I), projected onto the PSD cone.
template <Scalar S>
Matrix<S> exp_map(const Matrix<S>& f, const Matrix<S>& gamma);

/// Re tr(U F V).
template <Scalar S>
double tangent_inner(const Matrix<S>& f, const Matrix<S>& u, const Matrix<S>& v);

/// Canonical embedding U -> U F^{1/2} into Hilbert-Schmidt matrices.
template <Scalar S>
Matrix<S> embed(const Matrix<S>& f, const Matrix<S>& u);

namespace detail {

template <Scalar S>
struct TransportWithFidelity {
  Matrix<S> map;
  double fidelity = 0.0;  // tr (F^{1/2} G F^{1/2})^{1/2}
};

// Shared inner step of gradient descent: one eigendecomposition yields both the
// transport map and the distance. The kernel-nesting check is skipped when F
// has full rank or when check_kernel is false (pseudo-inverse formula only).
template <Scalar S>
TransportWithFidelity<S> transport_with_fidelity(const PsdRoots<S>& f_roots, const Matrix<S>& g,
                                                 double rank_tol, bool check_kernel = true);

template <Scalar S>
struct CouplingWithFidelity {
  Matrix<S> factor;       // G^{1/2} U, equal to T F^{1/2} on the range of F
  double fidelity = 0.0;  // sum of the singular values of G^{1/2} F^{1/2}
};

template <Scalar S>
CouplingWithFidelity<S> coupling_with_fidelity(const PsdRoots<S>& f_roots, const Matrix<S>& g_sqrt, double rank_tol);

}  // namespace detail

}  // namespace bwflow
