#pragma once

// Dense Hermitian matrix calculus over real-symmetric and complex-Hermitian
// matrices. Every matrix function goes through a Hermitian eigendecomposition.

#include <Eigen/Dense>

#include <complex>
#include <concepts>
#include <cstdint>
#include <string_view>

namespace bwflow {

using Complex = std::complex<double>;

template <class S>
concept Scalar = std::same_as<S, double> || std::same_as<S, Complex>;

template <Scalar S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<Complex>;

enum class ScalarKind : std::uint8_t { kReal = 0, kComplex = 1 };

template <Scalar S>
inline constexpr ScalarKind kScalarKindOf =
    std::same_as<S, double> ? ScalarKind::kReal : ScalarKind::kComplex;

/// Eigenvalues below -kPsdTol * max|eigenvalue| make a matrix "not PSD";
/// anything above that is clamped to zero before rooting.
inline constexpr double kPsdTol = 1e-10;
/// Relative (to the largest entry) tolerance on A - A^*.
inline constexpr double kHermitianTol = 1e-12;
/// Default relative cut-off for pseudo-inverse square roots and range projectors.
inline constexpr double kRankTol = 1e-10;

template <Scalar S>
struct EigenPair {
  Eigen::VectorXd values;  // descending
  Matrix<S> vectors;       // columns are eigenvectors
};

/// Square root and pseudo-inverse square root sharing one eigendecomposition.
template <Scalar S>
struct PsdRoots {
  Matrix<S> sqrt;
  Matrix<S> pinv_sqrt;
  Matrix<S> range_projector;
  Eigen::Index rank = 0;
  double lambda_max = 0.0;
};

/// max |A_ij - conj(A_ji)| divided by max |A_ij| (0 for the zero matrix).
template <Scalar S>
double hermitian_residual(const Matrix<S>& a);

/// Throws NonFinite / NonHermitian / DimMismatch (non-square). `what` names the
/// argument in the error message.
template <Scalar S>
void check_hermitian(const Matrix<S>& a, std::string_view what = "matrix");

/// Throws NotPSD in addition to the Hermitian checks.
template <Scalar S>
void check_psd(const Matrix<S>& a, std::string_view what = "matrix");

template <Scalar S>
Matrix<S> hermitian_part(const Matrix<S>& a) {
  return (a + a.adjoint()) * 0.5;
}

template <Scalar S>
EigenPair<S> hermitian_eig(const Matrix<S>& a);

template <Scalar S>
Matrix<S> sqrt_psd(const Matrix<S>& a);

template <Scalar S>
Matrix<S> pinv_sqrt_psd(const Matrix<S>& a, double rank_tol = kRankTol);

template <Scalar S>
PsdRoots<S> psd_roots(const Matrix<S>& a, double rank_tol = kRankTol);

/// Orthogonal projector onto the span of eigenvectors with eigenvalue
/// >= rank_tol * lambda_max.
template <Scalar S>
Matrix<S> range_projector(const Matrix<S>& a, double rank_tol = kRankTol);

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped at zero.
template <Scalar S>
Matrix<S> project_psd(const Matrix<S>& a);

/// Smallest eigenvalue of the Hermitian part; no validation.
template <Scalar S>
double min_eigenvalue(const Matrix<S>& a);

template <Scalar S>
double real_trace(const Matrix<S>& a) {
  return std::real(a.trace());
}

// Schatten norms. Work on any square matrix (singular values), so they also
// apply to embedded tangents which are not Hermitian.
template <Scalar S>
double trace_norm(const Matrix<S>& a);
template <Scalar S>
double hs_norm(const Matrix<S>& a) {
  return a.norm();
}
template <Scalar S>
double operator_norm(const Matrix<S>& a);

/// Real part of tr(A B^*): the Frobenius inner product.
template <Scalar S>
double hs_inner(const Matrix<S>& a, const Matrix<S>& b) {
  return std::real((a.array() * b.array().conjugate()).sum());
}

namespace detail {

// Eigenvalues at the rounding-noise level of the largest one (and negative
// ones) set to zero, so exact zeros stay zero under square roots.
Eigen::VectorXd noise_floored(const Eigen::VectorXd& values);

// Eigendecomposition of the Hermitian part, descending; no validation.
template <Scalar S>
EigenPair<S> eig_unchecked(const Matrix<S>& a);

template <Scalar S>
Matrix<S> reconstruct(const Matrix<S>& vectors, const Eigen::VectorXd& values) {
  return vectors * values.asDiagonal() * vectors.adjoint();
}

}  // namespace detail

}  // namespace bwflow
