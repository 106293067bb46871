#include "bwflow/psd.hpp"

#include <limits>

#include <algorithm>
#include <cmath>
#include <string>

#include "bwflow/error.hpp"

namespace bwflow {

namespace {

template <Scalar S>
double max_abs(const Matrix<S>& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

double spectral_scale(const Eigen::VectorXd& values) {
  if (values.size() == 0) return 0.0;
  return std::max(std::abs(values(0)), std::abs(values(values.size() - 1)));
}

// Clamp tiny negatives, reject genuinely negative spectra.
void require_psd_spectrum(const Eigen::VectorXd& values, std::string_view what) {
  if (values.size() == 0) return;
  const double scale = spectral_scale(values);
  const double smallest = values(values.size() - 1);
  if (smallest < -kPsdTol * scale) {
    raise(ErrorCode::kNotPsd, std::string(what) + " is not PSD: smallest eigenvalue " +
                                  std::to_string(smallest) + " vs scale " +
                                  std::to_string(scale));
  }
}

}  // namespace

template <Scalar S>
double hermitian_residual(const Matrix<S>& a) {
  const double scale = max_abs<S>(a);
  if (scale == 0.0) return 0.0;
  return (a - a.adjoint()).cwiseAbs().maxCoeff() / scale;
}

template <Scalar S>
void check_hermitian(const Matrix<S>& a, std::string_view what) {
  if (a.rows() != a.cols()) {
    raise(ErrorCode::kDimMismatch, std::string(what) + " is not square");
  }
  if (!a.allFinite()) {
    raise(ErrorCode::kNonFinite, std::string(what) + " has non-finite entries");
  }
  const double residual = hermitian_residual<S>(a);
  if (residual > kHermitianTol) {
    raise(ErrorCode::kNonHermitian, std::string(what) + " is not Hermitian (relative residual " +
                                        std::to_string(residual) + ")");
  }
}

template <Scalar S>
void check_psd(const Matrix<S>& a, std::string_view what) {
  check_hermitian<S>(a, what);
  require_psd_spectrum(detail::eig_unchecked<S>(a).values, what);
}

namespace detail {

template <Scalar S>
EigenPair<S> eig_unchecked(const Matrix<S>& a) {
  const Eigen::Index n = a.rows();
  EigenPair<S> out;
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix<S>> solver(hermitian_part<S>(a));
  if (solver.info() != Eigen::Success) {
    raise(ErrorCode::kInternal, "Hermitian eigensolver failed");
  }
  // Eigen returns ascending order.
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace detail

template <Scalar S>
EigenPair<S> hermitian_eig(const Matrix<S>& a) {
  check_hermitian<S>(a, "matrix");
  return detail::eig_unchecked<S>(a);
}

Eigen::VectorXd detail::noise_floored(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  if (n == 0) return values;
  const double top = std::max(values.maxCoeff(), 0.0);
  const double floor = 4.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * top;
  return values.unaryExpr([floor](double v) { return v <= floor ? 0.0 : v; });
}

template <Scalar S>
Matrix<S> sqrt_psd(const Matrix<S>& a) {
  check_hermitian<S>(a, "matrix");
  EigenPair<S> e = detail::eig_unchecked<S>(a);
  require_psd_spectrum(e.values, "matrix");
  const Eigen::VectorXd roots = detail::noise_floored(e.values).cwiseSqrt();
  return hermitian_part<S>(detail::reconstruct<S>(e.vectors, roots));
}

template <Scalar S>
PsdRoots<S> psd_roots(const Matrix<S>& a, double rank_tol) {
  if (!(rank_tol > 0.0)) raise(ErrorCode::kInvalidArgument, "rank_tol must be positive");
  check_hermitian<S>(a, "matrix");
  EigenPair<S> e = detail::eig_unchecked<S>(a);
  require_psd_spectrum(e.values, "matrix");

  const Eigen::Index n = a.rows();
  PsdRoots<S> out;
  out.lambda_max = n > 0 ? std::max(e.values(0), 0.0) : 0.0;
  const double cutoff = rank_tol * out.lambda_max;
  const Eigen::VectorXd floored = detail::noise_floored(e.values);
  Eigen::VectorXd roots(n), inv_roots(n), indicator(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = floored(i);
    roots(i) = std::sqrt(lambda);
    const bool kept = out.lambda_max > 0.0 && lambda >= cutoff;
    inv_roots(i) = kept ? 1.0 / roots(i) : 0.0;
    indicator(i) = kept ? 1.0 : 0.0;
    if (kept) ++out.rank;
  }
  out.sqrt = hermitian_part<S>(detail::reconstruct<S>(e.vectors, roots));
  out.pinv_sqrt = hermitian_part<S>(detail::reconstruct<S>(e.vectors, inv_roots));
  out.range_projector = hermitian_part<S>(detail::reconstruct<S>(e.vectors, indicator));
  return out;
}

template <Scalar S>
Matrix<S> pinv_sqrt_psd(const Matrix<S>& a, double rank_tol) {
  return psd_roots<S>(a, rank_tol).pinv_sqrt;
}

template <Scalar S>
Matrix<S> range_projector(const Matrix<S>& a, double rank_tol) {
  return psd_roots<S>(a, rank_tol).range_projector;
}

template <Scalar S>
Matrix<S> project_psd(const Matrix<S>& a) {
  check_hermitian<S>(a, "matrix");
  EigenPair<S> e = detail::eig_unchecked<S>(a);
  return hermitian_part<S>(detail::reconstruct<S>(e.vectors, e.values.cwiseMax(0.0)));
}

template <Scalar S>
double min_eigenvalue(const Matrix<S>& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix<S>> solver(hermitian_part<S>(a), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

template <Scalar S>
double trace_norm(const Matrix<S>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix<S>> svd(a);
  return svd.singularValues().sum();
}

template <Scalar S>
double operator_norm(const Matrix<S>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix<S>> svd(a);
  return svd.singularValues()(0);
}

#define BWFLOW_INSTANTIATE(S)                                                     \
  template double hermitian_residual<S>(const Matrix<S>&);                        \
  template void check_hermitian<S>(const Matrix<S>&, std::string_view);           \
  template void check_psd<S>(const Matrix<S>&, std::string_view);                 \
  template EigenPair<S> hermitian_eig<S>(const Matrix<S>&);                       \
  template Matrix<S> sqrt_psd<S>(const Matrix<S>&);                               \
  template Matrix<S> pinv_sqrt_psd<S>(const Matrix<S>&, double);                  \
  template PsdRoots<S> psd_roots<S>(const Matrix<S>&, double);                    \
  template Matrix<S> range_projector<S>(const Matrix<S>&, double);                \
  template Matrix<S> project_psd<S>(const Matrix<S>&);                            \
  template double min_eigenvalue<S>(const Matrix<S>&);                            \
  template double trace_norm<S>(const Matrix<S>&);                                \
  template double operator_norm<S>(const Matrix<S>&);                             \
  template EigenPair<S> detail::eig_unchecked<S>(const Matrix<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
