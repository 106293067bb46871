#include "bwflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bwflow/error.hpp"

namespace bwflow {

namespace {

template <Scalar S>
void require_same_dim(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    raise(ErrorCode::kDimMismatch, "dimension mismatch: " + std::to_string(a.rows()) + " vs " +
                                       std::to_string(b.rows()));
  }
}

// tr of the PSD square root of an (already Hermitian-by-construction) product.
template <Scalar S>
double trace_sqrt(const Matrix<S>& product) {
  const Eigen::VectorXd values = detail::eig_unchecked<S>(product).values;
  return values.cwiseMax(0.0).cwiseSqrt().sum();
}


// tr (A^{1/2} B A^{1/2})^{1/2} as the nuclear norm of A^{1/2} B^{1/2}. Singular
// values carry absolute error eps, whereas square roots of eigenvalues of
// the product turn eps noise on its kernel into sqrt(eps).
template <Scalar S>
double nuclear_fidelity(const Matrix<S>& a_sqrt, const Matrix<S>& b_sqrt) {
  if (a_sqrt.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix<S>> svd(a_sqrt * b_sqrt);
  return svd.singularValues().sum();
}

}  // namespace

template <Scalar S>
double bw_fidelity(const Matrix<S>& a, const Matrix<S>& b) {
  require_same_dim<S>(a, b);
  check_psd<S>(b, "second argument");
  return nuclear_fidelity<S>(sqrt_psd<S>(a), sqrt_psd<S>(b));
}

template <Scalar S>
double bw_distance_sq_with_root(const Matrix<S>& f_sqrt, double f_trace, const Matrix<S>& g) {
  const double fidelity = trace_sqrt<S>(hermitian_part<S>(f_sqrt * g * f_sqrt));
  return std::max(0.0, f_trace + real_trace<S>(g) - 2.0 * fidelity);
}

template <Scalar S>
double bw_distance(const Matrix<S>& f, const Matrix<S>& g) {
  require_same_dim<S>(f, g);
  if (f.size() == 0) return 0.0;
  // || F^{1/2} - G^{1/2} U || at the optimal unitary U = W V^*, where
  // G^{1/2} F^{1/2} = W S V^*. Avoids the cancellation in tr F + tr G - 2 fid.
  const Matrix<S> f_sqrt = sqrt_psd<S>(f), g_sqrt = sqrt_psd<S>(g);
  Eigen::BDCSVD<Matrix<S>> svd(g_sqrt * f_sqrt, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return (f_sqrt - g_sqrt * svd.matrixU() * svd.matrixV().adjoint()).norm();
}

template <Scalar S>
detail::TransportWithFidelity<S> detail::transport_with_fidelity(const PsdRoots<S>& f_roots,
                                                                 const Matrix<S>& g,
                                                                 double rank_tol, bool check_kernel) {
  const Eigen::Index d = f_roots.sqrt.rows();
  if (g.rows() != d || g.cols() != d) raise(ErrorCode::kDimMismatch, "transport_map: dimension mismatch");
  if (check_kernel && f_roots.rank < d) {
    const double g_norm = g.norm();
    if (g_norm > 0.0) {
      const Matrix<S> identity = Matrix<S>::Identity(d, d);
      const double leak = (g * (identity - f_roots.range_projector)).norm();
      if (leak > rank_tol * g_norm) {
        raise(ErrorCode::kKernelNotNested,
              "transport_map: ker(F) is not contained in ker(G) (relative leak " +
                  std::to_string(leak / g_norm) + ")");
      }
    }
  }
  const Matrix<S> inner = hermitian_part<S>(f_roots.sqrt * g * f_roots.sqrt);
  const EigenPair<S> e = detail::eig_unchecked<S>(inner);
  const Eigen::VectorXd roots = e.values.cwiseMax(0.0).cwiseSqrt();
  const Matrix<S> inner_sqrt = detail::reconstruct<S>(e.vectors, roots);
  return {hermitian_part<S>(f_roots.pinv_sqrt * inner_sqrt * f_roots.pinv_sqrt), roots.sum()};
}

template <Scalar S>
detail::CouplingWithFidelity<S> detail::coupling_with_fidelity(const PsdRoots<S>& f_roots, const Matrix<S>& g_sqrt,
                                                               double rank_tol) {
  const Eigen::Index d = f_roots.sqrt.rows();
  if (g_sqrt.rows() != d || g_sqrt.cols() != d) raise(ErrorCode::kDimMismatch, "coupling: dimension mismatch");
  const Matrix<S> c = g_sqrt * f_roots.sqrt;
  Eigen::JacobiSVD<Matrix<S>> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (f_roots.rank < d) {
    // Compare supports, not the product's spectrum: small but valid eigenvalues
    // of F and G multiply into singular values of C far below any relative cut.
    // Cosines of the principal angles between range(G) and range(F) are scale-free.
    const double cut = std::sqrt(rank_tol);
    const auto g_eig = detail::eig_unchecked<S>(g_sqrt);
    const double g_top = g_eig.values.size() ? g_eig.values.cwiseAbs().maxCoeff() : 0.0;
    Eigen::Index g_rank = 0;
    for (Eigen::Index i = 0; i < g_eig.values.size(); ++i) g_rank += std::abs(g_eig.values(i)) > cut * g_top;
    const Matrix<S> g_basis = g_eig.vectors.leftCols(g_rank);
    const Eigen::VectorXd cosines = Eigen::JacobiSVD<Matrix<S>>(f_roots.range_projector * g_basis).singularValues();
    const auto c_rank = (cosines.array() > cut).count();
    if (c_rank < g_rank) {
      raise(ErrorCode::kKernelNotNested, "coupling: the source misses " + std::to_string(g_rank - c_rank) +
                                             " direction(s) of the target support");
    }
  }
  return {g_sqrt * svd.matrixU() * svd.matrixV().adjoint(), svd.singularValues().sum()};
}

template <Scalar S>
Matrix<S> coupling_factor(const PsdRoots<S>& f_roots, const Matrix<S>& g_sqrt, double rank_tol) {
  return detail::coupling_with_fidelity<S>(f_roots, g_sqrt, rank_tol).factor;
}

template <Scalar S>
Matrix<S> transport_map_from_roots(const PsdRoots<S>& f_roots, const Matrix<S>& g,
                                   double rank_tol) {
  return detail::transport_with_fidelity<S>(f_roots, g, rank_tol).map;
}

template <Scalar S>
Matrix<S> transport_map(const Matrix<S>& f, const Matrix<S>& g, double rank_tol) {
  require_same_dim<S>(f, g);
  check_psd<S>(g, "target");
  return transport_map_from_roots<S>(psd_roots<S>(f, rank_tol), g, rank_tol);
}

template <Scalar S>
Matrix<S> geodesic(const Matrix<S>& f0, const Matrix<S>& f1, double lambda, double rank_tol) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    raise(ErrorCode::kLambdaOutOfRange, "geodesic: lambda must lie in [0, 1]");
  }
  require_same_dim<S>(f0, f1);
  if (lambda == 0.0) {
    check_psd<S>(f0, "start point");
    return f0;
  }
  const Matrix<S> t = transport_map<S>(f0, f1, rank_tol);
  const Eigen::Index d = f0.rows();
  const Matrix<S> step = lambda * t + (1.0 - lambda) * Matrix<S>::Identity(d, d);
  // At lambda == 1 the congruence reproduces F1 only up to the pseudo-inverse
  // round-off; return the endpoint itself.
  if (lambda == 1.0) return f1;
  return hermitian_part<S>(step * f0 * step);
}

template <Scalar S>
Matrix<S> log_map(const Matrix<S>& f, const Matrix<S>& g, double rank_tol) {
  const Matrix<S> t = transport_map<S>(f, g, rank_tol);
  return t - Matrix<S>::Identity(t.rows(), t.cols());
}

template <Scalar S>
Matrix<S> exp_map(const Matrix<S>& f, const Matrix<S>& gamma) {
  require_same_dim<S>(f, gamma);
  check_psd<S>(f, "base point");
  check_hermitian<S>(gamma, "tangent vector");
  const Matrix<S> step = gamma + Matrix<S>::Identity(f.rows(), f.cols());
  return project_psd<S>(hermitian_part<S>(step * f * step));
}

template <Scalar S>
double tangent_inner(const Matrix<S>& f, const Matrix<S>& u, const Matrix<S>& v) {
  require_same_dim<S>(f, u);
  require_same_dim<S>(f, v);
  return std::real((u * f * v).trace());
}

template <Scalar S>
Matrix<S> embed(const Matrix<S>& f, const Matrix<S>& u) {
  require_same_dim<S>(f, u);
  return u * sqrt_psd<S>(f);
}

#define BWFLOW_INSTANTIATE(S)                                                                 \
  template double bw_distance<S>(const Matrix<S>&, const Matrix<S>&);                         \
  template double bw_distance_sq_with_root<S>(const Matrix<S>&, double, const Matrix<S>&);   \
  template double bw_fidelity<S>(const Matrix<S>&, const Matrix<S>&);                         \
  template Matrix<S> transport_map<S>(const Matrix<S>&, const Matrix<S>&, double);            \
  template Matrix<S> transport_map_from_roots<S>(const PsdRoots<S>&, const Matrix<S>&, double); \
  template Matrix<S> geodesic<S>(const Matrix<S>&, const Matrix<S>&, double, double);         \
  template Matrix<S> log_map<S>(const Matrix<S>&, const Matrix<S>&, double);                  \
  template Matrix<S> exp_map<S>(const Matrix<S>&, const Matrix<S>&);                          \
  template double tangent_inner<S>(const Matrix<S>&, const Matrix<S>&, const Matrix<S>&);     \
  template Matrix<S> embed<S>(const Matrix<S>&, const Matrix<S>&);                          \
  template detail::TransportWithFidelity<S> detail::transport_with_fidelity<S>(               \
      const PsdRoots<S>&, const Matrix<S>&, double, bool);                                     \
  template Matrix<S> coupling_factor<S>(const PsdRoots<S>&, const Matrix<S>&, double);             \
  template detail::CouplingWithFidelity<S> detail::coupling_with_fidelity<S>(const PsdRoots<S>&,   \
                                                                             const Matrix<S>&, double);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
