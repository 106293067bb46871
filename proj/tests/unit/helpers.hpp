#pragma once

#include <random>

#include "bwflow/flow.hpp"
#include "bwflow/psd.hpp"

namespace testing {

using bwflow::Complex;
using bwflow::Matrix;

template <bwflow::Scalar S>
S normal_scalar(std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  if constexpr (std::is_same_v<S, double>) {
    return z(rng);
  } else {
    return Complex(z(rng), z(rng)) / std::sqrt(2.0);
  }
}

template <bwflow::Scalar S>
Matrix<S> random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix<S> a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = normal_scalar<S>(rng);
  }
  return a;
}

/// B B^* with B of shape d x rank: PSD of the given rank almost surely.
template <bwflow::Scalar S>
Matrix<S> random_psd(std::mt19937_64& rng, Eigen::Index d, Eigen::Index rank) {
  const Matrix<S> b = random_matrix<S>(rng, d, rank);
  Matrix<S> a = b * b.adjoint();
  return (a + a.adjoint()) * 0.5;
}

/// Well-conditioned positive definite matrix.
template <bwflow::Scalar S>
Matrix<S> random_pd(std::mt19937_64& rng, Eigen::Index d) {
  Matrix<S> a = random_psd<S>(rng, d, d);
  a += 0.5 * Matrix<S>::Identity(d, d);
  return a;
}

template <bwflow::Scalar S>
Matrix<S> random_hermitian(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix<S> a = random_matrix<S>(rng, d, d);
  return (a + a.adjoint()) * 0.5;
}

template <bwflow::Scalar S>
bwflow::BasicFlow<S> random_pd_flow(std::mt19937_64& rng, const bwflow::Grid& grid, Eigen::Index d) {
  std::vector<Matrix<S>> mats;
  for (std::size_t j = 0; j < grid->size(); ++j) mats.push_back(random_pd<S>(rng, d));
  return bwflow::BasicFlow<S>(grid, std::move(mats));
}

template <bwflow::Scalar S>
bwflow::BasicFlow<S> constant_flow(const bwflow::Grid& grid, const Matrix<S>& a) {
  return bwflow::BasicFlow<S>(grid, std::vector<Matrix<S>>(grid->size(), a));
}

inline bwflow::RealMatrix diag(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x(i++) = e;
  return x.asDiagonal();
}

inline bwflow::RealMatrix scalar(double v) { return bwflow::RealMatrix::Constant(1, 1, v); }

template <bwflow::Scalar S>
double max_abs(const Matrix<S>& a) {
  return a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace testing

#define CHECK_THROWS_CODE(expr, expected)                     \
  do {                                                        \
    bool thrown_ = false;                                     \
    try {                                                     \
      (void)(expr);                                           \
    } catch (const bwflow::Error& e_) {                       \
      thrown_ = true;                                         \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());      \
    }                                                         \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr); \
  } while (false)
