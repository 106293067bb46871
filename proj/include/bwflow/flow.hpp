#pragma once

// Discretized covariance flows: a strictly increasing time grid on [0, 1]
// carrying one covariance matrix per grid point.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bwflow/psd.hpp"

namespace bwflow {

/// Time grids are immutable and shared by every flow of a set.
using Grid = std::shared_ptr<const std::vector<double>>;

/// Validates: non-empty, finite, strictly increasing, inside [0, 1].
Grid make_grid(std::vector<double> points);
/// m equally spaced points on [0, 1] ({0} when m == 1).
Grid uniform_grid(std::size_t m);

bool same_grid(const Grid& a, const Grid& b);

/// Trapezoidal weights normalized to sum to one over the grid span.
std::vector<double> trapezoid_weights(std::span<const double> grid);

template <Scalar S>
class BasicFlow {
 public:
  BasicFlow() = default;
  /// Structural checks only (sizes, square, common dim, finite entries);
  /// PSD-ness is the business of validate_flowset and the file reader.
  BasicFlow(Grid grid, std::vector<Matrix<S>> matrices);

  const Grid& grid_ptr() const { return grid_; }
  std::span<const double> grid() const { return *grid_; }
  std::size_t size() const { return matrices_.size(); }
  Eigen::Index dim() const { return matrices_.empty() ? 0 : matrices_.front().rows(); }

  const Matrix<S>& operator[](std::size_t j) const { return matrices_[j]; }
  const std::vector<Matrix<S>>& matrices() const { return matrices_; }

 private:
  Grid grid_;
  std::vector<Matrix<S>> matrices_;
};

template <Scalar S>
class BasicFlowSet {
 public:
  BasicFlowSet() = default;
  BasicFlowSet(Grid grid, std::vector<std::vector<Matrix<S>>> flows);
  /// Flows must carry identical grids (values); they are rebound to one Grid.
  explicit BasicFlowSet(const std::vector<BasicFlow<S>>& flows);

  const Grid& grid_ptr() const { return grid_; }
  std::span<const double> grid() const { return *grid_; }
  std::size_t size() const { return flows_.size(); }
  std::size_t n_times() const { return grid_ ? grid_->size() : 0; }
  Eigen::Index dim() const { return flows_.empty() ? 0 : flows_.front().dim(); }

  const BasicFlow<S>& operator[](std::size_t i) const { return flows_[i]; }
  const std::vector<BasicFlow<S>>& flows() const { return flows_; }

  /// Matrices of every flow at grid index j.
  std::vector<Matrix<S>> slice(std::size_t j) const;

 private:
  Grid grid_;
  std::vector<BasicFlow<S>> flows_;
};

using Flow = BasicFlow<double>;
using ComplexFlow = BasicFlow<Complex>;
using FlowSet = BasicFlowSet<double>;
using ComplexFlowSet = BasicFlowSet<Complex>;

/// Integrated metric: sqrt(sum_j w_j Pi(A_j, B_j)^2) with trapezoidal weights.
template <Scalar S>
double flow_distance(const BasicFlow<S>& a, const BasicFlow<S>& b);

/// McCann interpolation between the bracketing grid points; exact on the grid,
/// clamped to the nearest endpoint outside it.
template <Scalar S>
Matrix<S> mccann_eval(const BasicFlow<S>& flow, double t);

/// mccann_eval at every point of a new grid.
template <Scalar S>
BasicFlow<S> resample(const BasicFlow<S>& flow, const Grid& grid);

struct PointDiagnostics {
  std::size_t flow = 0;
  std::size_t time = 0;
  double min_eigenvalue = 0.0;
  double trace = 0.0;
  double hermitian_residual = 0.0;
};

struct Violation {
  std::size_t flow = 0;
  std::size_t time = 0;
  std::string kind;  // "NotPSD", "NonHermitian", "NonFinite"
  double value = 0.0;
};

struct FlowSetDiagnostics {
  std::vector<std::string> structural;
  std::vector<PointDiagnostics> points;
  std::vector<Violation> violations;

  bool ok() const { return structural.empty() && violations.empty(); }
};

/// Never throws and never mutates: reports every problem it can find.
template <Scalar S>
FlowSetDiagnostics validate_flowset(std::span<const double> grid,
                                    const std::vector<std::vector<Matrix<S>>>& flows);

template <Scalar S>
FlowSetDiagnostics validate_flowset(const BasicFlowSet<S>& set);

}  // namespace bwflow
