#include "bwflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"

namespace bwflow {

Grid make_grid(std::vector<double> points) {
  if (points.empty()) raise(ErrorCode::kInvalidArgument, "grid must be non-empty");
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double t = points[j];
    if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
      raise(ErrorCode::kInvalidArgument, "grid point " + std::to_string(j) + " outside [0, 1]");
    }
    if (j > 0 && !(t > points[j - 1])) {
      raise(ErrorCode::kInvalidArgument, "grid is not strictly increasing at index " + std::to_string(j));
    }
  }
  return std::make_shared<const std::vector<double>>(std::move(points));
}

Grid uniform_grid(std::size_t m) {
  if (m == 0) raise(ErrorCode::kInvalidArgument, "grid size must be positive");
  std::vector<double> points(m, 0.0);
  for (std::size_t j = 1; j < m; ++j) points[j] = static_cast<double>(j) / static_cast<double>(m - 1);
  if (m > 1) points.back() = 1.0;
  return make_grid(std::move(points));
}

bool same_grid(const Grid& a, const Grid& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

std::vector<double> trapezoid_weights(std::span<const double> grid) {
  const std::size_t m = grid.size();
  std::vector<double> w(m, 0.0);
  if (m == 0) return w;
  if (m == 1) {
    w[0] = 1.0;
    return w;
  }
  const double span = grid[m - 1] - grid[0];
  w[0] = 0.5 * (grid[1] - grid[0]) / span;
  w[m - 1] = 0.5 * (grid[m - 1] - grid[m - 2]) / span;
  for (std::size_t j = 1; j + 1 < m; ++j) w[j] = 0.5 * (grid[j + 1] - grid[j - 1]) / span;
  return w;
}

template <Scalar S>
BasicFlow<S>::BasicFlow(Grid grid, std::vector<Matrix<S>> matrices)
    : grid_(std::move(grid)), matrices_(std::move(matrices)) {
  if (!grid_) raise(ErrorCode::kInvalidArgument, "flow requires a grid");
  if (matrices_.size() != grid_->size()) {
    raise(ErrorCode::kGridMismatch, "flow has " + std::to_string(matrices_.size()) +
                                        " matrices for " + std::to_string(grid_->size()) +
                                        " grid points");
  }
  const Eigen::Index d = matrices_.front().rows();
  for (std::size_t j = 0; j < matrices_.size(); ++j) {
    const Matrix<S>& a = matrices_[j];
    if (a.rows() != d || a.cols() != d) {
      raise(ErrorCode::kDimMismatch, "flow matrix " + std::to_string(j) + " has the wrong shape");
    }
    if (!a.allFinite()) {
      raise(ErrorCode::kNonFinite, "flow matrix " + std::to_string(j) + " has non-finite entries");
    }
  }
}

template <Scalar S>
BasicFlowSet<S>::BasicFlowSet(Grid grid, std::vector<std::vector<Matrix<S>>> flows)
    : grid_(std::move(grid)) {
  flows_.reserve(flows.size());
  for (auto& mats : flows) flows_.emplace_back(grid_, std::move(mats));
  for (const auto& f : flows_) {
    if (f.dim() != flows_.front().dim()) raise(ErrorCode::kDimMismatch, "flows differ in dimension");
  }
}

template <Scalar S>
BasicFlowSet<S>::BasicFlowSet(const std::vector<BasicFlow<S>>& flows) {
  if (flows.empty()) raise(ErrorCode::kInvalidArgument, "flow set must be non-empty");
  grid_ = flows.front().grid_ptr();
  flows_.reserve(flows.size());
  for (const auto& f : flows) {
    if (!same_grid(f.grid_ptr(), grid_)) raise(ErrorCode::kGridMismatch, "flows differ in grid");
    if (f.dim() != flows.front().dim()) raise(ErrorCode::kDimMismatch, "flows differ in dimension");
    flows_.emplace_back(grid_, f.matrices());
  }
}

template <Scalar S>
std::vector<Matrix<S>> BasicFlowSet<S>::slice(std::size_t j) const {
  std::vector<Matrix<S>> out;
  out.reserve(flows_.size());
  for (const auto& f : flows_) out.push_back(f[j]);
  return out;
}

template <Scalar S>
double flow_distance(const BasicFlow<S>& a, const BasicFlow<S>& b) {
  if (!same_grid(a.grid_ptr(), b.grid_ptr())) raise(ErrorCode::kGridMismatch, "flow_distance: grids differ");
  if (a.dim() != b.dim()) raise(ErrorCode::kDimMismatch, "flow_distance: dimensions differ");
  const std::vector<double> w = trapezoid_weights(a.grid());
  const auto m = static_cast<std::ptrdiff_t>(a.size());
  std::vector<double> sq(a.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const double pi = bw_distance<S>(a[j], b[j]);
    sq[j] = pi * pi;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < sq.size(); ++j) total += w[j] * sq[j];
  return std::sqrt(total);
}

template <Scalar S>
Matrix<S> mccann_eval(const BasicFlow<S>& flow, double t) {
  const auto grid = flow.grid();
  if (!std::isfinite(t)) raise(ErrorCode::kInvalidArgument, "mccann_eval: non-finite time");
  if (t <= grid.front()) return flow[0];
  if (t >= grid.back()) return flow[grid.size() - 1];
  const auto upper = std::upper_bound(grid.begin(), grid.end(), t);
  const std::size_t hi = static_cast<std::size_t>(upper - grid.begin());
  const std::size_t lo = hi - 1;
  if (grid[lo] == t) return flow[lo];
  const double lambda = (t - grid[lo]) / (grid[hi] - grid[lo]);
  return geodesic<S>(flow[lo], flow[hi], lambda);
}

template <Scalar S>
BasicFlow<S> resample(const BasicFlow<S>& flow, const Grid& grid) {
  std::vector<Matrix<S>> mats(grid->size());
  const auto m = static_cast<std::ptrdiff_t>(grid->size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < m; ++j) mats[j] = mccann_eval<S>(flow, (*grid)[j]);
  return BasicFlow<S>(grid, std::move(mats));
}

template <Scalar S>
FlowSetDiagnostics validate_flowset(std::span<const double> grid,
                                    const std::vector<std::vector<Matrix<S>>>& flows) {
  FlowSetDiagnostics out;
  if (grid.empty()) out.structural.push_back("empty grid");
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!std::isfinite(grid[j]) || grid[j] < 0.0 || grid[j] > 1.0) {
      out.structural.push_back("grid point " + std::to_string(j) + " outside [0, 1]");
    }
    if (j > 0 && !(grid[j] > grid[j - 1])) {
      out.structural.push_back("grid not strictly increasing at index " + std::to_string(j));
    }
  }
  Eigen::Index dim = -1;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    if (flows[i].size() != grid.size()) {
      out.structural.push_back("flow " + std::to_string(i) + " has " + std::to_string(flows[i].size()) +
                               " matrices for " + std::to_string(grid.size()) + " grid points");
    }
    for (std::size_t j = 0; j < flows[i].size(); ++j) {
      const Matrix<S>& a = flows[i][j];
      if (a.rows() != a.cols()) {
        out.structural.push_back("matrix (" + std::to_string(i) + ", " + std::to_string(j) +
                                 ") is not square");
        continue;
      }
      if (dim < 0) dim = a.rows();
      if (a.rows() != dim) {
        out.structural.push_back("matrix (" + std::to_string(i) + ", " + std::to_string(j) +
                                 ") has dimension " + std::to_string(a.rows()) + ", expected " +
                                 std::to_string(dim));
        continue;
      }
      if (!a.allFinite()) {
        out.violations.push_back({i, j, "NonFinite", 0.0});
        continue;
      }
      PointDiagnostics p;
      p.flow = i;
      p.time = j;
      p.hermitian_residual = hermitian_residual<S>(a);
      p.trace = real_trace<S>(a);
      const Eigen::VectorXd values = detail::eig_unchecked<S>(a).values;
      p.min_eigenvalue = values.size() ? values(values.size() - 1) : 0.0;
      const double scale = values.size() ? std::max(std::abs(values(0)), std::abs(p.min_eigenvalue)) : 0.0;
      if (p.hermitian_residual > kHermitianTol) {
        out.violations.push_back({i, j, "NonHermitian", p.hermitian_residual});
      }
      if (p.min_eigenvalue < -kPsdTol * scale) {
        out.violations.push_back({i, j, "NotPSD", p.min_eigenvalue});
      }
      out.points.push_back(p);
    }
  }
  return out;
}

template <Scalar S>
FlowSetDiagnostics validate_flowset(const BasicFlowSet<S>& set) {
  std::vector<std::vector<Matrix<S>>> data;
  data.reserve(set.size());
  for (const auto& f : set.flows()) data.push_back(f.matrices());
  return validate_flowset<S>(set.grid(), data);
}

#define BWFLOW_INSTANTIATE(S)                                                                  \
  template class BasicFlow<S>;                                                                 \
  template class BasicFlowSet<S>;                                                              \
  template double flow_distance<S>(const BasicFlow<S>&, const BasicFlow<S>&);                  \
  template Matrix<S> mccann_eval<S>(const BasicFlow<S>&, double);                              \
  template BasicFlow<S> resample<S>(const BasicFlow<S>&, const Grid&);                         \
  template FlowSetDiagnostics validate_flowset<S>(std::span<const double>,                     \
                                                  const std::vector<std::vector<Matrix<S>>>&); \
  template FlowSetDiagnostics validate_flowset<S>(const BasicFlowSet<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
