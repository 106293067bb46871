#include "bwflow/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"

namespace bwflow {

namespace {

constexpr double kSingularMomentsTol = 1e-12;
constexpr double kSingularDesignTol = 1e-12;
constexpr double kLowSignedSum = 0.1;

// 1 / (Phi(4) - Phi(-4)) normalizes the truncated Gaussian.
const double kGaussianNorm = 1.0 / std::erf(4.0 / std::sqrt(2.0));

template <Scalar S>
Eigen::Matrix<S, Eigen::Dynamic, 1> vec(const Matrix<S>& a) {
  return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(a.data(), a.size());
}

std::string list_times(const std::vector<double>& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size() && i < 20; ++i) {
    if (i) out += ", ";
    out += std::to_string(ts[i]);
  }
  if (ts.size() > 20) out += ", ...";
  return out;
}

}  // namespace

Kernel::Kernel(KernelKind k, double h) : kind(k), bandwidth(h) {
  if (!(h > 0.0) || !std::isfinite(h)) raise(ErrorCode::kInvalidArgument, "bandwidth must be positive");
}

double Kernel::profile(double u) const {
  const double a = std::abs(u);
  switch (kind) {
    case KernelKind::kUniform:
      return a <= 1.0 ? 0.5 : 0.0;
    case KernelKind::kEpanechnikov:
      return a <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelKind::kGaussianTruncated:
      return a <= 4.0 ? kGaussianNorm * std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI) : 0.0;
  }
  return 0.0;
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "uniform") return KernelKind::kUniform;
  if (name == "epanechnikov") return KernelKind::kEpanechnikov;
  if (name == "gaussian" || name == "gaussian_truncated") return KernelKind::kGaussianTruncated;
  raise(ErrorCode::kInvalidArgument, "unknown kernel '" + std::string(name) + "'");
}

std::string_view kernel_kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::kUniform: return "uniform";
    case KernelKind::kEpanechnikov: return "epanechnikov";
    case KernelKind::kGaussianTruncated: return "gaussian_truncated";
  }
  return "unknown";
}

template <Scalar S>
void ScatterObs<S>::validate() const {
  if (times.size() != mats.size() || times.size() != flow_ids.size()) {
    raise(ErrorCode::kInvalidArgument, "observation arrays differ in length");
  }
  if (times.empty()) raise(ErrorCode::kInvalidArgument, "no observations");
  const Eigen::Index d = mats.front().rows();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0 || times[i] > 1.0) {
      raise(ErrorCode::kInvalidArgument, "observation " + std::to_string(i) + " has time outside [0, 1]");
    }
    if (mats[i].rows() != d || mats[i].cols() != d) {
      raise(ErrorCode::kDimMismatch, "observation " + std::to_string(i) + " has the wrong shape");
    }
    check_psd<S>(mats[i], "observation " + std::to_string(i));
  }
}

template <Scalar S>
std::vector<std::int64_t> ScatterObs<S>::distinct_flows() const {
  std::vector<std::int64_t> out;
  for (auto id : flow_ids) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  }
  return out;
}

template <Scalar S>
ScatterObs<S> ScatterObs<S>::subset(std::int64_t flow_id, bool keep) const {
  ScatterObs<S> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if ((flow_ids[i] == flow_id) == keep) {
      out.times.push_back(times[i]);
      out.mats.push_back(mats[i]);
      out.flow_ids.push_back(flow_ids[i]);
    }
  }
  return out;
}

template <Scalar S>
ScatterObs<S> scatter_from_flowset(const BasicFlowSet<S>& set, const std::vector<std::vector<bool>>& mask) {
  if (mask.size() != set.size()) raise(ErrorCode::kInvalidArgument, "mask must have one row per flow");
  ScatterObs<S> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (mask[i].size() != set.n_times()) raise(ErrorCode::kInvalidArgument, "mask row length must match the grid");
    for (std::size_t j = 0; j < set.n_times(); ++j) {
      if (!mask[i][j]) continue;
      out.times.push_back(set.grid()[j]);
      out.mats.push_back(set[i][j]);
      out.flow_ids.push_back(static_cast<std::int64_t>(i));
    }
  }
  return out;
}

template <Scalar S>
std::vector<Matrix<S>> nw_smooth_at(const ScatterObs<S>& obs, const Kernel& kernel, std::span<const double> times) {
  obs.validate();
  const Eigen::Index d = obs.mats.front().rows();
  std::vector<Matrix<S>> out(times.size());
  std::vector<double> uncovered;
  for (std::size_t e = 0; e < times.size(); ++e) {
    Matrix<S> acc = Matrix<S>::Zero(d, d);
    double total = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const double w = kernel(obs.times[i] - times[e]);
      if (w == 0.0) continue;
      acc += w * obs.mats[i];
      total += w;
    }
    if (total == 0.0) {
      uncovered.push_back(times[e]);
      continue;
    }
    out[e] = project_psd<S>(hermitian_part<S>(Matrix<S>(acc / total)));
  }
  if (!uncovered.empty()) {
    raise(ErrorCode::kEmptyWindow, "no observation within bandwidth of t = " + list_times(uncovered));
  }
  return out;
}

template <Scalar S>
BasicFlow<S> nw_smooth(const ScatterObs<S>& obs, const Kernel& kernel, const Grid& eval_grid) {
  return BasicFlow<S>(eval_grid, nw_smooth_at<S>(obs, kernel, *eval_grid));
}

LfrWeights lfr_weights(std::span<const double> times, double t, const Kernel& kernel) {
  const std::size_t r = times.size();
  if (r == 0) raise(ErrorCode::kEmptyWindow, "lfr_weights: no observations");
  std::vector<double> k(r);
  double mu0 = 0.0, mu1 = 0.0, mu2 = 0.0;
  for (std::size_t j = 0; j < r; ++j) {
    const double u = times[j] - t;
    k[j] = kernel(u);
    mu0 += k[j];
    mu1 += k[j] * u;
    mu2 += k[j] * u * u;
  }
  const double rd = static_cast<double>(r);
  mu0 /= rd;
  mu1 /= rd;
  mu2 /= rd;
  if (mu0 == 0.0) raise(ErrorCode::kEmptyWindow, "lfr_weights: no observation within bandwidth of t = " + std::to_string(t));

  LfrWeights out;
  out.s.resize(r);
  const double denom = mu0 * mu2 - mu1 * mu1;
  if (denom <= kSingularMomentsTol * mu0 * mu2) {
    out.fell_back = true;
    for (std::size_t j = 0; j < r; ++j) out.s[j] = k[j] / mu0;
    return out;
  }
  for (std::size_t j = 0; j < r; ++j) out.s[j] = k[j] * (mu2 - mu1 * (times[j] - t)) / denom;
  return out;
}

template <Scalar S>
bool LfrResult<S>::converged() const {
  return std::all_of(points.begin(), points.end(), [](const LfrPointDiagnostics& p) { return p.converged; });
}

template <Scalar S>
std::vector<Matrix<S>> lfr_estimate_at(const ScatterObs<S>& obs, const Kernel& kernel,
                                       std::span<const double> times, const GdConfig<S>& cfg,
                                       std::vector<LfrPointDiagnostics>* diagnostics) {
  obs.validate();
  const std::size_t m = times.size();
  std::vector<Matrix<S>> out(m);
  std::vector<LfrPointDiagnostics> diag(m);
  std::vector<std::optional<Error>> failures(m);
  const auto count = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t e = 0; e < count; ++e) {
    try {
      const LfrWeights lw = lfr_weights(obs.times, times[e], kernel);
      std::vector<Matrix<S>> samples;
      std::vector<double> w;
      double signed_sum = 0.0, abs_sum = 0.0;
      for (std::size_t i = 0; i < obs.size(); ++i) {
        if (lw.s[i] == 0.0) continue;
        samples.push_back(obs.mats[i]);
        w.push_back(lw.s[i]);
        signed_sum += lw.s[i];
        abs_sum += std::abs(lw.s[i]);
      }
      diag[e].fell_back = lw.fell_back;
      diag[e].low_signed_sum = signed_sum < kLowSignedSum * abs_sum;
      WeightedMeanResult<S> r = weighted_frechet_mean<S>(samples, w, cfg);
      diag[e].clipped = r.clipped;
      diag[e].converged = r.trace.converged;
      diag[e].trace = std::move(r.trace);
      out[e] = std::move(r.mean);
    } catch (const Error& err) {
      failures[e] = err;
    }
  }
  std::vector<double> uncovered;
  for (std::size_t e = 0; e < m; ++e) {
    if (!failures[e]) continue;
    if (failures[e]->code() != ErrorCode::kEmptyWindow) throw *failures[e];
    uncovered.push_back(times[e]);
  }
  if (!uncovered.empty()) {
    raise(ErrorCode::kEmptyWindow, "no observation within bandwidth of t = " + list_times(uncovered));
  }
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

template <Scalar S>
LfrResult<S> lfr_estimate(const ScatterObs<S>& obs, const Kernel& kernel, const Grid& eval_grid,
                          const GdConfig<S>& cfg) {
  std::vector<LfrPointDiagnostics> diag;
  std::vector<Matrix<S>> mats = lfr_estimate_at<S>(obs, kernel, *eval_grid, cfg, &diag);
  return {BasicFlow<S>(eval_grid, std::move(mats)), std::move(diag)};
}

template <Scalar S>
CovSurface<S> cov_surface_smooth(const std::vector<TangentObs<S>>& obs, const Kernel& kernel,
                                 std::span<const double> grid_s, std::span<const double> grid_t) {
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  if (obs.empty()) raise(ErrorCode::kInvalidArgument, "cov_surface_smooth: no observations");
  if (grid_s.empty() || grid_t.empty()) raise(ErrorCode::kInvalidArgument, "cov_surface_smooth: empty grid");
  const Eigen::Index d = obs.front().chi.rows();
  const Eigen::Index dd = d * d;

  // Group by flow.
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].chi.rows() != d || obs[i].chi.cols() != d) raise(ErrorCode::kDimMismatch, "cov_surface_smooth: shape mismatch");
    if (!obs[i].chi.allFinite()) raise(ErrorCode::kNonFinite, "cov_surface_smooth: non-finite observation");
    groups[obs[i].flow_id].push_back(i);
  }
  std::vector<Vec> vecs(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) vecs[i] = vec<S>(obs[i].chi);
  const double h = kernel.bandwidth;

  CovSurface<S> out{std::vector<double>(grid_s.begin(), grid_s.end()),
                    std::vector<double>(grid_t.begin(), grid_t.end()), d,
                    std::vector<Matrix<S>>(grid_s.size() * grid_t.size())};
  std::vector<std::string> singular(out.values.size());
  const auto count = static_cast<std::ptrdiff_t>(out.values.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t cell = 0; cell < count; ++cell) {
    const double s = grid_s[static_cast<std::size_t>(cell) / grid_t.size()];
    const double t = grid_t[static_cast<std::size_t>(cell) % grid_t.size()];
    double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s02 = 0, s11 = 0;
    Matrix<S> r00 = Matrix<S>::Zero(dd, dd), r10 = Matrix<S>::Zero(dd, dd), r01 = Matrix<S>::Zero(dd, dd);
    for (const auto& [id, members] : groups) {
      // Sums over j != l factor into (sum_j)(sum_l) minus the j == l terms.
      double a0 = 0, a1 = 0, a2 = 0, b0 = 0, b1 = 0, b2 = 0;
      Vec u0 = Vec::Zero(dd), u1 = Vec::Zero(dd), v0 = Vec::Zero(dd), v1 = Vec::Zero(dd);
      for (std::size_t j : members) {
        const double ks = kernel(obs[j].time - s);
        const double kt = kernel(obs[j].time - t);
        const double x = (obs[j].time - s) / h;
        const double y = (obs[j].time - t) / h;
        if (ks != 0.0) {
          a0 += ks; a1 += ks * x; a2 += ks * x * x;
          u0 += ks * vecs[j]; u1 += (ks * x) * vecs[j];
        }
        if (kt != 0.0) {
          b0 += kt; b1 += kt * y; b2 += kt * y * y;
          v0 += kt * vecs[j]; v1 += (kt * y) * vecs[j];
        }
        const double kk = ks * kt;
        if (kk != 0.0) {
          s00 -= kk; s10 -= kk * x; s01 -= kk * y; s20 -= kk * x * x; s02 -= kk * y * y; s11 -= kk * x * y;
          const Matrix<S> self = vecs[j] * vecs[j].adjoint();
          r00 -= kk * self; r10 -= (kk * x) * self; r01 -= (kk * y) * self;
        }
      }
      if (a0 == 0.0 || b0 == 0.0) continue;
      s00 += a0 * b0; s10 += a1 * b0; s01 += a0 * b1; s20 += a2 * b0; s02 += a0 * b2; s11 += a1 * b1;
      r00 += u0 * v0.adjoint();
      r10 += u1 * v0.adjoint();
      r01 += u0 * v1.adjoint();
    }
    const double c0 = s20 * s02 - s11 * s11;
    const double c1 = s10 * s02 - s01 * s11;
    const double c2 = s10 * s11 - s01 * s20;
    const double det = c0 * s00 - c1 * s10 + c2 * s01;
    const double scale = std::abs(s00 * s20 * s02);
    if (!(s00 > 0.0) || !(std::abs(det) > kSingularDesignTol * scale)) {
      singular[cell] = "(" + std::to_string(s) + ", " + std::to_string(t) + ")";
      continue;
    }
    out.values[cell] = (c0 * r00 - c1 * r10 + c2 * r01) / det;
  }
  std::string bad;
  for (const auto& b : singular) {
    if (b.empty()) continue;
    if (!bad.empty()) bad += ", ";
    bad += b;
  }
  if (!bad.empty()) raise(ErrorCode::kSingularDesign, "cov_surface_smooth: singular local design at " + bad);
  return out;
}

template <Scalar S>
SurfaceEigen<S> surface_eigen(const CovSurface<S>& surface, std::size_t k) {
  if (surface.grid_s != surface.grid_t) raise(ErrorCode::kGridMismatch, "surface_eigen: surface is not square");
  const std::size_t m = surface.grid_t.size();
  const Eigen::Index d = surface.dim;
  const Eigen::Index dd = d * d;
  const std::vector<double> w = trapezoid_weights(surface.grid_t);
  const Eigen::Index big = static_cast<Eigen::Index>(m) * dd;
  if (k > static_cast<std::size_t>(big)) raise(ErrorCode::kKTooLarge, "surface_eigen: too many components");

  Matrix<S> op = Matrix<S>::Zero(big, big);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      Matrix<S> block = surface.at(a, b);
      if (a == b) block = project_psd<S>(hermitian_part<S>(block));
      op.block(static_cast<Eigen::Index>(a) * dd, static_cast<Eigen::Index>(b) * dd, dd, dd) =
          std::sqrt(w[a] * w[b]) * block;
    }
  }
  const EigenPair<S> e = detail::eig_unchecked<S>(op);
  SurfaceEigen<S> out;
  out.eigenvalues = e.values.head(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<Matrix<S>> phi(m);
    for (std::size_t a = 0; a < m; ++a) {
      const auto seg = e.vectors.col(static_cast<Eigen::Index>(c)).segment(static_cast<Eigen::Index>(a) * dd, dd);
      Matrix<S> mat = Eigen::Map<const Matrix<S>>(Eigen::Matrix<S, Eigen::Dynamic, 1>(seg).data(), d, d);
      phi[a] = w[a] > 0.0 ? Matrix<S>(mat / std::sqrt(w[a])) : Matrix<S>::Zero(d, d);
    }
    out.eigenfunctions.push_back(std::move(phi));
  }
  return out;
}

template <Scalar S>
std::vector<BandwidthRow> bandwidth_sweep(const ScatterObs<S>& obs, KernelKind kind,
                                          std::span<const double> candidates, SmoothMode mode,
                                          const GdConfig<S>& cfg) {
  obs.validate();
  const std::vector<std::int64_t> ids = obs.distinct_flows();
  std::vector<BandwidthRow> rows;
  for (double h : candidates) {
    const Kernel kernel(kind, h);
    BandwidthRow row{h, 0.0, 0};
    double total = 0.0;
    std::size_t counted = 0;
    if (mode == SmoothMode::kNw) {
      for (auto id : ids) {
        const ScatterObs<S> mine = obs.subset(id, true);
        for (std::size_t j = 0; j < mine.size(); ++j) {
          Matrix<S> acc = Matrix<S>::Zero(mine.mats[j].rows(), mine.mats[j].cols());
          double wsum = 0.0;
          for (std::size_t l = 0; l < mine.size(); ++l) {
            if (l == j) continue;
            const double w = kernel(mine.times[l] - mine.times[j]);
            acc += w * mine.mats[l];
            wsum += w;
          }
          if (wsum == 0.0) {
            ++row.failures;
            continue;
          }
          const double pi = bw_distance<S>(project_psd<S>(hermitian_part<S>(Matrix<S>(acc / wsum))), mine.mats[j]);
          total += pi * pi;
          ++counted;
        }
      }
    } else {
      if (ids.size() < 2) raise(ErrorCode::kInvalidArgument, "leave-one-flow-out needs at least two flows");
      for (auto id : ids) {
        const ScatterObs<S> held = obs.subset(id, true);
        const ScatterObs<S> train = obs.subset(id, false);
        try {
          const std::vector<Matrix<S>> est = lfr_estimate_at<S>(train, kernel, held.times, cfg);
          for (std::size_t j = 0; j < held.size(); ++j) {
            const double pi = bw_distance<S>(est[j], held.mats[j]);
            total += pi * pi;
            ++counted;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kEmptyWindow) throw;
          row.failures += held.size();
        }
      }
    }
    row.cv_error = counted ? total / static_cast<double>(counted) : std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  return rows;
}

double best_bandwidth(const std::vector<BandwidthRow>& rows) {
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.failures == 0 && r.cv_error < best_err) {
      best_err = r.cv_error;
      best = r.bandwidth;
    }
  }
  if (std::isnan(best)) raise(ErrorCode::kEmptyWindow, "every candidate bandwidth leaves empty windows");
  return best;
}

std::vector<double> log_bandwidths(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) raise(ErrorCode::kInvalidArgument, "invalid bandwidth range");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
  }
  return out;
}

#define BWFLOW_INSTANTIATE(S)                                                                                   \
  template struct ScatterObs<S>;                                                                                \
  template ScatterObs<S> scatter_from_flowset<S>(const BasicFlowSet<S>&, const std::vector<std::vector<bool>>&); \
  template BasicFlow<S> nw_smooth<S>(const ScatterObs<S>&, const Kernel&, const Grid&);                         \
  template std::vector<Matrix<S>> nw_smooth_at<S>(const ScatterObs<S>&, const Kernel&, std::span<const double>); \
  template struct LfrResult<S>;                                                                                 \
  template LfrResult<S> lfr_estimate<S>(const ScatterObs<S>&, const Kernel&, const Grid&, const GdConfig<S>&);  \
  template std::vector<Matrix<S>> lfr_estimate_at<S>(const ScatterObs<S>&, const Kernel&,                       \
                                                     std::span<const double>, const GdConfig<S>&,               \
                                                     std::vector<LfrPointDiagnostics>*);                        \
  template CovSurface<S> cov_surface_smooth<S>(const std::vector<TangentObs<S>>&, const Kernel&,                \
                                               std::span<const double>, std::span<const double>);               \
  template SurfaceEigen<S> surface_eigen<S>(const CovSurface<S>&, std::size_t);                                 \
  template std::vector<BandwidthRow> bandwidth_sweep<S>(const ScatterObs<S>&, KernelKind,                       \
                                                        std::span<const double>, SmoothMode, const GdConfig<S>&);

BWFLOW_INSTANTIATE(double)
BWFLOW_INSTANTIATE(Complex)

#undef BWFLOW_INSTANTIATE

}  // namespace bwflow
