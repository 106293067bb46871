// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bwflow/barycenter.hpp"
#include "bwflow/cluster.hpp"
#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"
#include "bwflow/io.hpp"
#include "bwflow/simgen.hpp"
#include "bwflow/smoothing.hpp"
#include "bwflow/spectral.hpp"
#include "bwflow/tangent_pca.hpp"
#include "helpers.hpp"

using namespace bwflow;
namespace fs = std::filesystem;

namespace tol {
constexpr double kSymmetry = 1e-9;
constexpr double kTriangle = 1e-8;
constexpr double kSelf = 1e-9;
constexpr double kPushforward = 1e-7;
constexpr double kExpLog = 1e-7;
constexpr double kGeodesic = 1e-7;
constexpr double kEmbedding = 1e-10;
constexpr double kClosedForm = 1e-8;
constexpr double kResidual = 1e-6;
constexpr double kSgd = 0.02;
constexpr double kSlopeLo = -0.65, kSlopeHi = -0.35;
constexpr double kBimodalAccuracy = 0.95;
constexpr double kNwConstant = 1e-10;
constexpr double kNwSlopeLo = -0.9, kNwSlopeHi = -0.4;
constexpr double kLfrWeights = 1e-10;
constexpr double kSurface = 1e-8;
constexpr double kFlatness = 0.15;
constexpr double kFourier = 1e-8;
constexpr double kPsdFloor = 1e-12;
constexpr double kGram = 1e-10;
constexpr double kCentroid = 1e-6;
constexpr double kZeroInertia = 1e-12;
constexpr double kRefinement = 1e-3;
constexpr double kProjection = 0.05;
}  // namespace tol

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

template <Scalar S>
Matrix<S> mixed_rank_psd(std::mt19937_64& rng, Eigen::Index d) {
  std::uniform_int_distribution<Eigen::Index> rank(1, d);
  return testing::random_psd<S>(rng, d, rank(rng));
}

// ---- 1 --------------------------------------------------------------------

template <Scalar S>
void metric_triples(std::mt19937_64& rng, int count, Outcome& out, double& worst_sym, double& worst_tri, double& worst_self) {
  std::uniform_int_distribution<Eigen::Index> dim(1, 8);
  for (int i = 0; i < count; ++i) {
    const Eigen::Index d = dim(rng);
    const Matrix<S> a = mixed_rank_psd<S>(rng, d), b = mixed_rank_psd<S>(rng, d), c = mixed_rank_psd<S>(rng, d);
    const double ab = bw_distance<S>(a, b), ba = bw_distance<S>(b, a);
    const double bc = bw_distance<S>(b, c), ac = bw_distance<S>(a, c);
    worst_sym = std::max(worst_sym, std::abs(ab - ba));
    worst_tri = std::max({worst_tri, ac - ab - bc, ab - ac - bc, bc - ab - ac});
    worst_self = std::max({worst_self, bw_distance<S>(a, a), bw_distance<S>(b, b)});
    if ((a - b).norm() > 1e-6) out.require(ab > 0.0, "distinct matrices at distance 0");
  }
}

Outcome metric_suite() {
  Outcome out;
  std::mt19937_64 rng(101);
  double sym = 0.0, tri = -1e300, self = 0.0;
  metric_triples<double>(rng, 100, out, sym, tri, self);
  metric_triples<Complex>(rng, 100, out, sym, tri, self);

  double fsym = 0.0, ftri = -1e300, fself = 0.0;
  const Grid g = uniform_grid(21);
  std::uniform_int_distribution<Eigen::Index> dim(1, 8);
  auto random_flow = [&](Eigen::Index d) {
    std::vector<RealMatrix> mats;
    for (std::size_t j = 0; j < 21; ++j) mats.push_back(mixed_rank_psd<double>(rng, d));
    return Flow(g, mats);
  };
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index d = dim(rng);
    const Flow a = random_flow(d), b = random_flow(d), c = random_flow(d);
    const double ab = flow_distance(a, b), ba = flow_distance(b, a), bc = flow_distance(b, c), ac = flow_distance(a, c);
    fsym = std::max(fsym, std::abs(ab - ba));
    ftri = std::max({ftri, ac - ab - bc, ab - ac - bc, bc - ab - ac});
    fself = std::max(fself, flow_distance(a, a));
    out.require(ab > 0.0, "distinct flows at distance 0");
  }
  out.require(std::max(sym, fsym) <= tol::kSymmetry, "symmetry");
  out.require(std::max(tri, ftri) <= tol::kTriangle, "triangle inequality");
  out.require(std::max(self, fself) <= tol::kSelf, "indiscernibility");
  out.detail << "matrix sym " << sym << ", triangle excess " << tri << ", self " << self << "; flow sym " << fsym
             << ", triangle excess " << ftri << ", self " << fself;
  return out;
}

// ---- 2 --------------------------------------------------------------------

Outcome geometry_suite() {
  Outcome out;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<Eigen::Index> dim(1, 10);
  double push = 0.0, roundtrip = 0.0, speed = 0.0, iso = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index d = dim(rng);
    const RealMatrix f = testing::random_pd<double>(rng, d), g = testing::random_pd<double>(rng, d);
    const RealMatrix t = transport_map<double>(f, g);
    push = std::max(push, (t * f * t - g).norm() / g.norm());
    roundtrip = std::max(roundtrip, (exp_map<double>(f, log_map<double>(f, g)) - g).norm() / g.norm());

    const double full = bw_distance<double>(f, g);
    for (double s : {0.0, 0.3}) {
      for (double u : {0.5, 0.8, 1.0}) {
        const double along = bw_distance<double>(geodesic<double>(f, g, s), geodesic<double>(f, g, u));
        speed = std::max(speed, std::abs(along - (u - s) * full) / full);
      }
    }

    const RealMatrix a = testing::random_hermitian<double>(rng, d), b = testing::random_hermitian<double>(rng, d);
    const double inner = tangent_inner<double>(f, a, b);
    const double hs = (embed<double>(f, a).adjoint() * embed<double>(f, b)).trace();
    iso = std::max(iso, std::abs(inner - hs) / std::max(1.0, std::abs(inner)));
  }
  out.require(push <= tol::kPushforward, "pushforward");
  out.require(roundtrip <= tol::kExpLog, "exp o log");
  out.require(speed <= tol::kGeodesic, "constant speed");
  out.require(iso <= tol::kEmbedding, "embedding isometry");
  out.detail << "pushforward " << push << ", exp o log " << roundtrip << ", speed " << speed << ", isometry " << iso;
  return out;
}

// ---- 3 --------------------------------------------------------------------

Outcome barycenter_suite() {
  Outcome out;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> pos(0.2, 5.0);

  // Commuting samples Q D_i Q^T: the mean is Q (mean of D_i^{1/2})^2 Q^T.
  double closed = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index d = 1 + rep % 5;
    const RealMatrix q = Eigen::HouseholderQR<RealMatrix>(testing::random_matrix<double>(rng, d, d)).householderQ();
    std::vector<RealMatrix> samples;
    Eigen::VectorXd root_mean = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < 8; ++i) {
      Eigen::VectorXd diag(d);
      for (Eigen::Index a = 0; a < d; ++a) diag(a) = pos(rng);
      root_mean += diag.cwiseSqrt() / 8.0;
      samples.push_back(q * diag.asDiagonal() * q.transpose());
    }
    const RealMatrix expected = q * root_mean.cwiseAbs2().asDiagonal() * q.transpose();
    GdConfig<double> cfg;
    cfg.tol = 1e-12;
    const RealMatrix m = frechet_mean_gd<double>(samples, cfg).mean;
    closed = std::max(closed, (m - expected).norm() / expected.norm());
  }

  // Random 5 x 5 samples: residual and monotone functional.
  double residual = 0.0, rise = 0.0;
  int iterations = 0;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<RealMatrix> samples;
    for (int i = 0; i < 20; ++i) samples.push_back(testing::random_pd<double>(rng, 5));
    GdConfig<double> cfg;
    cfg.max_iter = 200;
    cfg.tol = 1e-10;
    const auto r = frechet_mean_gd<double>(samples, cfg);
    residual = std::max(residual, fixed_point_residual<double>(r.mean, samples));
    iterations = std::max(iterations, static_cast<int>(r.trace.records.size()));
    for (std::size_t k = 1; k < r.trace.records.size(); ++k) {
      const double prev = r.trace.records[k - 1].functional;
      rise = std::max(rise, (r.trace.records[k].functional - prev) / prev);
    }
  }

  // SGD against GD on scalar and commuting samples.
  double sgd = 0.0;
  for (Eigen::Index d : {1, 4}) {
    std::vector<RealMatrix> samples;
    for (int i = 0; i < 20; ++i) {
      Eigen::VectorXd diag(d);
      for (Eigen::Index a = 0; a < d; ++a) diag(a) = pos(rng);
      samples.push_back(diag.asDiagonal());
    }
    const RealMatrix gd = frechet_mean_gd<double>(samples).mean;
    SgdConfig cfg;
    cfg.steps = 5000;
    cfg.seed = 7;
    const RealMatrix s = frechet_mean_sgd<double>(samples, cfg);
    sgd = std::max(sgd, (s - gd).norm() / gd.norm());
  }

  out.require(closed <= tol::kClosedForm, "closed form");
  out.require(residual <= tol::kResidual && iterations <= 200, "fixed-point residual");
  out.require(rise <= 1e-12, "functional trace non-increasing");
  out.require(sgd <= tol::kSgd, "SGD vs GD");
  out.detail << "closed form " << closed << ", residual " << residual << " in <= " << iterations
             << " iterations, max relative functional rise " << rise << ", SGD gap " << sgd;
  return out;
}

// ---- 4 --------------------------------------------------------------------

Outcome consistency_rate() {
  Outcome out;
  const std::vector<std::size_t> sizes{4, 8, 16, 32, 64, 128, 256};
  const int reps = 20;
  std::vector<double> logn, logd;
  SimConfig base;
  base.dim = 10;
  base.n_times = 21;
  base.nu = 20.0;
  const Flow truth = template_flow(base);
  for (std::size_t n : sizes) {
    double mean_d = 0.0;
    for (int r = 0; r < reps; ++r) {
      SimConfig cfg = base;
      cfg.n_flows = n;
      cfg.seed = 40000 + 1000 * n + static_cast<std::uint64_t>(r);
      mean_d += flow_distance(frechet_mean_flow(sample_flows(cfg)).mean, truth) / reps;
    }
    logn.push_back(std::log(static_cast<double>(n)));
    logd.push_back(std::log(mean_d));
    out.detail << "n=" << n << ": " << mean_d << "; ";
  }
  const double s = slope(logn, logd);
  out.require(s >= tol::kSlopeLo && s <= tol::kSlopeHi, "slope");
  out.detail << "slope " << s;
  return out;
}

// ---- 5 --------------------------------------------------------------------

Outcome bimodal_pca() {
  Outcome out;
  SimConfig cfg;
  cfg.dim = 20;
  cfg.n_times = 50;
  cfg.n_flows = 100;
  cfg.seed = 2024;
  const BimodalDataset data = bimodal_dataset(cfg);
  const auto mean = frechet_mean_flow(data.flows);
  const auto model = fit_pca(log_field(data.flows, mean.mean), mean.mean, 3);
  auto accuracy = [&](Eigen::Index c) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < data.labels.size(); ++i) agree += (model.scores(static_cast<Eigen::Index>(i), c) > 0.0) == (data.labels[i] == 1);
    return std::max(agree, data.labels.size() - agree) / static_cast<double>(data.labels.size());
  };
  const double acc = accuracy(0);
  out.require(acc >= tol::kBimodalAccuracy, "first-score accuracy");
  out.detail << "accuracy " << acc << ", mean converged " << (mean.converged() ? "yes" : "no")
             << "; informational: first-component variance fraction " << model.variance_fractions()(0)
             << ", accuracy on components 2 and 3 " << accuracy(1) << ", " << accuracy(2);
  return out;
}

// ---- 6 --------------------------------------------------------------------

RealMatrix curved_flow(double t) {
  const double c = std::cos(1.5 * t), s = std::sin(1.5 * t);
  RealMatrix r(2, 2);
  r << c, -s, s, c;
  return r * testing::diag({1.0 + t * t, 2.0 + std::sin(3.0 * t)}) * r.transpose();
}

Outcome smoothing_suite() {
  Outcome out;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Kernel k(KernelKind::kEpanechnikov, 0.15);

  // Constant observations are reproduced.
  const RealMatrix c = testing::random_pd<double>(rng, 3);
  ScatterObs<double> flat;
  for (int i = 0; i < 40; ++i) {
    flat.times.push_back(unit(rng));
    flat.mats.push_back(c);
    flat.flow_ids.push_back(0);
  }
  double constant = 0.0;
  const Flow flat_fit = nw_smooth(flat, k, uniform_grid(21));
  for (const auto& m : flat_fit.matrices()) constant = std::max(constant, (m - c).norm() / c.norm());

  // Error decay at interior points with h = r^{-1/3}.
  std::vector<double> logr, loge;
  const std::vector<double> eval{0.3, 0.4, 0.5, 0.6, 0.7};
  for (std::size_t r : {100u, 400u, 1600u}) {
    ScatterObs<double> obs;
    for (std::size_t j = 0; j < r; ++j) {
      const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(r);
      obs.times.push_back(t);
      obs.mats.push_back(curved_flow(t));
      obs.flow_ids.push_back(0);
    }
    const Kernel kr(KernelKind::kEpanechnikov, std::pow(static_cast<double>(r), -1.0 / 3.0));
    const auto fit = nw_smooth_at(obs, kr, eval);
    double err = 0.0;
    for (std::size_t i = 0; i < eval.size(); ++i) err += bw_distance<double>(fit[i], curved_flow(eval[i])) / static_cast<double>(eval.size());
    logr.push_back(std::log(static_cast<double>(r)));
    loge.push_back(std::log(err));
  }
  const double nw_slope = slope(logr, loge);

  // Local-linear weights.
  double weights = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> times(50);
    for (auto& t : times) t = unit(rng);
    const double t0 = unit(rng);
    const Kernel kw(KernelKind::kEpanechnikov, 0.2);
    const LfrWeights w = lfr_weights(times, t0, kw);
    if (w.fell_back) continue;
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
      s0 += w.s[j] / static_cast<double>(times.size());
      s1 += w.s[j] * (times[j] - t0) / static_cast<double>(times.size());
    }
    weights = std::max({weights, std::abs(s0 - 1.0), std::abs(s1)});
  }

  // Surface smoother on cross products affine in (s, t).
  const double b0 = 0.3, b1 = -1.2, c0 = 2.0, c1 = 0.7;
  auto chi = [&](double t) {
    RealMatrix m(2, 2);
    m << 1.0, c0 + c1 * t, b0 + b1 * t, 0.0;
    return m;
  };
  std::vector<TangentObs<double>> tobs;
  for (std::int64_t i = 0; i < 30; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double t = unit(rng);
      tobs.push_back({i, t, chi(t)});
    }
  }
  const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto surface = cov_surface_smooth(tobs, Kernel(KernelKind::kEpanechnikov, 0.35), grid, grid);
  double affine = 0.0;
  for (std::size_t is = 0; is < grid.size(); ++is) {
    for (std::size_t it = 0; it < grid.size(); ++it) {
      const RealMatrix& x = surface.at(is, it);
      const RealMatrix cs = chi(grid[is]), ct = chi(grid[it]);
      const Eigen::Map<const Eigen::VectorXd> vs(cs.data(), 4), vt(ct.data(), 4);
      for (Eigen::Index a = 0; a < 4; ++a) {
        affine = std::max({affine, std::abs(x(0, a) - vs(0) * vt(a)), std::abs(x(a, 0) - vs(a) * vt(0))});
      }
    }
  }

  out.require(constant <= tol::kNwConstant, "NW constant recovery");
  out.require(nw_slope >= tol::kNwSlopeLo && nw_slope <= tol::kNwSlopeHi, "NW error slope");
  out.require(weights <= tol::kLfrWeights, "LFR weight identities");
  out.require(affine <= tol::kSurface, "affine surface");
  out.detail << "NW constant " << constant << ", NW slope " << nw_slope << ", LFR weights " << weights
             << ", surface " << affine;
  return out;
}

// ---- 7 --------------------------------------------------------------------

Outcome spectral_suite() {
  Outcome out;
  std::mt19937_64 rng(707);
  std::normal_distribution<double> z;
  auto noise = [&](Eigen::Index t, Eigen::Index d) {
    SeriesPanel p;
    p.values.resize(t, d);
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) p.values(i, j) = z(rng);
    }
    return p;
  };

  const SeriesPanel white = noise(10000, 3);
  const auto flat = spectral_density_flow(white, SpectralConfig{}, uniform_grid(33));
  double mean = 0.0, flatness = 0.0;
  for (const auto& m : flat.flow.matrices()) mean += real_trace<Complex>(m) / 33.0;
  for (const auto& m : flat.flow.matrices()) flatness = std::max(flatness, std::abs(real_trace<Complex>(m) - mean) / mean);

  // Moving-average process with mixed coordinates.
  const SeriesPanel e = noise(801, 3);
  const RealMatrix mix = testing::random_matrix<double>(rng, 3, 3);
  SeriesPanel ma;
  ma.values = (e.values.bottomRows(800) + 0.6 * e.values.topRows(800)) * mix.transpose();
  double fourier = 0.0;
  for (LagWindow window : {LagWindow::kBartlett, LagWindow::kRectangular}) {
    SpectralConfig cfg;
    cfg.max_lag = 8;
    cfg.window = window;
    cfg.project = false;
    const auto sdf = spectral_density_flow(ma, cfg, uniform_grid(4 * cfg.max_lag + 1));
    for (std::ptrdiff_t h = -8; h <= 8; ++h) {
      const RealMatrix r = h >= 0 ? autocov(ma, static_cast<std::size_t>(h)) : RealMatrix(autocov(ma, static_cast<std::size_t>(-h)).transpose());
      const ComplexMatrix expected = lag_weight(window, h, cfg.max_lag) * r.cast<Complex>();
      fourier = std::max(fourier, (invert_sdf(sdf, h) - expected).norm());
    }
  }

  double herm = 0.0, floor = 0.0;
  for (LagWindow window : {LagWindow::kBartlett, LagWindow::kRectangular}) {
    SpectralConfig cfg;
    cfg.max_lag = 30;
    cfg.window = window;
    const auto sdf = spectral_density_flow(ma, cfg, uniform_grid(121));
    for (const auto& m : sdf.flow.matrices()) {
      herm = std::max(herm, hermitian_residual<Complex>(m));
      floor = std::min(floor, min_eigenvalue<Complex>(m) / std::max(1.0, m.norm()));
    }
  }

  out.require(flatness <= tol::kFlatness, "white-noise flatness");
  out.require(fourier <= tol::kFourier, "Fourier roundtrip");
  out.require(herm == 0.0 && floor >= -tol::kPsdFloor, "Hermitian PSD output");
  out.detail << "flatness " << flatness << ", roundtrip " << fourier << ", Hermitian residual " << herm
             << ", min eigenvalue " << floor;
  return out;
}

// ---- 8 --------------------------------------------------------------------

template <Scalar S>
Eigen::VectorXd direct_covariance_eigenvalues(const std::vector<TangentField<S>>& fields, const std::vector<double>& w) {
  const std::size_t n = fields.size(), m = w.size();
  const Eigen::Index d = fields[0].mats[0].rows();
  const Eigen::Index per = (std::is_same_v<S, double> ? 1 : 2) * d * d;
  // Materialized covariance over (time, entry) pairs, with quadrature weights folded in.
  const Eigen::Index big = static_cast<Eigen::Index>(m) * per;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(big, big);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(big);
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < m; ++j) {
      for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
          const S x = fields[i].mats[j](a, b);
          v(row++) = std::sqrt(w[j]) * std::real(x);
          if constexpr (!std::is_same_v<S, double>) v(row++) = std::sqrt(w[j]) * std::imag(x);
        }
      }
    }
    cov += v * v.transpose() / static_cast<double>(n);
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().reverse();
}

template <Scalar S>
double gram_gap(std::mt19937_64& rng, std::size_t n, Eigen::Index d, std::size_t m) {
  const Grid g = uniform_grid(m);
  std::vector<BasicFlow<S>> flows;
  for (std::size_t i = 0; i < n; ++i) flows.push_back(testing::random_pd_flow<S>(rng, g, d));
  const BasicFlowSet<S> set(flows);
  MeanFlowConfig<S> cfg;
  cfg.gd.tol = 1e-12;
  const BasicFlow<S> mean = frechet_mean_flow(set, cfg).mean;
  const auto fields = log_field(set, mean);
  const auto model = fit_pca(fields, mean, n);
  const Eigen::VectorXd direct = direct_covariance_eigenvalues<S>(fields, trapezoid_weights(mean.grid()));
  double gap = 0.0;
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(n); ++k) {
    const double expected = k < direct.size() ? direct(k) : 0.0;
    gap = std::max(gap, std::abs(model.eigenvalues(k) - expected) / std::max(1.0, direct(0)));
  }
  return gap;
}

Outcome pca_oracle() {
  Outcome out;
  std::mt19937_64 rng(808);
  double gap = 0.0;
  int instances = 0;
  for (std::size_t n = 2; n <= 5; ++n) {
    for (Eigen::Index d = 1; d <= 3; ++d) {
      for (std::size_t m : {2u, 4u}) {
        gap = std::max(gap, gram_gap<double>(rng, n, d, m));
        gap = std::max(gap, gram_gap<Complex>(rng, n, d, m));
        instances += 2;
      }
    }
  }
  out.require(gap <= tol::kGram, "Gram vs direct eigenvalues");
  out.detail << instances << " instances, max relative eigenvalue gap " << gap;
  return out;
}

// ---- 9 --------------------------------------------------------------------

RealMatrix population_center(std::size_t p) {
  RealMatrix m = 0.5 * RealMatrix::Identity(5, 5);
  m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) += 20.0;
  return m;
}

std::pair<FlowSet, std::vector<int>> populations(std::size_t count, std::size_t per, std::uint64_t seed) {
  std::vector<Flow> flows;
  std::vector<int> truth;
  for (std::size_t p = 0; p < count; ++p) {
    SimConfig cfg;
    cfg.dim = 5;
    cfg.n_times = 4;
    cfg.n_flows = per;
    cfg.nu = 200;
    cfg.law.sigma_w = 0.1;
    cfg.seed = seed * 100 + p;
    cfg.template_kind = TemplateKind::kExplicit;
    cfg.explicit_template = testing::constant_flow<double>(uniform_grid(4), population_center(p));
    const FlowSet sampled = sample_flows(cfg);
    for (const auto& f : sampled.flows()) {
      flows.push_back(f);
      truth.push_back(static_cast<int>(p));
    }
  }
  return {FlowSet(flows), truth};
}

Outcome clustering_suite() {
  Outcome out;
  const auto [set, truth] = populations(2, 5, 1);
  KMeansConfig<double> cfg;
  cfg.restarts = 4;
  cfg.seed = 3;
  const auto one = kmeans_flows(set, 1, cfg);
  const double centroid = flow_distance(one.centroids[0], frechet_mean_flow(set).mean);
  const auto all = kmeans_flows(set, set.size(), cfg);

  int recovered = 0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [s, t] = populations(2, 6, seed + 10);
    KMeansConfig<double> c;
    c.restarts = 4;
    c.seed = seed;
    const auto r = kmeans_flows(s, 2, c);
    recovered += label_agreement(r.labels, t) == 1.0;
    for (std::size_t k = 1; k < r.per_iter_inertia.size(); ++k) {
      monotone = monotone && r.per_iter_inertia[k] <= r.per_iter_inertia[k - 1] * (1.0 + 1e-9) + 1e-12;
    }
  }
  out.require(centroid <= tol::kCentroid, "k=1 centroid");
  out.require(all.inertia <= tol::kZeroInertia, "k=n inertia");
  out.require(recovered == 10, "recovery");
  out.require(monotone, "monotone inertia");
  out.detail << "k=1 centroid gap " << centroid << ", k=n inertia " << all.inertia << ", recovered " << recovered
             << "/10, monotone " << (monotone ? "yes" : "no");
  return out;
}

// ---- 10 -------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + BWFLOW_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::vector<std::string> manifest_hashes(const fs::path& path) {
  std::ifstream in(path);
  const nlohmann::json j = nlohmann::json::parse(in);
  std::vector<std::string> out;
  for (const auto& [file, hash] : j.at("output_hashes").items()) out.push_back(hash.get<std::string>());
  return out;
}

Outcome io_suite() {
  Outcome out;
  std::mt19937_64 rng(1010);
  const Grid g = uniform_grid(7);
  std::vector<Flow> flows;
  std::vector<ComplexFlow> cflows;
  for (int i = 0; i < 4; ++i) {
    flows.push_back(testing::random_pd_flow<double>(rng, g, 5));
    cflows.push_back(testing::random_pd_flow<Complex>(rng, g, 3));
  }
  const fs::path dir = fs::path(BWFLOW_ACCEPTANCE_TMP);
  fs::create_directories(dir);
  bool roundtrip = true;
  for (const AnyFlowSet& set : {AnyFlowSet(FlowSet(flows)), AnyFlowSet(ComplexFlowSet(cflows))}) {
    const auto bytes = encode_bwf1(set);
    write_bwf1(dir / "roundtrip.bwf", set);
    const auto back = read_bwf1(dir / "roundtrip.bwf");
    roundtrip = roundtrip && read_file_bytes(dir / "roundtrip.bwf") == bytes && encode_bwf1(back) == bytes;
  }

  const auto good = encode_bwf1(FlowSet(flows));
  std::vector<std::vector<std::uint8_t>> bad;
  bad.emplace_back(good.begin(), good.begin() + 20);
  for (std::size_t at : {0u, 8u, 9u, 12u, 16u, 20u}) {
    auto b = good;
    b[at] ^= 0x5a;
    bad.push_back(b);
  }
  bad.push_back(good);
  bad.back().pop_back();
  int rejected = 0;
  for (const auto& b : bad) {
    try {
      decode_bwf1(b);
    } catch (const Error& e) {
      rejected += e.code() == ErrorCode::kFormat;
    }
  }

  std::ofstream(dir / "sim.json") << R"({"dim": 6, "n_times": 7, "n_flows": 10, "seed": 31})";
  bool same = true;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path sub = dir / ("run" + std::to_string(pass));
    fs::create_directories(sub);
    const std::string sim = "simulate --config \"" + (dir / "sim.json").string() + "\" --out \"" + (sub / "flows.bwf").string() + "\"";
    const std::string mean = "mean --algo sgd --sgd-steps 500 --seed 9 --in \"" + (sub / "flows.bwf").string() + "\" --out \"" + (sub / "mean.bwf").string() + "\"";
    const std::string pca = "pca --k 2 --in \"" + (sub / "flows.bwf").string() + "\" --out-prefix \"" + (sub / "pca").string() + "\"";
    same = same && run_cli(sim) == 0 && run_cli(mean) == 0 && run_cli(pca) == 0;
  }
  std::size_t compared = 0;
  if (same) {
    for (const char* m : {"flows.bwf.manifest.json", "mean.bwf.manifest.json", "pca.model.json.manifest.json"}) {
      const auto a = manifest_hashes(dir / "run0" / m), b = manifest_hashes(dir / "run1" / m);
      same = same && !a.empty() && a == b;
      compared += a.size();
    }
  }
  out.require(roundtrip, "byte-exact roundtrip");
  out.require(rejected == static_cast<int>(bad.size()), "corrupted headers");
  out.require(same, "manifest reproducibility");
  out.detail << "roundtrip " << (roundtrip ? "exact" : "differs") << ", rejected " << rejected << "/" << bad.size()
             << " corrupted files, " << compared << " output hashes matched";
  return out;
}

// ---- 11 -------------------------------------------------------------------

// Stationary kernel k(|x - y|) on x_j = (j + 1/2) / d, scaled by 1 / d.
template <typename K>
RealMatrix kernel_matrix(std::size_t d, K k) {
  const auto n = static_cast<Eigen::Index>(d);
  RealMatrix out(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = k(std::abs(static_cast<double>(a - b)) / static_cast<double>(d)) / static_cast<double>(d);
  }
  return out;
}

// Flow i at time t: sigma_i(t)^2 exp(-r / l_i(t)) plus b_i(t) phi_i(x) phi_i(y).
struct KernelFlowLaw {
  double l0, l1, amp, b, phase;

  RealMatrix at(std::size_t d, double t) const {
    const double l = l0 + l1 * t, s2 = std::pow(1.0 + amp * std::sin(M_PI * t), 2);
    RealMatrix m = kernel_matrix(d, [&](double r) { return s2 * std::exp(-r / l); });
    Eigen::VectorXd phi(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      phi(static_cast<Eigen::Index>(j)) = std::sqrt(2.0) * std::cos(2.0 * M_PI * (static_cast<double>(j) + 0.5) / static_cast<double>(d) + phase);
    }
    m += b * (1.0 + t) * phi * phi.transpose() / static_cast<double>(d);
    return m;
  }
};

// Cell-averaging isometry from the coarse to the fine grid.
RealMatrix refine(std::size_t coarse, std::size_t fine) {
  const std::size_t f = fine / coarse;
  RealMatrix e = RealMatrix::Zero(static_cast<Eigen::Index>(fine), static_cast<Eigen::Index>(coarse));
  for (std::size_t i = 0; i < fine; ++i) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i / f)) = 1.0 / std::sqrt(static_cast<double>(f));
  return e;
}

// L2 projection onto d cell indicators, computed by averaging a 600-point
// discretization; projections at nested resolutions are exactly consistent.
RealMatrix projected(const KernelFlowLaw& law, std::size_t d, double t) {
  constexpr std::size_t kFine = 600;
  const RealMatrix e = refine(d, kFine);
  return e.transpose() * law.at(kFine, t) * e;
}

Outcome discretization() {
  Outcome out;
  auto pair_distance = [](std::size_t m) {
    const Grid g = uniform_grid(m);
    std::vector<RealMatrix> a, b;
    for (double t : *g) {
      const double la = 0.1 + 0.2 * t, lb = 0.2 + 0.3 * t;
      a.push_back(kernel_matrix(10, [&](double r) { return std::exp(-r * r / (2.0 * la * la)); }));
      b.push_back(kernel_matrix(10, [&](double r) { return std::exp(-r / lb); }));
    }
    return flow_distance(Flow(g, a), Flow(g, b));
  };
  const double coarse = pair_distance(11), fine = pair_distance(101);
  const double refinement = std::abs(coarse - fine) / fine;

  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<KernelFlowLaw> laws;
  for (int i = 0; i < 12; ++i) laws.push_back({0.1 + 0.2 * u(rng), 0.2 * u(rng), 0.5 * u(rng), 2.0 * u(rng), 2.0 * M_PI * u(rng)});
  const Grid g = uniform_grid(6);
  auto mean_at = [&](std::size_t d) {
    std::vector<Flow> flows;
    for (const auto& law : laws) {
      std::vector<RealMatrix> mats;
      for (double t : *g) mats.push_back(projected(law, d, t));
      flows.push_back(Flow(g, mats));
    }
    return frechet_mean_flow(FlowSet(flows)).mean;
  };
  const Flow m20 = mean_at(20), m60 = mean_at(60);
  const RealMatrix e = refine(20, 60);
  double projection = 0.0, lift = 0.0;
  for (std::size_t j = 0; j < g->size(); ++j) {
    const RealMatrix compressed = e.transpose() * m60[j] * e;
    projection = std::max(projection, bw_distance<double>(compressed, m20[j]) / std::sqrt(m20[j].trace()));
    const RealMatrix lifted = e * m20[j] * e.transpose();
    lift = std::max(lift, bw_distance<double>(lifted, m60[j]) / std::sqrt(m60[j].trace()));
  }
  double inputs = 0.0;
  for (const auto& law : laws) {
    for (double t : *g) {
      const RealMatrix a = projected(law, 20, t);
      inputs = std::max(inputs, bw_distance<double>(RealMatrix(e.transpose() * projected(law, 60, t) * e), a) / std::sqrt(a.trace()));
    }
  }
  out.require(refinement <= tol::kRefinement, "m=11 vs m=101");
  out.require(projection <= tol::kProjection, "d=20 vs d=60");
  out.detail << "refinement gap " << refinement << ", projection gap " << projection << " of sqrt(trace), input gap " << inputs << ", lifted gap " << lift << " (informational)";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // runtime limit, 0 for none
  std::function<Outcome()> run;
};

}  // namespace

// Optional arguments restrict the run to the listed criterion ids.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "metric suite", 30.0, metric_suite},
      {2, "transport and geometry", 0.0, geometry_suite},
      {3, "barycenter", 0.0, barycenter_suite},
      {4, "consistency rate", 600.0, consistency_rate},
      {5, "bimodal PCA", 300.0, bimodal_pca},
      {6, "smoothing", 0.0, smoothing_suite},
      {7, "spectral", 0.0, spectral_suite},
      {8, "PCA oracle equivalence", 0.0, pca_oracle},
      {9, "clustering", 0.0, clustering_suite},
      {10, "I/O and reproducibility", 0.0, io_suite},
      {11, "discretization stability", 0.0, discretization},
  };
  int failures = 0;
  std::cout << std::setprecision(3);
  std::size_t ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double elapsed = seconds_since(t0);
    if (c.budget_s > 0.0 && elapsed > c.budget_s) o.require(false, "runtime over " + std::to_string(c.budget_s) + " s");
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << c.id << "  " << c.name << "  ("
              << std::fixed << std::setprecision(1) << elapsed << " s)  " << std::defaultfloat << std::setprecision(3)
              << o.detail.str() << std::endl;
  }
  std::cout << (failures ? "FAILED: " : "ALL PASSED: ") << ran - static_cast<std::size_t>(failures) << "/" << ran
            << " criteria" << std::endl;
  return failures ? 1 : 0;
}
