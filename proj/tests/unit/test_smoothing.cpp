#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"
#include "bwflow/smoothing.hpp"
#include "bwflow/tangent_pca.hpp"
#include "helpers.hpp"

using namespace bwflow;
using testing::diag;
using testing::scalar;

namespace {

ScatterObs<double> scatter(std::vector<double> times, std::vector<RealMatrix> mats) {
  ScatterObs<double> obs;
  obs.flow_ids.assign(times.size(), 0);
  obs.times = std::move(times);
  obs.mats = std::move(mats);
  return obs;
}

std::vector<double> uniform_times(std::mt19937_64& rng, std::size_t r) {
  std::uniform_real_distribution<double> u;
  std::vector<double> t(r);
  for (double& x : t) x = u(rng);
  return t;
}

constexpr KernelKind kKinds[] = {KernelKind::kUniform, KernelKind::kEpanechnikov, KernelKind::kGaussianTruncated};

}  // namespace

TEST_CASE("kernels") {
  for (KernelKind kind : kKinds) {
    const Kernel k(kind, 0.2);
    CHECK(k.profile(0.0) > 0.0);
    CHECK(k.profile(k.support() + 1e-9) == 0.0);
    CHECK(k.profile(-k.support() - 1e-9) == 0.0);
    CHECK(k.profile(0.3) == k.profile(-0.3));
    // Unit mass after scaling, by the midpoint rule.
    double mass = 0.0;
    const int steps = 200000;
    const double lo = -k.support() * k.bandwidth, width = 2.0 * k.support() * k.bandwidth / steps;
    for (int i = 0; i < steps; ++i) mass += k(lo + (i + 0.5) * width) * width;
    CHECK(mass == doctest::Approx(1.0).epsilon(kind == KernelKind::kGaussianTruncated ? 1e-3 : 1e-6));
    CHECK(parse_kernel_kind(kernel_kind_name(kind)) == kind);
  }
  CHECK_THROWS_CODE(Kernel(KernelKind::kUniform, 0.0), ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(parse_kernel_kind("triangle"), ErrorCode::kInvalidArgument);
}

TEST_CASE("observation validation") {
  CHECK_THROWS_CODE(scatter({0.5, 1.5}, {scalar(1), scalar(1)}).validate(), ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(scatter({0.5}, {scalar(1), scalar(1)}).validate(), ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(scatter({0.1, 0.2}, {scalar(1), diag({1, 1})}).validate(), ErrorCode::kDimMismatch);
  CHECK_THROWS_CODE(scatter({0.1}, {scalar(-1)}).validate(), ErrorCode::kNotPsd);

  std::mt19937_64 rng(1);
  const Grid g = uniform_grid(3);
  const FlowSet set(std::vector<Flow>{testing::random_pd_flow<double>(rng, g, 2), testing::random_pd_flow<double>(rng, g, 2)});
  const auto obs = scatter_from_flowset(set, {{true, false, true}, {false, true, false}});
  CHECK(obs.size() == 3);
  CHECK(obs.times[1] == 1.0);
  CHECK(obs.mats[2] == set[1][1]);
  CHECK(obs.distinct_flows() == std::vector<std::int64_t>{0, 1});
  CHECK(obs.subset(0, false).size() == 1);
}

TEST_CASE("Nadaraya-Watson examples") {
  std::mt19937_64 rng(2);
  const RealMatrix c = testing::random_pd<double>(rng, 3);
  const auto times = uniform_times(rng, 50);
  const auto flat = nw_smooth(scatter(times, std::vector<RealMatrix>(50, c)), Kernel(KernelKind::kEpanechnikov, 0.2), uniform_grid(11));
  for (std::size_t j = 0; j < flat.size(); ++j) CHECK((flat[j] - c).norm() <= 1e-12 * c.norm());

  const auto one = nw_smooth_at(scatter({0.5, 0.9}, {c, 2.0 * c}), Kernel(KernelKind::kUniform, 0.1), std::vector<double>{0.45});
  CHECK((one[0] - c).norm() <= 1e-14 * c.norm());

  try {
    nw_smooth(scatter({0.1, 0.2}, {c, c}), Kernel(KernelKind::kUniform, 0.05), uniform_grid(3));
    FAIL("expected EmptyWindow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyWindow);
    CHECK(std::string(e.what()).find("0.5") != std::string::npos);
  }
}

TEST_CASE("Nadaraya-Watson traces stay between the window extremes") {
  std::mt19937_64 rng(3);
  const auto times = uniform_times(rng, 40);
  std::vector<RealMatrix> mats;
  for (std::size_t i = 0; i < times.size(); ++i) mats.push_back(testing::random_psd<double>(rng, 3, 2));
  const auto obs = scatter(times, mats);
  const Kernel k(KernelKind::kEpanechnikov, 0.15);
  const std::vector<double> eval{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto fit = nw_smooth_at(obs, k, eval);
  for (std::size_t e = 0; e < eval.size(); ++e) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (k(times[i] - eval[e]) > 0.0) {
        lo = std::min(lo, mats[i].trace());
        hi = std::max(hi, mats[i].trace());
      }
    }
    CHECK(fit[e].trace() >= lo - 1e-12);
    CHECK(fit[e].trace() <= hi + 1e-12);
    CHECK(min_eigenvalue<double>(fit[e]) >= -1e-12);
  }
}

TEST_CASE("local-linear weight identities") {
  std::mt19937_64 rng(4);
  for (KernelKind kind : kKinds) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto times = uniform_times(rng, 30);
      const double t = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
      const auto w = lfr_weights(times, t, Kernel(kind, 0.3));
      CHECK_FALSE(w.fell_back);
      double sum = 0.0, moment = 0.0;
      for (std::size_t j = 0; j < times.size(); ++j) {
        sum += w.s[j];
        moment += w.s[j] * (times[j] - t);
      }
      CHECK(std::abs(sum / 30.0 - 1.0) <= 1e-10);
      CHECK(std::abs(moment / 30.0) <= 1e-10);
    }
  }
  // Symmetric design: mu_1 = 0 and the weights reduce to the kernel.
  const std::vector<double> sym{0.3, 0.4, 0.5, 0.6, 0.7};
  const Kernel k(KernelKind::kEpanechnikov, 0.25);
  const auto w = lfr_weights(sym, 0.5, k);
  for (std::size_t j = 0; j < sym.size(); ++j) {
    CHECK(w.s[j] / w.s[2] == doctest::Approx(k(sym[j] - 0.5) / k(0.0)).epsilon(1e-12));
  }
  const auto same = lfr_weights(std::vector<double>{0.4, 0.4, 0.4}, 0.5, k);
  CHECK(same.fell_back);
  for (double s : same.s) CHECK(s == doctest::Approx(1.0));
  CHECK_THROWS_CODE(lfr_weights(std::vector<double>{0.0}, 0.9, k), ErrorCode::kEmptyWindow);
}

TEST_CASE("local Fréchet regression examples") {
  std::mt19937_64 rng(5);
  const RealMatrix c = testing::random_pd<double>(rng, 3);
  const auto times = uniform_times(rng, 30);
  const auto flat = lfr_estimate(scatter(times, std::vector<RealMatrix>(30, c)), Kernel(KernelKind::kEpanechnikov, 0.25), uniform_grid(6));
  CHECK(flat.converged());
  for (std::size_t j = 0; j < 6; ++j) CHECK((flat.flow[j] - c).norm() <= 1e-8 * c.norm());

  const auto lone = lfr_estimate_at(scatter({0.2, 0.8}, {c, 2.0 * c}), Kernel(KernelKind::kUniform, 0.05), std::vector<double>{0.21}, {});
  CHECK((lone[0] - c).norm() <= 1e-8 * c.norm());
  std::vector<LfrPointDiagnostics> diag_out;
  lfr_estimate_at(scatter({0.2, 0.8}, {c, 2.0 * c}), Kernel(KernelKind::kUniform, 0.05), std::vector<double>{0.21}, {}, &diag_out);
  REQUIRE(diag_out.size() == 1);
  CHECK(diag_out[0].fell_back);
  CHECK_THROWS_CODE(lfr_estimate(scatter({0.2}, {c}), Kernel(KernelKind::kUniform, 0.05), uniform_grid(3)), ErrorCode::kEmptyWindow);
}

TEST_CASE("local Fréchet regression tracks a geodesic at least as well as Nadaraya-Watson") {
  std::mt19937_64 rng(6);
  const RealMatrix f0 = testing::random_pd<double>(rng, 3), f1 = 4.0 * testing::random_pd<double>(rng, 3);
  std::vector<double> nw_errors;
  for (std::size_t r : {100u, 400u, 1600u}) {
    const auto times = uniform_times(rng, r);
    std::vector<RealMatrix> mats;
    for (double t : times) mats.push_back(geodesic<double>(f0, f1, t));
    const auto obs = scatter(times, mats);
    const Kernel k(KernelKind::kEpanechnikov, std::pow(static_cast<double>(r), -1.0 / 3.0));
    const std::vector<double> eval{0.05, 0.25, 0.5, 0.75, 0.95};
    const auto nw = nw_smooth_at(obs, k, eval);
    const auto lfr = lfr_estimate_at(obs, k, eval, {});
    double sup_nw = 0.0, sup_lfr = 0.0;
    for (std::size_t e = 0; e < eval.size(); ++e) {
      const RealMatrix truth = geodesic<double>(f0, f1, eval[e]);
      sup_nw = std::max(sup_nw, bw_distance<double>(nw[e], truth));
      sup_lfr = std::max(sup_lfr, bw_distance<double>(lfr[e], truth));
    }
    CHECK(sup_lfr <= sup_nw);
    // Local-linear weights reproduce a geodesic up to the solver tolerance.
    CHECK(sup_lfr <= 1e-6);
    nw_errors.push_back(sup_nw);
  }
  CHECK(nw_errors[1] < nw_errors[0]);
  CHECK(nw_errors[2] < nw_errors[1]);
}

TEST_CASE("covariance surface smoother") {
  std::mt19937_64 rng(7);
  const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  const Kernel k(KernelKind::kEpanechnikov, 0.3);

  SUBCASE("constant cross products") {
    const RealMatrix c = testing::random_hermitian<double>(rng, 2);
    std::vector<TangentObs<double>> obs;
    for (std::int64_t i = 0; i < 20; ++i) {
      for (double t : uniform_times(rng, 5)) obs.push_back({i, t, c});
    }
    const auto surface = cov_surface_smooth(obs, k, grid, grid);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(c.data(), 4);
    const RealMatrix expected = v * v.transpose();
    for (const auto& x : surface.values) CHECK((x - expected).norm() <= 1e-10 * expected.norm());
  }

  SUBCASE("entries affine in (s, t) are reproduced, and the surface is Hermitian") {
    // chi(t) = [[1, c0 + c1 t], [b0 + b1 t, 0]]: the cross product's first row and
    // column are affine in (s, t).
    const double b0 = 0.3, b1 = -1.2, c0 = 2.0, c1 = 0.7;
    auto chi = [&](double t) {
      RealMatrix m(2, 2);
      m << 1.0, c0 + c1 * t, b0 + b1 * t, 0.0;
      return m;
    };
    std::vector<TangentObs<double>> obs;
    for (std::int64_t i = 0; i < 30; ++i) {
      for (double t : uniform_times(rng, 6)) obs.push_back({i, t, chi(t)});
    }
    const auto surface = cov_surface_smooth(obs, k, grid, grid);
    for (std::size_t is = 0; is < grid.size(); ++is) {
      for (std::size_t it = 0; it < grid.size(); ++it) {
        const RealMatrix& x = surface.at(is, it);
        const Eigen::VectorXd vs = Eigen::Map<const Eigen::VectorXd>(chi(grid[is]).data(), 4);
        const Eigen::VectorXd vt = Eigen::Map<const Eigen::VectorXd>(chi(grid[it]).data(), 4);
        for (Eigen::Index a = 0; a < 4; ++a) {
          CHECK(std::abs(x(0, a) - vs(0) * vt(a)) <= 1e-8);
          CHECK(std::abs(x(a, 0) - vs(a) * vt(0)) <= 1e-8);
        }
        CHECK((x - surface.at(it, is).adjoint()).norm() <= 1e-8 * std::max(1.0, x.norm()));
      }
    }
  }

  SUBCASE("a design with one observation per flow has no cross pairs") {
    std::vector<TangentObs<double>> obs;
    for (std::int64_t i = 0; i < 10; ++i) obs.push_back({i, 0.1 * static_cast<double>(i), scalar(1)});
    CHECK_THROWS_CODE(cov_surface_smooth(obs, k, grid, grid), ErrorCode::kSingularDesign);
  }
}

TEST_CASE("surface eigenfunctions approach the dense PCA components") {
  std::mt19937_64 rng(8);
  const std::size_t n = 200, m = 11;
  const Grid g = uniform_grid(m);
  // Rank-one tangent process chi_i(t) = xi_i * phi(t) plus a little noise.
  RealMatrix base(2, 2);
  base << 1.0, 0.4, 0.4, -0.5;
  std::normal_distribution<double> z;
  std::vector<TangentField<double>> dense;
  std::vector<TangentObs<double>> obs;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = z(rng);
    TangentField<double> f{g, {}};
    for (std::size_t j = 0; j < m; ++j) {
      const double t = (*g)[j];
      RealMatrix chi = xi * (1.0 + t) * base + 0.05 * testing::random_matrix<double>(rng, 2, 2);
      obs.push_back({static_cast<std::int64_t>(i), t, chi});
      f.mats.push_back(std::move(chi));
    }
    dense.push_back(std::move(f));
  }
  const Flow mean = testing::constant_flow<double>(g, RealMatrix(RealMatrix::Identity(2, 2)));
  const auto pca = fit_pca(dense, mean, 1);
  const auto surface = cov_surface_smooth(obs, Kernel(KernelKind::kEpanechnikov, 0.35), *g, *g);
  const auto eig = surface_eigen(surface, 1);
  const auto w = trapezoid_weights(*g);
  double dot = 0.0;
  for (std::size_t j = 0; j < m; ++j) dot += w[j] * (eig.eigenfunctions[0][j].cwiseProduct(pca.components[0].mats[j])).sum();
  CHECK(std::abs(dot) >= 0.95);
  CHECK(eig.eigenvalues(0) > 0.0);
}

TEST_CASE("bandwidth selection") {
  const auto grid = log_bandwidths(0.02, 0.5, 12);
  REQUIRE(grid.size() == 12);
  CHECK(grid.front() == doctest::Approx(0.02));
  CHECK(grid.back() == doctest::Approx(0.5));
  CHECK(grid[1] / grid[0] == doctest::Approx(grid[11] / grid[10]));
  CHECK_THROWS_CODE(log_bandwidths(0.0, 1.0, 3), ErrorCode::kInvalidArgument);

  std::mt19937_64 rng(9);
  const RealMatrix f0 = testing::random_pd<double>(rng, 2), f1 = testing::random_pd<double>(rng, 2);
  ScatterObs<double> obs;
  for (std::int64_t i = 0; i < 4; ++i) {
    for (double t : uniform_times(rng, 25)) {
      obs.times.push_back(t);
      obs.mats.push_back(geodesic<double>(f0, f1, t));
      obs.flow_ids.push_back(i);
    }
  }
  const std::vector<double> candidates{0.005, 0.1, 0.3};
  for (SmoothMode mode : {SmoothMode::kNw, SmoothMode::kLfr}) {
    const auto rows = bandwidth_sweep(obs, KernelKind::kEpanechnikov, candidates, mode);
    REQUIRE(rows.size() == 3);
    const double best = best_bandwidth(rows);
    CHECK(std::find(candidates.begin(), candidates.end(), best) != candidates.end());
    for (const auto& row : rows) {
      if (row.bandwidth == best) CHECK(row.failures == 0);
    }
  }
  std::vector<BandwidthRow> hopeless{{0.1, 1.0, 2}, {0.2, 0.5, 1}};
  CHECK_THROWS_CODE(best_bandwidth(hopeless), ErrorCode::kEmptyWindow);
}
