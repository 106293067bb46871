#include "bwflow/simgen.hpp"

#include <cmath>
#include <string>

#include "bwflow/error.hpp"
#include "bwflow/geometry.hpp"

namespace bwflow {

namespace {

// Stream id for the bimodal g-curves, kept apart from the per-flow streams.
constexpr std::uint64_t kCurveStream = 0x9e3779b97f4a7c15ULL;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

RealMatrix congruence(const RealMatrix& t, const RealMatrix& m) {
  return hermitian_part<double>(RealMatrix(t * m * t.transpose()));
}

RealMatrix weighted_projector(const RealMatrix& psi, const Eigen::VectorXd& lambda) {
  return psi * lambda.asDiagonal() * psi.transpose();
}

}  // namespace

TemplateKind parse_template_kind(std::string_view name) {
  if (name == "bm_bb_geodesic") return TemplateKind::kBmBbGeodesic;
  if (name == "matern_pair") return TemplateKind::kMaternPair;
  if (name == "explicit") return TemplateKind::kExplicit;
  raise(ErrorCode::kConfig, "unknown template '" + std::string(name) + "'");
}

std::string_view template_kind_name(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::kBmBbGeodesic: return "bm_bb_geodesic";
    case TemplateKind::kMaternPair: return "matern_pair";
    case TemplateKind::kExplicit: return "explicit";
  }
  return "unknown";
}

void SimConfig::validate() const {
  if (dim == 0) raise(ErrorCode::kConfig, "dim must be positive");
  if (n_times == 0) raise(ErrorCode::kConfig, "n_times must be positive");
  if (n_flows == 0) raise(ErrorCode::kConfig, "n_flows must be positive");
  if (!(nu > 0.0) || !std::isfinite(nu)) raise(ErrorCode::kConfig, "nu must be positive");
  if (truncation == 0) raise(ErrorCode::kConfig, "truncation must be at least 1");
  if (!(law.sigma_w >= 0.0) || !(law.sigma_theta >= 0.0)) raise(ErrorCode::kConfig, "law scales must be nonnegative");
  if (template_kind == TemplateKind::kMaternPair) {
    if (!(matern.nu1 > 0.0) || !(matern.nu2 > 0.0) || !(matern.length_scale > 0.0) || !(matern.variance > 0.0)) {
      raise(ErrorCode::kConfig, "Matérn parameters must be positive");
    }
  }
  if (template_kind == TemplateKind::kExplicit) {
    if (!explicit_template) raise(ErrorCode::kConfig, "explicit template missing");
    if (static_cast<std::size_t>(explicit_template->dim()) != dim) raise(ErrorCode::kConfig, "explicit template dim differs from dim");
  }
}

RealMatrix harmonic_basis(std::size_t d, std::size_t count) {
  if (count > d) raise(ErrorCode::kInvalidArgument, "at most d orthonormal harmonics exist");
  const auto rows = static_cast<Eigen::Index>(d);
  RealMatrix psi(rows, static_cast<Eigen::Index>(count));
  const double dd = static_cast<double>(d);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t f = (k + 1) / 2;
    const bool nyquist = 2 * f == d;
    for (Eigen::Index j = 0; j < rows; ++j) {
      const double a = 2.0 * M_PI * static_cast<double>(f) * static_cast<double>(j) / dd;
      double v;
      if (k == 0) {
        v = 1.0 / std::sqrt(dd);
      } else if (nyquist) {
        v = std::cos(a) / std::sqrt(dd);
      } else {
        v = std::sqrt(2.0 / dd) * (k % 2 == 1 ? std::sin(a) : std::cos(a));
      }
      psi(j, static_cast<Eigen::Index>(k)) = v;
    }
  }
  return psi;
}

RealMatrix shifted_harmonics(std::size_t d, std::size_t count, double theta) {
  const RealMatrix base = harmonic_basis(d, std::min(d, count + 1));
  RealMatrix psi = base.leftCols(static_cast<Eigen::Index>(count));
  for (std::size_t k = 1; k < count; ++k) {
    const std::size_t f = (k + 1) / 2;
    if (2 * f == d) continue;
    const double c = std::cos(static_cast<double>(f) * theta);
    const double s = std::sin(static_cast<double>(f) * theta);
    const auto sin_col = base.col(static_cast<Eigen::Index>(2 * f - 1));
    const auto cos_col = base.col(static_cast<Eigen::Index>(2 * f));
    // sin(a - f theta) and cos(a - f theta).
    if (k % 2 == 1) {
      psi.col(static_cast<Eigen::Index>(k)) = c * sin_col - s * cos_col;
    } else {
      psi.col(static_cast<Eigen::Index>(k)) = c * cos_col + s * sin_col;
    }
  }
  return psi;
}

RealMatrix brownian_motion_cov(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  RealMatrix k(n, n);
  const double dd = static_cast<double>(d);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) k(a, b) = static_cast<double>(std::min(a, b) + 1) / dd / dd;
  }
  return k;
}

RealMatrix brownian_bridge_cov(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  RealMatrix k(n, n);
  const double dd = static_cast<double>(d);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double x = static_cast<double>(a + 1) / dd;
      const double y = static_cast<double>(b + 1) / dd;
      k(a, b) = (std::min(x, y) - x * y) / dd;
    }
  }
  return k;
}

RealMatrix matern_cov(std::size_t d, double nu, double length_scale, double variance) {
  const auto n = static_cast<Eigen::Index>(d);
  const double dd = static_cast<double>(d);
  const double norm = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  RealMatrix k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double r = std::abs(static_cast<double>(a - b)) / dd;
      double v = variance;
      if (r > 0.0) {
        const double z = std::sqrt(2.0 * nu) * r / length_scale;
        v = variance * norm * std::pow(z, nu) * std::cyl_bessel_k(nu, z);
      }
      k(a, b) = v / dd;
    }
  }
  return k;
}

Flow template_flow(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.template_kind == TemplateKind::kExplicit) return *cfg.explicit_template;
  const Grid grid = uniform_grid(cfg.n_times);
  RealMatrix a, b;
  if (cfg.template_kind == TemplateKind::kBmBbGeodesic) {
    a = brownian_motion_cov(cfg.dim);
    b = brownian_bridge_cov(cfg.dim);
  } else {
    a = matern_cov(cfg.dim, cfg.matern.nu1, cfg.matern.length_scale, cfg.matern.variance);
    b = matern_cov(cfg.dim, cfg.matern.nu2, cfg.matern.length_scale, cfg.matern.variance);
  }
  std::vector<RealMatrix> mats(grid->size());
  if (a == b) {
    for (auto& m : mats) m = a;
  } else {
    for (std::size_t j = 0; j < grid->size(); ++j) mats[j] = geodesic<double>(a, b, (*grid)[j]);
  }
  return Flow(grid, std::move(mats));
}

std::vector<double> smooth_gaussian_curve(std::span<const double> grid, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double coef[3][2];
  for (auto& c : coef) {
    c[0] = normal(rng);
    c[1] = normal(rng);
  }
  std::vector<double> out(grid.size());
  const double scale = sigma / std::sqrt(3.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double z = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double a = 2.0 * M_PI * (j + 1) * grid[i];
      z += coef[j][0] * std::cos(a) + coef[j][1] * std::sin(a);
    }
    out[i] = scale * z;
  }
  return out;
}

std::vector<RealMatrix> sample_perturbation(const SimConfig& cfg, std::span<const double> grid, std::mt19937_64& rng) {
  const std::size_t k = cfg.harmonics();
  const std::size_t m = grid.size();
  std::vector<RealMatrix> out(m);
  if (cfg.law.degenerate) {
    const RealMatrix psi = harmonic_basis(cfg.dim, k);
    const RealMatrix p = psi * psi.transpose();
    for (auto& t : out) t = p;
    return out;
  }
  std::chi_squared_distribution<double> chi2(cfg.nu);
  const double c = chi2(rng) / cfg.nu;
  const double sw = cfg.law.sigma_w;
  std::vector<std::vector<double>> w(k);
  for (auto& curve : w) {
    curve = smooth_gaussian_curve(grid, sw, rng);
    for (double& v : curve) v = std::exp(v - 0.5 * sw * sw);
  }
  std::vector<double> theta = smooth_gaussian_curve(grid, cfg.law.sigma_theta, rng);
  for (double& v : theta) v = 2.0 * M_PI * logistic(v);

  for (std::size_t j = 0; j < m; ++j) {
    const RealMatrix psi = shifted_harmonics(cfg.dim, k, theta[j]);
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(k));
    for (std::size_t q = 0; q < k; ++q) lambda(static_cast<Eigen::Index>(q)) = c * w[q][j];
    out[j] = weighted_projector(psi, lambda);
  }
  return out;
}

std::mt19937_64 flow_stream(std::uint64_t seed, std::size_t i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
  return std::mt19937_64(seq);
}

FlowSet sample_flows(const SimConfig& cfg) {
  const Flow tmpl = template_flow(cfg);
  const std::size_t n = cfg.n_flows;
  std::vector<std::vector<RealMatrix>> flows(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    std::mt19937_64 rng = flow_stream(cfg.seed, static_cast<std::size_t>(i));
    const std::vector<RealMatrix> t = sample_perturbation(cfg, tmpl.grid(), rng);
    std::vector<RealMatrix> mats(tmpl.size());
    for (std::size_t j = 0; j < tmpl.size(); ++j) {
      mats[j] = cfg.law.degenerate && cfg.harmonics() == cfg.dim ? tmpl[j] : congruence(t[j], tmpl[j]);
    }
    flows[i] = std::move(mats);
  }
  return FlowSet(tmpl.grid_ptr(), std::move(flows));
}

std::pair<std::vector<double>, std::vector<double>> bimodal_curves(std::span<const double> grid, std::uint64_t seed) {
  std::mt19937_64 rng = flow_stream(seed ^ kCurveStream, 0);
  std::vector<double> g1 = smooth_gaussian_curve(grid, 1.5, rng);
  std::vector<double> g2 = smooth_gaussian_curve(grid, 1.5, rng);
  for (double& v : g1) v = logistic(v);
  for (double& v : g2) v = logistic(v);
  return {std::move(g1), std::move(g2)};
}

BimodalDataset bimodal_dataset(const SimConfig& cfg) {
  const Flow tmpl = template_flow(cfg);
  const std::size_t n = cfg.n_flows;
  const std::size_t k = cfg.harmonics();
  const auto [g1, g2] = bimodal_curves(tmpl.grid(), cfg.seed);

  BimodalDataset out;
  out.labels.resize(n);
  out.w_curves.resize(n);
  std::vector<std::vector<RealMatrix>> flows(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    std::mt19937_64 rng = flow_stream(cfg.seed, static_cast<std::size_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(cfg.nu);
    const int label = unit(rng) < 0.5 ? 0 : 1;
    double a1 = unit(rng);
    double a2 = unit(rng);
    if (label == 0) {
      a2 -= 1.0;
    } else {
      a1 -= 1.0;
    }
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(k));
    for (std::size_t q = 0; q < k; ++q) {
      const double weight = q == 0 ? 1.0 : 1.0 / static_cast<double>(q);
      lambda(static_cast<Eigen::Index>(q)) = weight * chi2(rng) / cfg.nu;
    }
    const double theta = 2.0 * M_PI * unit(rng);
    const RealMatrix base = weighted_projector(shifted_harmonics(cfg.dim, k, theta), lambda);
    std::vector<double> w(tmpl.size());
    std::vector<RealMatrix> mats(tmpl.size());
    for (std::size_t j = 0; j < tmpl.size(); ++j) {
      w[j] = 1.0 + a1 * g1[j] + a2 * g2[j];
      mats[j] = congruence(RealMatrix(w[j] * base), tmpl[j]);
    }
    out.labels[i] = label;
    out.w_curves[i] = std::move(w);
    flows[i] = std::move(mats);
  }
  out.flows = FlowSet(tmpl.grid_ptr(), std::move(flows));
  return out;
}

}  // namespace bwflow
