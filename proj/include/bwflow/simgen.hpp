#pragma once

// Random flows as smooth congruence perturbations F_i(t) = T_i(t) M(t) T_i(t)
// of a template flow M.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "bwflow/flow.hpp"

namespace bwflow {

enum class TemplateKind { kBmBbGeodesic, kMaternPair, kExplicit };

TemplateKind parse_template_kind(std::string_view name);
std::string_view template_kind_name(TemplateKind kind);

struct MaternParams {
  double nu1 = 0.25;
  double nu2 = 2.5;
  double length_scale = 1.0;
  double variance = 1.0;
};

/// Laws of the eigenvalue curves W_k(t) and of the phase curve theta(t).
struct PerturbationLaw {
  bool degenerate = false;  // W == 1, theta == 0, c == nu
  double sigma_w = 0.3;     // W_k = exp(Z_k - sigma_w^2 / 2)
  double sigma_theta = 1.0; // theta = 2 pi logistic(Z_theta)
};

struct SimConfig {
  std::size_t dim = 10;
  std::size_t n_times = 21;
  std::size_t n_flows = 20;
  double nu = 20.0;
  std::size_t truncation = 50;
  std::uint64_t seed = 0;
  TemplateKind template_kind = TemplateKind::kBmBbGeodesic;
  MaternParams matern;
  std::optional<Flow> explicit_template;
  PerturbationLaw law;

  /// Throws Config on invalid fields.
  void validate() const;
  std::size_t harmonics() const { return std::min(truncation, dim); }
};

/// Orthonormal real Fourier vectors on x_j = j / d, one per column: index k
/// has frequency ceil(k / 2), sine for odd k, cosine for even k, and the
/// alternating Nyquist vector in the last column when d is even.
RealMatrix harmonic_basis(std::size_t d, std::size_t count);

/// Columns psi_k(. - theta / 2 pi) by rotation within each sine/cosine pair.
RealMatrix shifted_harmonics(std::size_t d, std::size_t count, double theta);

/// Discretized min(x, y) / d and (min(x, y) - x y) / d on x_j = j / d.
RealMatrix brownian_motion_cov(std::size_t d);
RealMatrix brownian_bridge_cov(std::size_t d);

/// Matérn covariance on x_j = j / d, scaled by 1 / d.
RealMatrix matern_cov(std::size_t d, double nu, double length_scale, double variance);

Flow template_flow(const SimConfig& cfg);

/// Smooth random curve (sigma / sqrt 3) sum_{j<=3} (A_j cos 2 pi j t + B_j sin 2 pi j t).
std::vector<double> smooth_gaussian_curve(std::span<const double> grid, double sigma, std::mt19937_64& rng);

/// T(t) at every grid point.
std::vector<RealMatrix> sample_perturbation(const SimConfig& cfg, std::span<const double> grid, std::mt19937_64& rng);

/// Flow i draws from the stream seeded by (seed, i).
std::mt19937_64 flow_stream(std::uint64_t seed, std::size_t i);

FlowSet sample_flows(const SimConfig& cfg);

struct BimodalDataset {
  FlowSet flows;
  std::vector<int> labels;
  std::vector<std::vector<double>> w_curves;  // W_i on the grid
};

/// T_i(t) = W_i(t) sum_k w_k (c_k / nu) psi_k psi_k^T with w_0 = 1, w_k = 1 / k,
/// and W_i = 1 + a_1 g_1 + a_2 g_2 drawn from the two-rectangle mixture.
BimodalDataset bimodal_dataset(const SimConfig& cfg);

/// The fixed curves g_1, g_2 with values in (0, 1).
std::pair<std::vector<double>, std::vector<double>> bimodal_curves(std::span<const double> grid, std::uint64_t seed);

}  // namespace bwflow
