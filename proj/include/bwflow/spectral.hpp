#pragma once

// Lag autocovariances and spectral density flows of a discretized functional
// time series. Frequencies omega in [0, pi] are stored on the grid u = omega / pi.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "bwflow/flow.hpp"

namespace bwflow {

/// One multivariate series: rows are time points, columns coordinates.
struct SeriesPanel {
  std::int64_t series_id = 0;
  Eigen::MatrixXd values;
  bool centered = false;

  /// Throws InvalidArgument (T < 2, empty) or NonFinite.
  void validate() const;
};

enum class PreprocessKind { kDifference, kCenter, kMovingAverage };

struct PreprocessStep {
  PreprocessKind kind = PreprocessKind::kCenter;
  std::size_t width = 1;  // moving-average window length
};

/// Applies the steps in order; differencing and smoothing shorten the series.
SeriesPanel preprocess(const SeriesPanel& panel, std::span<const PreprocessStep> steps);

SeriesPanel center(const SeriesPanel& panel);

/// (1/(T-h)) sum_t X_{t+h} X_t^T after centering; LagTooLarge unless h <= T-1.
RealMatrix autocov(const SeriesPanel& panel, std::size_t h);

enum class LagWindow { kBartlett, kRectangular };

LagWindow parse_lag_window(std::string_view name);
std::string_view lag_window_name(LagWindow w);

/// w(h) for |h| <= max_lag.
double lag_weight(LagWindow window, std::ptrdiff_t h, std::size_t max_lag);

struct SpectralConfig {
  std::size_t max_lag = 20;
  LagWindow window = LagWindow::kBartlett;
  bool project = true;  // Hermitize and PSD-project each matrix
};

struct SpectralFlow {
  ComplexFlow flow;  // grid u in [0, 1], omega = pi * u
  std::size_t max_lag = 0;
  LagWindow window = LagWindow::kBartlett;
  bool projected = true;
};

/// (1/2pi) sum_{|h| <= L} w(h) e^{-i omega h} R_h with R_{-h} = R_h^T.
ComplexMatrix spectral_density_at(const std::vector<RealMatrix>& autocovs, LagWindow window, double omega);

SpectralFlow spectral_density_flow(const SeriesPanel& panel, const SpectralConfig& cfg, const Grid& freq_grid);

/// Trapezoidal quadrature of e^{i omega h} F_omega over [-pi, pi], using
/// F_{-omega} = conj(F_omega). GridTooCoarse when the grid has fewer than
/// 2 max_lag + 1 points.
ComplexMatrix invert_sdf(const SpectralFlow& sdf, std::ptrdiff_t h);

}  // namespace bwflow
