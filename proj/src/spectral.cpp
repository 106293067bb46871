#include "bwflow/spectral.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "bwflow/error.hpp"

namespace bwflow {

void SeriesPanel::validate() const {
  if (values.cols() == 0) raise(ErrorCode::kInvalidArgument, "series " + std::to_string(series_id) + " has no coordinates");
  if (values.rows() < 2) raise(ErrorCode::kInvalidArgument, "series " + std::to_string(series_id) + " needs T >= 2");
  if (!values.allFinite()) raise(ErrorCode::kNonFinite, "series " + std::to_string(series_id) + " has non-finite values");
}

SeriesPanel center(const SeriesPanel& panel) {
  SeriesPanel out = panel;
  out.values.rowwise() -= panel.values.colwise().mean();
  out.centered = true;
  return out;
}

SeriesPanel preprocess(const SeriesPanel& panel, std::span<const PreprocessStep> steps) {
  SeriesPanel cur = panel;
  for (const auto& step : steps) {
    const Eigen::Index t = cur.values.rows();
    switch (step.kind) {
      case PreprocessKind::kCenter:
        cur = center(cur);
        break;
      case PreprocessKind::kDifference: {
        if (t < 3) raise(ErrorCode::kInvalidArgument, "differencing leaves fewer than two time points");
        Eigen::MatrixXd diff = cur.values.bottomRows(t - 1) - cur.values.topRows(t - 1);
        cur.values = std::move(diff);
        cur.centered = false;
        break;
      }
      case PreprocessKind::kMovingAverage: {
        const auto w = static_cast<Eigen::Index>(step.width);
        if (w < 1) raise(ErrorCode::kInvalidArgument, "moving-average width must be positive");
        if (t - w + 1 < 2) raise(ErrorCode::kInvalidArgument, "moving-average window longer than the series");
        Eigen::MatrixXd out(t - w + 1, cur.values.cols());
        for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = cur.values.middleRows(r, w).colwise().mean();
        cur.values = std::move(out);
        cur.centered = false;
        break;
      }
    }
  }
  return cur;
}

RealMatrix autocov(const SeriesPanel& panel, std::size_t h) {
  panel.validate();
  const auto t = static_cast<std::size_t>(panel.values.rows());
  if (h >= t) raise(ErrorCode::kLagTooLarge, "lag " + std::to_string(h) + " needs more than " + std::to_string(t) + " time points");
  const Eigen::MatrixXd x = panel.centered ? panel.values : center(panel).values;
  const auto n = static_cast<Eigen::Index>(t - h);
  const auto lag = static_cast<Eigen::Index>(h);
  return x.middleRows(lag, n).transpose() * x.topRows(n) / static_cast<double>(n);
}

LagWindow parse_lag_window(std::string_view name) {
  if (name == "bartlett") return LagWindow::kBartlett;
  if (name == "rect" || name == "rectangular") return LagWindow::kRectangular;
  raise(ErrorCode::kInvalidArgument, "unknown lag window '" + std::string(name) + "'");
}

std::string_view lag_window_name(LagWindow w) {
  return w == LagWindow::kBartlett ? "bartlett" : "rect";
}

double lag_weight(LagWindow window, std::ptrdiff_t h, std::size_t max_lag) {
  const auto a = static_cast<std::size_t>(h < 0 ? -h : h);
  if (a > max_lag) return 0.0;
  if (window == LagWindow::kRectangular) return 1.0;
  return 1.0 - static_cast<double>(a) / static_cast<double>(max_lag + 1);
}

ComplexMatrix spectral_density_at(const std::vector<RealMatrix>& autocovs, LagWindow window, double omega) {
  if (autocovs.empty()) raise(ErrorCode::kInvalidArgument, "no autocovariances");
  const std::size_t max_lag = autocovs.size() - 1;
  ComplexMatrix f = autocovs[0].cast<Complex>();
  for (std::size_t h = 1; h <= max_lag; ++h) {
    const double w = lag_weight(window, static_cast<std::ptrdiff_t>(h), max_lag);
    const Complex e = std::polar(w, -omega * static_cast<double>(h));
    f += e * autocovs[h].cast<Complex>() + std::conj(e) * autocovs[h].transpose().cast<Complex>();
  }
  return f / (2.0 * M_PI);
}

SpectralFlow spectral_density_flow(const SeriesPanel& panel, const SpectralConfig& cfg, const Grid& freq_grid) {
  panel.validate();
  if (!freq_grid || freq_grid->empty()) raise(ErrorCode::kEmptyFreqGrid, "frequency grid is empty");
  if (cfg.max_lag >= static_cast<std::size_t>(panel.values.rows())) {
    raise(ErrorCode::kLagTooLarge, "max_lag " + std::to_string(cfg.max_lag) + " needs more than " +
                                       std::to_string(panel.values.rows()) + " time points");
  }
  const SeriesPanel c = panel.centered ? panel : center(panel);
  std::vector<RealMatrix> r(cfg.max_lag + 1);
  for (std::size_t h = 0; h <= cfg.max_lag; ++h) r[h] = autocov(c, h);

  const std::vector<double>& u = *freq_grid;
  std::vector<ComplexMatrix> mats(u.size());
  const auto count = static_cast<std::ptrdiff_t>(u.size());
#pragma omp parallel for
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    ComplexMatrix f = hermitian_part<Complex>(spectral_density_at(r, cfg.window, M_PI * u[j]));
    mats[j] = cfg.project ? project_psd<Complex>(f) : f;
  }
  return {ComplexFlow(freq_grid, std::move(mats)), cfg.max_lag, cfg.window, cfg.project};
}

ComplexMatrix invert_sdf(const SpectralFlow& sdf, std::ptrdiff_t h) {
  const auto u = sdf.flow.grid();
  if (u.size() < 2 * sdf.max_lag + 1) {
    raise(ErrorCode::kGridTooCoarse, "frequency grid of " + std::to_string(u.size()) + " points aliases lags up to " +
                                         std::to_string(sdf.max_lag));
  }
  const std::vector<double> w = trapezoid_weights(u);
  const double span = u.back() - u.front();
  const Eigen::Index d = sdf.flow.dim();
  ComplexMatrix out = ComplexMatrix::Zero(d, d);
  for (std::size_t j = 0; j < u.size(); ++j) {
    const ComplexMatrix g = std::polar(1.0, M_PI * u[j] * static_cast<double>(h)) * sdf.flow[j];
    out += w[j] * g.real().cast<Complex>();
  }
  return out * (2.0 * M_PI * span);
}

}  // namespace bwflow
