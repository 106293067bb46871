#include "bwflow/bwflow.h"

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <new>
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

using namespace bwflow;
using nlohmann::json;

struct bwf_flowset {
  AnyFlowSet set;
};

struct bwf_mean_trace {
  std::vector<ConvergenceTrace> traces;
};

struct bwf_pca_model {
  PcaModel<double> model;
  std::size_t n_flows = 0;
};

struct bwf_kmeans_result {
  KMeansResult<double> result;
  Grid grid;
};

namespace {

thread_local std::string g_last_error;
thread_local std::size_t g_last_violations = 0;
const int g_default_threads = omp_get_max_threads();

bwf_status fail(bwf_status status, std::string msg) {
  g_last_error = std::move(msg);
  return status;
}

template <typename F>
bwf_status guard(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const Error& e) {
    return fail(static_cast<bwf_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(BWF_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(BWF_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BWF_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (!p) raise(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

const FlowSet& real_set(const bwf_flowset* s, const char* what) {
  need(s, what);
  if (!std::holds_alternative<FlowSet>(s->set)) raise(ErrorCode::kInvalidArgument, std::string(what) + " must be real");
  return std::get<FlowSet>(s->set);
}

template <typename T>
T* copy_out(const std::vector<T>& v) {
  T* p = static_cast<T*>(std::malloc(std::max<std::size_t>(1, v.size()) * sizeof(T)));
  if (!p) throw std::bad_alloc();
  if (!v.empty()) std::memcpy(p, v.data(), v.size() * sizeof(T));
  return p;
}

template <Scalar S>
Matrix<S> matrix_from(const double* p, Eigen::Index d) {
  Matrix<S> m(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if constexpr (std::is_same_v<S, double>) {
        m(r, c) = *p++;
      } else {
        m(r, c) = Complex(p[0], p[1]);
        p += 2;
      }
    }
  }
  return m;
}

template <Scalar S>
double* matrix_to(const Matrix<S>& m, double* p) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if constexpr (std::is_same_v<S, double>) {
        *p++ = m(r, c);
      } else {
        *p++ = m(r, c).real();
        *p++ = m(r, c).imag();
      }
    }
  }
  return p;
}

template <Scalar S>
BasicFlowSet<S> set_from(std::size_t n, std::size_t m, std::size_t d, const double* grid, const double* data) {
  Grid g = make_grid(std::vector<double>(grid, grid + m));
  const std::size_t stride = d * d * (std::is_same_v<S, double> ? 1 : 2);
  std::vector<std::vector<Matrix<S>>> flows(n, std::vector<Matrix<S>>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) flows[i][j] = matrix_from<S>(data + (i * m + j) * stride, static_cast<Eigen::Index>(d));
  }
  return BasicFlowSet<S>(std::move(g), std::move(flows));
}

template <Scalar S>
bwf_flowset* wrap(BasicFlowSet<S> set) {
  return new bwf_flowset{AnyFlowSet(std::move(set))};
}

template <Scalar S>
bwf_flowset* wrap(const BasicFlow<S>& flow) {
  return wrap(BasicFlowSet<S>(std::vector<BasicFlow<S>>{flow}));
}

GdConfig<double> gd_from(int max_iter, double tol) {
  GdConfig<double> g;
  g.max_iter = max_iter;
  g.tol = tol;
  return g;
}

template <Scalar S>
MeanFlowConfig<S> mean_config(const bwf_mean_options& o) {
  if (o.max_iter < 1 || !(o.tol > 0.0)) raise(ErrorCode::kInvalidArgument, "max_iter and tol must be positive");
  MeanFlowConfig<S> c;
  c.algorithm = o.algorithm == BWF_MEAN_SGD ? MeanAlgorithm::kSgd : MeanAlgorithm::kGd;
  c.gd.max_iter = o.max_iter;
  c.gd.tol = o.tol;
  c.warm_start = o.warm_start != 0;
  c.sgd.steps = o.sgd_steps;
  c.sgd.step_a = o.sgd_a;
  c.sgd.step_b = o.sgd_b;
  c.sgd.seed = o.seed;
  c.sgd.resample = o.resample == BWF_RESAMPLE_REPLACEMENT ? ResampleKind::kWithReplacement : ResampleKind::kReshuffle;
  return c;
}

KernelKind kernel_from(int k) {
  switch (k) {
    case BWF_KERNEL_UNIFORM: return KernelKind::kUniform;
    case BWF_KERNEL_EPANECHNIKOV: return KernelKind::kEpanechnikov;
    case BWF_KERNEL_GAUSSIAN: return KernelKind::kGaussianTruncated;
    default: raise(ErrorCode::kInvalidArgument, "unknown kernel " + std::to_string(k));
  }
}

ScatterObs<double> obs_from(std::size_t n, std::size_t d, const std::int64_t* ids, const double* times, const double* mats) {
  need(ids, "flow_ids");
  need(times, "times");
  need(mats, "mats");
  if (n == 0 || d == 0) raise(ErrorCode::kInvalidArgument, "no observations");
  ScatterObs<double> obs;
  for (std::size_t i = 0; i < n; ++i) {
    obs.flow_ids.push_back(ids[i]);
    obs.times.push_back(times[i]);
    obs.mats.push_back(matrix_from<double>(mats + i * d * d, static_cast<Eigen::Index>(d)));
  }
  return obs;
}

std::vector<PreprocessStep> steps_from(const bwf_spectral_options& o) {
  std::vector<PreprocessStep> steps;
  if (o.difference) steps.push_back({PreprocessKind::kDifference, 1});
  if (o.ma_width > 1) steps.push_back({PreprocessKind::kMovingAverage, o.ma_width});
  if (o.center) steps.push_back({PreprocessKind::kCenter, 1});
  return steps;
}

ComplexFlow spectral_of(const SeriesPanel& raw, const bwf_spectral_options& o) {
  const std::vector<PreprocessStep> steps = steps_from(o);
  const SeriesPanel panel = preprocess(raw, steps);
  SpectralConfig cfg;
  cfg.max_lag = o.max_lag;
  cfg.window = o.window == BWF_WINDOW_RECT ? LagWindow::kRectangular : LagWindow::kBartlett;
  cfg.project = o.project != 0;
  const std::size_t n = o.n_freqs ? o.n_freqs : 4 * o.max_lag + 1;
  return spectral_density_flow(panel, cfg, uniform_grid(n)).flow;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

struct SimRequest {
  SimConfig cfg;
  bool bimodal = false;
};

SimRequest sim_from_json(const char* text) {
  need(text, "config");
  const std::string src(text);
  json j;
  try {
    j = json::parse(src);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::kConfig, "config line " + std::to_string(line_of(src, e.byte)) + ": " + e.what());
  }
  if (!j.is_object()) raise(ErrorCode::kConfig, "config must be a JSON object");
  static const char* known[] = {"dim", "n_times", "n_flows", "nu", "truncation", "seed", "template",
                                "template_path", "matern", "law", "dataset"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) raise(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
  SimRequest req;
  SimConfig& c = req.cfg;
  c.dim = j.value("dim", c.dim);
  c.n_times = j.value("n_times", c.n_times);
  c.n_flows = j.value("n_flows", c.n_flows);
  c.nu = j.value("nu", c.nu);
  c.truncation = j.value("truncation", c.truncation);
  c.seed = j.value("seed", c.seed);
  c.template_kind = parse_template_kind(j.value("template", std::string("bm_bb_geodesic")));
  if (j.contains("matern")) {
    const json& m = j.at("matern");
    c.matern.nu1 = m.value("nu1", c.matern.nu1);
    c.matern.nu2 = m.value("nu2", c.matern.nu2);
    c.matern.length_scale = m.value("length_scale", c.matern.length_scale);
    c.matern.variance = m.value("variance", c.matern.variance);
  }
  if (j.contains("law")) {
    const json& l = j.at("law");
    c.law.degenerate = l.value("degenerate", c.law.degenerate);
    c.law.sigma_w = l.value("sigma_w", c.law.sigma_w);
    c.law.sigma_theta = l.value("sigma_theta", c.law.sigma_theta);
  }
  const std::string dataset = j.value("dataset", std::string("standard"));
  if (dataset == "bimodal") {
    req.bimodal = true;
  } else if (dataset != "standard") {
    raise(ErrorCode::kConfig, "dataset must be 'standard' or 'bimodal'");
  }
  if (c.template_kind == TemplateKind::kExplicit) {
    if (!j.contains("template_path")) raise(ErrorCode::kConfig, "explicit template needs template_path");
    const AnyFlowSet t = read_bwf1(j.at("template_path").get<std::string>());
    if (!std::holds_alternative<FlowSet>(t)) raise(ErrorCode::kConfig, "explicit template must be real");
    const FlowSet& fs = std::get<FlowSet>(t);
    c.explicit_template = fs[0];
    c.n_times = fs.n_times();
    if (!j.contains("dim")) c.dim = static_cast<std::size_t>(fs.dim());
  }
  c.validate();
  return req;
}

}  // namespace

extern "C" {

const char* bwf_last_error(void) { return g_last_error.c_str(); }

const char* bwf_status_name(bwf_status status) {
  return error_code_name(static_cast<ErrorCode>(status)).data();
}

const char* bwf_version(void) { return "0.1.0"; }

void bwf_set_num_threads(int n) { omp_set_num_threads(n > 0 ? n : g_default_threads); }

void bwf_free(void* p) { std::free(p); }

bwf_status bwf_flowset_create(bwf_scalar_kind kind, size_t n_flows, size_t n_times, size_t dim, const double* grid,
                              const double* data, bwf_flowset** out) {
  return guard([&] {
    need(grid, "grid");
    need(data, "data");
    need(out, "out");
    if (n_flows == 0 || n_times == 0 || dim == 0) raise(ErrorCode::kInvalidArgument, "empty flow set");
    *out = kind == BWF_COMPLEX ? wrap(set_from<Complex>(n_flows, n_times, dim, grid, data))
                               : wrap(set_from<double>(n_flows, n_times, dim, grid, data));
    return BWF_OK;
  });
}

void bwf_flowset_free(bwf_flowset* set) { delete set; }

bwf_status bwf_flowset_info(const bwf_flowset* set, bwf_scalar_kind* kind, size_t* n_flows, size_t* n_times,
                            size_t* dim) {
  return guard([&] {
    need(set, "set");
    std::visit(
        [&](const auto& s) {
          if (kind) *kind = static_cast<bwf_scalar_kind>(kind_of(set->set));
          if (n_flows) *n_flows = s.size();
          if (n_times) *n_times = s.n_times();
          if (dim) *dim = static_cast<size_t>(s.dim());
        },
        set->set);
    return BWF_OK;
  });
}

bwf_status bwf_flowset_grid(const bwf_flowset* set, double* out) {
  return guard([&] {
    need(set, "set");
    need(out, "out");
    std::visit([&](const auto& s) { std::copy(s.grid().begin(), s.grid().end(), out); }, set->set);
    return BWF_OK;
  });
}

bwf_status bwf_flowset_data(const bwf_flowset* set, double* out) {
  return guard([&] {
    need(set, "set");
    need(out, "out");
    std::visit(
        [&](const auto& s) {
          double* p = out;
          for (const auto& f : s.flows()) {
            for (const auto& m : f.matrices()) p = matrix_to(m, p);
          }
        },
        set->set);
    return BWF_OK;
  });
}

bwf_status bwf_flowset_read(const char* path, int flags, bwf_flowset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    ReadOptions opts;
    opts.force_project = (flags & BWF_READ_FORCE_PROJECT) != 0;
    opts.raw = (flags & BWF_READ_RAW) != 0;
    ReadReport report;
    g_last_violations = 0;
    AnyFlowSet s = read_bwf1(path, opts, &report);
    g_last_violations = report.violations.size();
    *out = new bwf_flowset{std::move(s)};
    return BWF_OK;
  });
}

size_t bwf_last_read_violations(void) { return g_last_violations; }

bwf_status bwf_flowset_write(const bwf_flowset* set, const char* path) {
  return guard([&] {
    need(set, "set");
    need(path, "path");
    write_bwf1(path, set->set);
    return BWF_OK;
  });
}

bwf_status bwf_flowset_validate(const bwf_flowset* set, size_t* n_violations) {
  return guard([&] {
    need(set, "set");
    const FlowSetDiagnostics d = std::visit([](const auto& s) { return validate_flowset(s); }, set->set);
    if (n_violations) *n_violations = d.violations.size();
    return BWF_OK;
  });
}

bwf_status bwf_flowset_subset(const bwf_flowset* set, const size_t* indices, size_t count, bwf_flowset** out) {
  return guard([&] {
    need(set, "set");
    need(indices, "indices");
    need(out, "out");
    if (count == 0) raise(ErrorCode::kInvalidArgument, "empty subset");
    std::visit(
        [&](const auto& s) {
          using Flow_ = std::decay_t<decltype(s[0])>;
          std::vector<Flow_> flows;
          for (size_t i = 0; i < count; ++i) {
            if (indices[i] >= s.size()) raise(ErrorCode::kInvalidArgument, "subset index out of range");
            flows.push_back(s[indices[i]]);
          }
          *out = new bwf_flowset{AnyFlowSet(std::decay_t<decltype(s)>(flows))};
        },
        set->set);
    return BWF_OK;
  });
}

bwf_status bwf_flowset_concat(const bwf_flowset* a, const bwf_flowset* b, bwf_flowset** out) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    if (a->set.index() != b->set.index()) raise(ErrorCode::kInvalidArgument, "scalar kinds differ");
    std::visit(
        [&](const auto& sa) {
          using Set = std::decay_t<decltype(sa)>;
          const Set& sb = std::get<Set>(b->set);
          if (sa.dim() != sb.dim()) raise(ErrorCode::kDimMismatch, "dimensions differ");
          auto flows = sa.flows();
          flows.insert(flows.end(), sb.flows().begin(), sb.flows().end());
          *out = new bwf_flowset{AnyFlowSet(Set(flows))};
        },
        a->set);
    return BWF_OK;
  });
}

bwf_status bwf_bw_distance(bwf_scalar_kind kind, size_t dim, const double* f, const double* g, double* out) {
  return guard([&] {
    need(f, "f");
    need(g, "g");
    need(out, "out");
    const auto d = static_cast<Eigen::Index>(dim);
    if (kind == BWF_COMPLEX) {
      *out = bw_distance<Complex>(matrix_from<Complex>(f, d), matrix_from<Complex>(g, d));
    } else {
      *out = bw_distance<double>(matrix_from<double>(f, d), matrix_from<double>(g, d));
    }
    return BWF_OK;
  });
}

bwf_status bwf_flow_distance(const bwf_flowset* a, size_t i, const bwf_flowset* b, size_t j, double* out) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    if (a->set.index() != b->set.index()) raise(ErrorCode::kInvalidArgument, "scalar kinds differ");
    std::visit(
        [&](const auto& sa) {
          using Set = std::decay_t<decltype(sa)>;
          const Set& sb = std::get<Set>(b->set);
          if (i >= sa.size() || j >= sb.size()) raise(ErrorCode::kInvalidArgument, "flow index out of range");
          *out = flow_distance(sa[i], sb[j]);
        },
        a->set);
    return BWF_OK;
  });
}

bwf_status bwf_pairwise_distances(const bwf_flowset* set, double* out) {
  return guard([&] {
    need(set, "set");
    need(out, "out");
    const Eigen::MatrixXd d = std::visit([](const auto& s) { return pairwise_distances(s); }, set->set);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, d.rows(), d.cols()) = d;
    return BWF_OK;
  });
}

void bwf_mean_options_default(bwf_mean_options* o) {
  if (!o) return;
  o->algorithm = BWF_MEAN_GD;
  o->max_iter = 200;
  o->tol = 1e-8;
  o->warm_start = 1;
  o->sgd_steps = 5000;
  o->sgd_a = 2.0;
  o->sgd_b = 2.0;
  o->seed = 0;
  o->resample = BWF_RESAMPLE_RESHUFFLE;
}

bwf_status bwf_frechet_mean(const bwf_flowset* set, const bwf_mean_options* opts, bwf_flowset** mean,
                            bwf_mean_trace** trace) {
  return guard([&] {
    need(set, "set");
    need(mean, "mean");
    bwf_mean_options o;
    bwf_mean_options_default(&o);
    if (opts) o = *opts;
    bool converged = true;
    std::visit(
        [&](const auto& s) {
          using S = typename std::decay_t<decltype(s[0].matrices()[0])>::Scalar;
          MeanFlowResult<S> r = frechet_mean_flow<S>(s, mean_config<S>(o));
          converged = o.algorithm == BWF_MEAN_SGD || r.converged();
          *mean = wrap(r.mean);
          if (trace) *trace = new bwf_mean_trace{std::move(r.traces)};
        },
        set->set);
    if (!converged) return fail(BWF_NON_CONVERGENCE, "some grid points did not reach the fixed-point tolerance");
    return BWF_OK;
  });
}

size_t bwf_mean_trace_points(const bwf_mean_trace* trace) { return trace ? trace->traces.size() : 0; }

bwf_status bwf_mean_trace_point(const bwf_mean_trace* trace, size_t j, size_t* length, int* converged) {
  return guard([&] {
    need(trace, "trace");
    if (j >= trace->traces.size()) raise(ErrorCode::kInvalidArgument, "grid index out of range");
    if (length) *length = trace->traces[j].records.size();
    if (converged) *converged = trace->traces[j].converged;
    return BWF_OK;
  });
}

bwf_status bwf_mean_trace_record(const bwf_mean_trace* trace, size_t j, size_t r, int* iteration, double* functional,
                                 double* residual) {
  return guard([&] {
    need(trace, "trace");
    if (j >= trace->traces.size() || r >= trace->traces[j].records.size()) {
      raise(ErrorCode::kInvalidArgument, "trace index out of range");
    }
    const IterationRecord& rec = trace->traces[j].records[r];
    if (iteration) *iteration = rec.iteration;
    if (functional) *functional = rec.functional;
    if (residual) *residual = rec.residual;
    return BWF_OK;
  });
}

void bwf_mean_trace_free(bwf_mean_trace* trace) { delete trace; }

bwf_status bwf_pca_fit(const bwf_flowset* set, const bwf_flowset* mean, size_t k, bwf_pca_model** out) {
  return guard([&] {
    const FlowSet& s = real_set(set, "set");
    need(out, "out");
    Flow m;
    if (mean) {
      const FlowSet& ms = real_set(mean, "mean");
      if (!same_grid(ms.grid_ptr(), s.grid_ptr())) raise(ErrorCode::kGridMismatch, "mean grid differs from the set grid");
      m = Flow(s.grid_ptr(), ms[0].matrices());
    } else {
      m = frechet_mean_flow<double>(s).mean;
    }
    const auto fields = log_field<double>(s, m);
    *out = new bwf_pca_model{fit_pca<double>(fields, m, k), s.size()};
    return BWF_OK;
  });
}

void bwf_pca_free(bwf_pca_model* model) { delete model; }

bwf_status bwf_pca_info(const bwf_pca_model* model, size_t* k, size_t* n_components, size_t* n_flows,
                        double* total_variance, double* mean_field_norm) {
  return guard([&] {
    need(model, "model");
    if (k) *k = static_cast<size_t>(model->model.eigenvalues.size());
    if (n_components) *n_components = model->model.n_components();
    if (n_flows) *n_flows = model->n_flows;
    if (total_variance) *total_variance = model->model.total_variance;
    if (mean_field_norm) *mean_field_norm = model->model.mean_field_norm;
    return BWF_OK;
  });
}

bwf_status bwf_pca_eigenvalues(const bwf_pca_model* model, double* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    Eigen::Map<Eigen::VectorXd>(out, model->model.eigenvalues.size()) = model->model.eigenvalues;
    return BWF_OK;
  });
}

bwf_status bwf_pca_scores(const bwf_pca_model* model, double* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    const Eigen::MatrixXd& sc = model->model.scores;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, sc.rows(), sc.cols()) = sc;
    return BWF_OK;
  });
}

bwf_status bwf_pca_mean(const bwf_pca_model* model, bwf_flowset** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = wrap(model->model.mean);
    return BWF_OK;
  });
}

bwf_status bwf_pca_component(const bwf_pca_model* model, size_t c, bwf_flowset** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    if (c >= model->model.n_components()) raise(ErrorCode::kKOutOfRange, "component index out of range");
    const TangentField<double>& f = model->model.components[c];
    *out = wrap(FlowSet(f.grid, {f.mats}));
    return BWF_OK;
  });
}

bwf_status bwf_pca_lambda_max(const bwf_pca_model* model, size_t c, double* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = mode_lambda_max<double>(model->model, c);
    return BWF_OK;
  });
}

bwf_status bwf_pca_mode(const bwf_pca_model* model, size_t c, double lambda, bwf_flowset** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = wrap(mode_of_variation<double>(model->model, c, lambda));
    return BWF_OK;
  });
}

bwf_status bwf_pca_project(const bwf_pca_model* model, const bwf_flowset* set, double* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    const FlowSet& s = real_set(set, "set");
    const std::size_t nc = model->model.n_components();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Flow f(model->model.mean.grid_ptr(), s[i].matrices());
      const Eigen::VectorXd sc = project_scores<double>(f, model->model);
      for (std::size_t c = 0; c < nc; ++c) out[i * nc + c] = sc(static_cast<Eigen::Index>(c));
    }
    return BWF_OK;
  });
}

void bwf_smooth_options_default(bwf_smooth_options* o) {
  if (!o) return;
  o->mode = BWF_SMOOTH_NW;
  o->kernel = BWF_KERNEL_EPANECHNIKOV;
  o->bandwidth = 0.1;
  o->grid_size = 51;
  o->max_iter = 200;
  o->tol = 1e-8;
}

bwf_status bwf_smooth(size_t n_obs, size_t dim, const int64_t* flow_ids, const double* times, const double* mats,
                      const bwf_smooth_options* opts, bwf_flowset** out, int* converged) {
  return guard([&] {
    need(out, "out");
    bwf_smooth_options o;
    bwf_smooth_options_default(&o);
    if (opts) o = *opts;
    if (o.grid_size == 0) raise(ErrorCode::kInvalidArgument, "grid_size must be positive");
    const ScatterObs<double> obs = obs_from(n_obs, dim, flow_ids, times, mats);
    const Kernel kernel(kernel_from(o.kernel), o.bandwidth);
    const Grid grid = uniform_grid(o.grid_size);
    bool ok = true;
    if (o.mode == BWF_SMOOTH_LFR) {
      LfrResult<double> r = lfr_estimate<double>(obs, kernel, grid, gd_from(o.max_iter, o.tol));
      ok = r.converged();
      *out = wrap(r.flow);
    } else {
      *out = wrap(nw_smooth<double>(obs, kernel, grid));
    }
    if (converged) *converged = ok;
    if (!ok) return fail(BWF_NON_CONVERGENCE, "local Fréchet regression did not converge at some grid points");
    return BWF_OK;
  });
}

bwf_status bwf_bandwidth_sweep(size_t n_obs, size_t dim, const int64_t* flow_ids, const double* times,
                               const double* mats, const bwf_smooth_options* opts, const double* candidates,
                               size_t n_candidates, double* cv_errors, size_t* failures) {
  return guard([&] {
    need(candidates, "candidates");
    need(cv_errors, "cv_errors");
    bwf_smooth_options o;
    bwf_smooth_options_default(&o);
    if (opts) o = *opts;
    const ScatterObs<double> obs = obs_from(n_obs, dim, flow_ids, times, mats);
    const auto rows = bandwidth_sweep<double>(obs, kernel_from(o.kernel), std::span(candidates, n_candidates),
                                              o.mode == BWF_SMOOTH_LFR ? SmoothMode::kLfr : SmoothMode::kNw,
                                              gd_from(o.max_iter, o.tol));
    for (size_t i = 0; i < rows.size(); ++i) {
      cv_errors[i] = rows[i].cv_error;
      if (failures) failures[i] = rows[i].failures;
    }
    return BWF_OK;
  });
}

bwf_status bwf_read_observations(const char* path, size_t* n_obs, size_t* dim, int64_t** flow_ids, double** times,
                                 double** mats) {
  return guard([&] {
    need(path, "path");
    need(n_obs, "n_obs");
    need(dim, "dim");
    const ScatterTable t = scatter_from_csv(read_csv(path));
    const auto d = static_cast<std::size_t>(t.mats.front().rows());
    std::vector<double> flat;
    for (const auto& m : t.mats) {
      flat.resize(flat.size() + d * d);
      matrix_to<double>(m, flat.data() + flat.size() - d * d);
    }
    *n_obs = t.times.size();
    *dim = d;
    if (flow_ids) *flow_ids = copy_out(t.flow_ids);
    if (times) *times = copy_out(t.times);
    if (mats) *mats = copy_out(flat);
    return BWF_OK;
  });
}

void bwf_spectral_options_default(bwf_spectral_options* o) {
  if (!o) return;
  o->max_lag = 20;
  o->window = BWF_WINDOW_BARTLETT;
  o->project = 1;
  o->n_freqs = 0;
  o->difference = 0;
  o->center = 1;
  o->ma_width = 0;
}

bwf_status bwf_spectral(size_t n_time, size_t dim, const double* values, const bwf_spectral_options* opts,
                        bwf_flowset** out) {
  return guard([&] {
    need(values, "values");
    need(out, "out");
    bwf_spectral_options o;
    bwf_spectral_options_default(&o);
    if (opts) o = *opts;
    SeriesPanel p;
    p.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values, static_cast<Eigen::Index>(n_time), static_cast<Eigen::Index>(dim));
    *out = wrap(spectral_of(p, o));
    return BWF_OK;
  });
}

bwf_status bwf_spectral_csv(const char* path, const bwf_spectral_options* opts, bwf_flowset** out,
                            int64_t** series_ids) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    bwf_spectral_options o;
    bwf_spectral_options_default(&o);
    if (opts) o = *opts;
    const std::vector<SeriesPanel> panels = panels_from_csv(read_csv(path));
    std::vector<ComplexFlow> flows;
    std::vector<std::int64_t> ids;
    for (const auto& p : panels) {
      try {
        flows.push_back(spectral_of(p, o));
      } catch (const Error& e) {
        raise(e.code(), "series " + std::to_string(p.series_id) + ": " + e.what());
      }
      ids.push_back(p.series_id);
    }
    *out = wrap(ComplexFlowSet(flows));
    if (series_ids) *series_ids = copy_out(ids);
    return BWF_OK;
  });
}

bwf_status bwf_invert_sdf(const bwf_flowset* sdf, size_t flow, size_t max_lag, long h, double* out) {
  return guard([&] {
    need(sdf, "sdf");
    need(out, "out");
    if (!std::holds_alternative<ComplexFlowSet>(sdf->set)) raise(ErrorCode::kInvalidArgument, "spectral flows are complex");
    const ComplexFlowSet& s = std::get<ComplexFlowSet>(sdf->set);
    if (flow >= s.size()) raise(ErrorCode::kInvalidArgument, "flow index out of range");
    SpectralFlow f{s[flow], max_lag, LagWindow::kBartlett, true};
    matrix_to<Complex>(invert_sdf(f, h), out);
    return BWF_OK;
  });
}

bwf_status bwf_autocov(size_t n_time, size_t dim, const double* values, size_t h, double* out) {
  return guard([&] {
    need(values, "values");
    need(out, "out");
    SeriesPanel p;
    p.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values, static_cast<Eigen::Index>(n_time), static_cast<Eigen::Index>(dim));
    matrix_to<double>(autocov(p, h), out);
    return BWF_OK;
  });
}

void bwf_kmeans_options_default(bwf_kmeans_options* o) {
  if (!o) return;
  o->mode = -1;
  o->restarts = 20;
  o->max_iter = 100;
  o->seed = 0;
  o->scores = nullptr;
  o->n_score_cols = 0;
}

namespace {

KMeansConfig<double> kmeans_config(const bwf_kmeans_options* opts, std::size_t n) {
  need(opts, "options");
  KMeansConfig<double> c;
  if (opts->mode == BWF_CLUSTER_RAW) {
    c.mode = ClusterMode::kRaw;
  } else if (opts->mode == BWF_CLUSTER_SCORES) {
    c.mode = ClusterMode::kScores;
    need(opts->scores, "scores");
    if (opts->n_score_cols == 0) raise(ErrorCode::kInvalidArgument, "scores mode needs at least one score column");
    c.scores = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        opts->scores, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(opts->n_score_cols));
  } else {
    raise(ErrorCode::kInvalidArgument, "cluster mode is required (raw or scores)");
  }
  c.restarts = opts->restarts;
  c.max_iter = opts->max_iter;
  c.seed = opts->seed;
  return c;
}

}  // namespace

bwf_status bwf_kmeans(const bwf_flowset* set, size_t k, const bwf_kmeans_options* opts, bwf_kmeans_result** out) {
  return guard([&] {
    const FlowSet& s = real_set(set, "set");
    need(out, "out");
    *out = new bwf_kmeans_result{kmeans_flows<double>(s, k, kmeans_config(opts, s.size())), s.grid_ptr()};
    return BWF_OK;
  });
}

void bwf_kmeans_free(bwf_kmeans_result* result) { delete result; }

bwf_status bwf_kmeans_info(const bwf_kmeans_result* result, double* inertia, double* distortion, int* n_iter,
                           uint64_t* seed) {
  return guard([&] {
    need(result, "result");
    if (inertia) *inertia = result->result.inertia;
    if (distortion) *distortion = result->result.distortion;
    if (n_iter) *n_iter = result->result.n_iter;
    if (seed) *seed = result->result.seed;
    return BWF_OK;
  });
}

bwf_status bwf_kmeans_labels(const bwf_kmeans_result* result, int* out) {
  return guard([&] {
    need(result, "result");
    need(out, "out");
    std::copy(result->result.labels.begin(), result->result.labels.end(), out);
    return BWF_OK;
  });
}

bwf_status bwf_kmeans_inertia_trace(const bwf_kmeans_result* result, double* out, size_t* length) {
  return guard([&] {
    need(result, "result");
    const auto& t = result->result.per_iter_inertia;
    if (length) *length = t.size();
    if (out) std::copy(t.begin(), t.end(), out);
    return BWF_OK;
  });
}

bwf_status bwf_kmeans_centroids(const bwf_kmeans_result* result, bwf_flowset** out) {
  return guard([&] {
    need(result, "result");
    need(out, "out");
    if (result->result.centroids.empty()) raise(ErrorCode::kInvalidArgument, "centroid flows exist in raw mode only");
    std::vector<std::vector<RealMatrix>> mats;
    for (const auto& c : result->result.centroids) mats.push_back(c.matrices());
    *out = wrap(FlowSet(result->grid, std::move(mats)));
    return BWF_OK;
  });
}

bwf_status bwf_elbow(const bwf_flowset* set, size_t k_min, size_t k_max, const bwf_kmeans_options* opts,
                     double* inertia, double* distortion, double* second_diff) {
  return guard([&] {
    const FlowSet& s = real_set(set, "set");
    const auto rows = elbow_scores<double>(s, k_min, k_max, kmeans_config(opts, s.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
      if (inertia) inertia[i] = rows[i].inertia;
      if (distortion) distortion[i] = rows[i].distortion;
      if (second_diff) second_diff[i] = rows[i].second_difference;
    }
    return BWF_OK;
  });
}

bwf_status bwf_simulate(const char* json_config, bwf_flowset** out, int** labels) {
  return guard([&] {
    need(out, "out");
    const SimRequest req = sim_from_json(json_config);
    if (labels) *labels = nullptr;
    if (req.bimodal) {
      BimodalDataset b = bimodal_dataset(req.cfg);
      *out = wrap(std::move(b.flows));
      if (labels) *labels = copy_out(b.labels);
    } else {
      *out = wrap(sample_flows(req.cfg));
    }
    return BWF_OK;
  });
}

bwf_status bwf_simulate_template(const char* json_config, bwf_flowset** out) {
  return guard([&] {
    need(out, "out");
    *out = wrap(template_flow(sim_from_json(json_config).cfg));
    return BWF_OK;
  });
}

bwf_status bwf_ingest_sliding(const char* csv_path, size_t half_width, size_t stride, int averaging,
                              bwf_flowset** out, int64_t** subject_ids) {
  return guard([&] {
    need(csv_path, "path");
    need(out, "out");
    SlidingConfig cfg;
    cfg.half_width = half_width;
    cfg.stride = stride;
    cfg.averaging = averaging == BWF_AVERAGE_FRECHET ? RunAveraging::kFrechet : RunAveraging::kEuclidean;
    SlidingResult r = ingest_sliding(read_csv(csv_path), cfg);
    *out = wrap(std::move(r.flows));
    if (subject_ids) *subject_ids = copy_out(r.subject_ids);
    return BWF_OK;
  });
}

}  // extern "C"
