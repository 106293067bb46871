// bwflow command-line front end. Talks to the library only through the C API.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bwflow/bwflow.h"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNonConvergence = 3;

struct Failure : std::runtime_error {
  bwf_status status;
  Failure(bwf_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

void check(bwf_status s, const std::string& what) {
  if (s != BWF_OK) throw Failure(s, what + ": " + bwf_status_name(s) + ": " + bwf_last_error());
}

struct SetFree {
  void operator()(bwf_flowset* s) const { bwf_flowset_free(s); }
};
struct PcaFree {
  void operator()(bwf_pca_model* m) const { bwf_pca_free(m); }
};
struct KmFree {
  void operator()(bwf_kmeans_result* r) const { bwf_kmeans_free(r); }
};
struct TraceFree {
  void operator()(bwf_mean_trace* t) const { bwf_mean_trace_free(t); }
};
struct MemFree {
  void operator()(void* p) const { bwf_free(p); }
};
using SetPtr = std::unique_ptr<bwf_flowset, SetFree>;

struct SetInfo {
  bwf_scalar_kind kind = BWF_REAL;
  size_t n = 0, m = 0, d = 0;
};

SetInfo info(const bwf_flowset* s) {
  SetInfo i;
  check(bwf_flowset_info(s, &i.kind, &i.n, &i.m, &i.d), "flow set info");
  return i;
}

std::vector<double> grid_of(const bwf_flowset* s) {
  std::vector<double> g(info(s).m);
  check(bwf_flowset_grid(s, g.data()), "flow set grid");
  return g;
}

SetPtr read_set(const std::string& path, int flags, bwcli::Manifest& man) {
  bwf_flowset* s = nullptr;
  check(bwf_flowset_read(path.c_str(), flags, &s), "reading " + path);
  if (size_t v = bwf_last_read_violations()) {
    std::cerr << "warning: " << v << " matrices in " << path << " were projected onto the PSD cone\n";
    man.note("projected_on_read", v);
  }
  man.add_input(path);
  return SetPtr(s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text, bwcli::Manifest& man) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Failure(BWF_IO, "cannot write " + path.string());
  f << text;
  man.add_output(path);
}

void write_set(const fs::path& path, const bwf_flowset* s, json annotation, bwcli::Manifest& man) {
  check(bwf_flowset_write(s, path.string().c_str()), "writing " + path.string());
  man.add_output(path);
  const SetInfo i = info(s);
  annotation["format"] = "BWF1";
  annotation["scalar_kind"] = i.kind == BWF_COMPLEX ? "complex" : "real";
  annotation["n_flows"] = i.n;
  annotation["n_times"] = i.m;
  annotation["dim"] = i.d;
  write_text(path.string() + ".json", annotation.dump(2) + "\n", man);
}

fs::path manifest_path(const std::string& explicit_path, const fs::path& primary) {
  return explicit_path.empty() ? fs::path(primary.string() + ".manifest.json") : fs::path(explicit_path);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure(BWF_IO, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config, out, labels, template_out, manifest;
};

int run_simulate(const SimulateArgs& a) {
  bwcli::Manifest man("simulate");
  const std::string text = slurp(a.config);
  man.add_input(a.config);
  bwf_flowset* raw = nullptr;
  int* labels_raw = nullptr;
  check(bwf_simulate(text.c_str(), &raw, &labels_raw), "simulate");
  SetPtr set(raw);
  std::unique_ptr<int, MemFree> labels(labels_raw);
  const json cfg = json::parse(text);
  man.config() = cfg;
  man.set_seed(cfg.value("seed", std::uint64_t{0}));

  write_set(a.out, set.get(), {{"role", "flows"}, {"dataset", cfg.value("dataset", std::string("standard"))}}, man);
  if (labels) {
    const std::string path = a.labels.empty() ? a.out + ".labels.csv" : a.labels;
    std::string csv = "flow,label\n";
    const size_t n = info(set.get()).n;
    size_t ones = 0;
    for (size_t i = 0; i < n; ++i) {
      csv += std::to_string(i) + "," + std::to_string(labels.get()[i]) + "\n";
      ones += labels.get()[i] == 1;
    }
    write_text(path, csv, man);
    std::cout << "labels: " << n - ones << " in class 0, " << ones << " in class 1\n";
  }
  if (!a.template_out.empty()) {
    bwf_flowset* t = nullptr;
    check(bwf_simulate_template(text.c_str(), &t), "template");
    SetPtr tp(t);
    write_set(a.template_out, tp.get(), {{"role", "template"}}, man);
  }
  man.write(manifest_path(a.manifest, a.out));
  return kExitOk;
}

// ---------------------------------------------------------------- mean

struct MeanArgs {
  std::string in, out, trace, manifest, algo = "gd";
  double tol = 1e-8;
  int max_iter = 200;
  bool warm_start = true;
  int sgd_steps = 5000;
  std::uint64_t seed = 0;
  bool force_project = false;
};

int run_mean(const MeanArgs& a) {
  bwcli::Manifest man("mean");
  man.config() = {{"algo", a.algo}, {"tol", a.tol}, {"max_iter", a.max_iter}, {"warm_start", a.warm_start},
                  {"sgd_steps", a.sgd_steps}};
  man.set_seed(a.seed);
  SetPtr set = read_set(a.in, a.force_project ? BWF_READ_FORCE_PROJECT : 0, man);
  bwf_mean_options o;
  bwf_mean_options_default(&o);
  o.algorithm = a.algo == "sgd" ? BWF_MEAN_SGD : BWF_MEAN_GD;
  o.tol = a.tol;
  o.max_iter = a.max_iter;
  o.warm_start = a.warm_start;
  o.sgd_steps = a.sgd_steps;
  o.seed = a.seed;
  bwf_flowset* mean_raw = nullptr;
  bwf_mean_trace* trace_raw = nullptr;
  const bwf_status st = bwf_frechet_mean(set.get(), &o, &mean_raw, &trace_raw);
  if (st != BWF_OK && st != BWF_NON_CONVERGENCE) check(st, "mean");
  const std::string why = st == BWF_NON_CONVERGENCE ? bwf_last_error() : "";
  SetPtr mean(mean_raw);
  std::unique_ptr<bwf_mean_trace, TraceFree> trace(trace_raw);

  write_set(a.out, mean.get(), {{"role", "frechet_mean"}, {"algorithm", a.algo}}, man);
  const std::vector<double> grid = grid_of(mean.get());
  std::string csv = "grid_index,time,iteration,functional,residual,converged\n";
  double worst = 0.0;
  for (size_t j = 0; j < bwf_mean_trace_points(trace.get()); ++j) {
    size_t len = 0;
    int conv = 0;
    check(bwf_mean_trace_point(trace.get(), j, &len, &conv), "trace");
    for (size_t r = 0; r < len; ++r) {
      int it = 0;
      double f = 0.0, res = 0.0;
      check(bwf_mean_trace_record(trace.get(), j, r, &it, &f, &res), "trace");
      csv += std::to_string(j) + "," + fmt(grid[j]) + "," + std::to_string(it) + "," + fmt(f) + "," + fmt(res) + "," +
             std::to_string(conv) + "\n";
      if (r + 1 == len) worst = std::max(worst, res);
    }
  }
  write_text(a.trace.empty() ? a.out + ".trace.csv" : a.trace, csv, man);
  if (o.algorithm == BWF_MEAN_GD) {
    std::cout << "max final fixed-point residual " << fmt(worst) << " (tol " << fmt(a.tol) << ")\n";
  }
  man.note("converged", st == BWF_OK);
  man.write(manifest_path(a.manifest, a.out));
  if (st == BWF_NON_CONVERGENCE) {
    std::cerr << "error: NonConvergence: " << why << "\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- pca

struct PcaArgs {
  std::string in, mean = "auto", out_prefix, manifest;
  size_t k = 3;
  bool force_project = false;
};

int run_pca(const PcaArgs& a) {
  bwcli::Manifest man("pca");
  man.config() = {{"mean", a.mean}, {"k", a.k}};
  SetPtr set = read_set(a.in, a.force_project ? BWF_READ_FORCE_PROJECT : 0, man);
  SetPtr mean_in;
  if (a.mean != "auto") mean_in = read_set(a.mean, a.force_project ? BWF_READ_FORCE_PROJECT : 0, man);
  bwf_pca_model* mr = nullptr;
  check(bwf_pca_fit(set.get(), mean_in.get(), a.k, &mr), "pca");
  std::unique_ptr<bwf_pca_model, PcaFree> model(mr);

  size_t k = 0, nc = 0, n = 0;
  double total = 0.0, mfn = 0.0;
  check(bwf_pca_info(model.get(), &k, &nc, &n, &total, &mfn), "pca info");
  std::vector<double> ev(k);
  check(bwf_pca_eigenvalues(model.get(), ev.data()), "eigenvalues");
  std::vector<double> scores(n * nc);
  if (nc) check(bwf_pca_scores(model.get(), scores.data()), "scores");

  const std::string p = a.out_prefix;
  // Sibling outputs are listed by file name so the model does not depend on where it was written.
  auto local = [](const std::string& path) { return std::filesystem::path(path).filename().string(); };
  json files;
  bwf_flowset* mraw = nullptr;
  check(bwf_pca_mean(model.get(), &mraw), "mean");
  SetPtr mflow(mraw);
  write_set(p + ".mean.bwf", mflow.get(), {{"role", "pca_mean"}}, man);
  files["mean"] = local(p + ".mean.bwf");

  json lambda_max = json::array();
  for (size_t c = 0; c < nc; ++c) {
    bwf_flowset* craw = nullptr;
    check(bwf_pca_component(model.get(), c, &craw), "component");
    SetPtr comp(craw);
    const std::string cp = p + ".component" + std::to_string(c + 1) + ".bwf";
    write_set(cp, comp.get(), {{"role", "pca_component"}, {"component", c + 1}, {"embedded", true}, {"raw", true}}, man);
    files["components"].push_back(local(cp));
    double lm = 0.0;
    check(bwf_pca_lambda_max(model.get(), c, &lm), "lambda max");
    lambda_max.push_back(lm);
    for (int sign : {1, -1}) {
      bwf_flowset* moderaw = nullptr;
      check(bwf_pca_mode(model.get(), c, sign * lm, &moderaw), "mode of variation");
      SetPtr mode(moderaw);
      const std::string mp = p + ".mode" + std::to_string(c + 1) + (sign > 0 ? "_plus" : "_minus") + ".bwf";
      write_set(mp, mode.get(), {{"role", "mode_of_variation"}, {"component", c + 1}, {"lambda", sign * lm}}, man);
      files["modes"].push_back(local(mp));
    }
  }

  std::string sc = "flow";
  for (size_t c = 0; c < nc; ++c) sc += ",pc" + std::to_string(c + 1);
  sc += "\n";
  for (size_t i = 0; i < n; ++i) {
    sc += std::to_string(i);
    for (size_t c = 0; c < nc; ++c) sc += "," + fmt(scores[i * nc + c]);
    sc += "\n";
  }
  write_text(p + ".scores.csv", sc, man);

  std::string var = "component,eigenvalue,fraction,cumulative\n";
  double cum = 0.0;
  json fractions = json::array();
  for (size_t c = 0; c < k; ++c) {
    const double f = total > 0.0 ? ev[c] / total : 0.0;
    cum += f;
    fractions.push_back(f);
    var += std::to_string(c + 1) + "," + fmt(ev[c]) + "," + fmt(f) + "," + fmt(cum) + "\n";
  }
  write_text(p + ".variance.csv", var, man);

  json mj = {{"k", k},
             {"n_components", nc},
             {"n_flows", n},
             {"eigenvalues", ev},
             {"variance_fractions", fractions},
             {"total_variance", total},
             {"mean_field_norm", mfn},
             {"lambda_max", lambda_max},
             {"files", files}};
  write_text(p + ".model.json", mj.dump(2) + "\n", man);
  if (nc) std::cout << "first component explains " << fmt(fractions[0].get<double>()) << " of the variance\n";
  man.write(manifest_path(a.manifest, p + ".model.json"));
  return kExitOk;
}

// ---------------------------------------------------------------- smooth

struct SmoothArgs {
  std::string obs, in, mask, out, mode = "nw", bandwidth = "auto", kernel = "epanechnikov", sweep, manifest;
  size_t grid = 51;
  double h_min = 0.02, h_max = 0.5;
  size_t h_count = 12;
  bool force_project = false;
};

std::vector<std::vector<int>> read_mask(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Failure(BWF_IO, "cannot open " + path);
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<int> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell.find_first_not_of(" \t\r01") != std::string::npos || cell.find_first_of("01") == std::string::npos) {
        throw Failure(BWF_FORMAT, path + ": mask entries must be 0 or 1");
      }
      row.push_back(cell.find('1') != std::string::npos);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int run_smooth(const SmoothArgs& a) {
  bwcli::Manifest man("smooth");
  man.config() = {{"mode", a.mode},   {"bandwidth", a.bandwidth}, {"kernel", a.kernel}, {"grid", a.grid},
                  {"h_min", a.h_min}, {"h_max", a.h_max},         {"h_count", a.h_count}};
  std::vector<int64_t> ids;
  std::vector<double> times, mats;
  size_t dim = 0;
  if (!a.obs.empty()) {
    size_t n = 0;
    int64_t* ip = nullptr;
    double *tp = nullptr, *mp = nullptr;
    check(bwf_read_observations(a.obs.c_str(), &n, &dim, &ip, &tp, &mp), "reading " + a.obs);
    std::unique_ptr<int64_t, MemFree> ig(ip);
    std::unique_ptr<double, MemFree> tg(tp), mg(mp);
    ids.assign(ip, ip + n);
    times.assign(tp, tp + n);
    mats.assign(mp, mp + n * dim * dim);
    man.add_input(a.obs);
  } else {
    SetPtr set = read_set(a.in, a.force_project ? BWF_READ_FORCE_PROJECT : 0, man);
    const SetInfo si = info(set.get());
    if (si.kind != BWF_REAL) throw Failure(BWF_INVALID_ARGUMENT, "smoothing expects a real flow set");
    dim = si.d;
    std::vector<double> data(si.n * si.m * si.d * si.d);
    check(bwf_flowset_data(set.get(), data.data()), "data");
    const std::vector<double> grid = grid_of(set.get());
    std::vector<std::vector<int>> mask;
    if (!a.mask.empty()) {
      mask = read_mask(a.mask);
      man.add_input(a.mask);
      if (mask.size() != si.n) throw Failure(BWF_FORMAT, "mask needs one row per flow");
    }
    const size_t dd = si.d * si.d;
    for (size_t i = 0; i < si.n; ++i) {
      if (!mask.empty() && mask[i].size() != si.m) throw Failure(BWF_FORMAT, "mask row length must match the grid");
      for (size_t j = 0; j < si.m; ++j) {
        if (!mask.empty() && !mask[i][j]) continue;
        ids.push_back(static_cast<int64_t>(i));
        times.push_back(grid[j]);
        mats.insert(mats.end(), data.begin() + (i * si.m + j) * dd, data.begin() + (i * si.m + j + 1) * dd);
      }
    }
    if (ids.empty()) throw Failure(BWF_INVALID_ARGUMENT, "mask selects no observations");
  }

  bwf_smooth_options o;
  bwf_smooth_options_default(&o);
  o.mode = a.mode == "lfr" ? BWF_SMOOTH_LFR : BWF_SMOOTH_NW;
  o.kernel = a.kernel == "uniform" ? BWF_KERNEL_UNIFORM : a.kernel == "gaussian" ? BWF_KERNEL_GAUSSIAN : BWF_KERNEL_EPANECHNIKOV;
  o.grid_size = a.grid;

  if (a.bandwidth == "auto") {
    std::vector<double> cand(a.h_count);
    for (size_t i = 0; i < a.h_count; ++i) {
      const double f = a.h_count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(a.h_count - 1);
      cand[i] = std::exp(std::log(a.h_min) + f * (std::log(a.h_max) - std::log(a.h_min)));
    }
    std::vector<double> err(cand.size());
    std::vector<size_t> fails(cand.size());
    check(bwf_bandwidth_sweep(ids.size(), dim, ids.data(), times.data(), mats.data(), &o, cand.data(), cand.size(),
                              err.data(), fails.data()),
          "bandwidth sweep");
    std::string csv = "bandwidth,cv_error,failures\n";
    double best = -1.0, best_err = INFINITY;
    for (size_t i = 0; i < cand.size(); ++i) {
      csv += fmt(cand[i]) + "," + fmt(err[i]) + "," + std::to_string(fails[i]) + "\n";
      if (fails[i] == 0 && err[i] < best_err) {
        best_err = err[i];
        best = cand[i];
      }
    }
    write_text(a.sweep.empty() ? a.out + ".bandwidth.csv" : a.sweep, csv, man);
    if (best < 0.0) throw Failure(BWF_EMPTY_WINDOW, "every candidate bandwidth leaves empty windows");
    o.bandwidth = best;
    std::cout << "selected bandwidth " << fmt(best) << " (cv error " << fmt(best_err) << ")\n";
  } else {
    try {
      o.bandwidth = std::stod(a.bandwidth);
    } catch (const std::exception&) {
      throw Failure(BWF_INVALID_ARGUMENT, "bandwidth must be a number or 'auto'");
    }
  }
  man.note("bandwidth_used", o.bandwidth);

  bwf_flowset* raw = nullptr;
  int converged = 1;
  const bwf_status st = bwf_smooth(ids.size(), dim, ids.data(), times.data(), mats.data(), &o, &raw, &converged);
  if (st != BWF_OK && st != BWF_NON_CONVERGENCE) check(st, "smooth");
  const std::string why = st == BWF_NON_CONVERGENCE ? bwf_last_error() : "";
  SetPtr out(raw);
  write_set(a.out, out.get(), {{"role", "smoothed_flow"}, {"mode", a.mode}, {"bandwidth", o.bandwidth}}, man);
  man.note("converged", converged != 0);
  man.write(manifest_path(a.manifest, a.out));
  if (st == BWF_NON_CONVERGENCE) {
    std::cerr << "error: NonConvergence: " << why << "\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- spectral

struct SpectralArgs {
  std::string panel, out, window = "bartlett", manifest;
  size_t max_lag = 20, freqs = 0, ma_smooth = 0;
  bool difference = false, center = true, no_project = false;
};

int run_spectral(const SpectralArgs& a) {
  bwcli::Manifest man("spectral");
  man.config() = {{"max_lag", a.max_lag}, {"freqs", a.freqs},   {"window", a.window},          {"difference", a.difference},
                  {"center", a.center},   {"ma_smooth", a.ma_smooth}, {"project", !a.no_project}};
  man.add_input(a.panel);
  bwf_spectral_options o;
  bwf_spectral_options_default(&o);
  o.max_lag = a.max_lag;
  o.window = a.window == "rect" ? BWF_WINDOW_RECT : BWF_WINDOW_BARTLETT;
  o.project = !a.no_project;
  o.n_freqs = a.freqs;
  o.difference = a.difference;
  o.center = a.center;
  o.ma_width = a.ma_smooth;
  bwf_flowset* raw = nullptr;
  int64_t* ids_raw = nullptr;
  check(bwf_spectral_csv(a.panel.c_str(), &o, &raw, &ids_raw), "spectral");
  SetPtr set(raw);
  std::unique_ptr<int64_t, MemFree> ids(ids_raw);
  const SetInfo si = info(set.get());
  json annotation = {{"role", "spectral_density"},
                     {"frequency_grid", "u in [0,1], omega = pi * u"},
                     {"max_lag", a.max_lag},
                     {"window", a.window},
                     {"projected", !a.no_project},
                     {"series_ids", std::vector<int64_t>(ids.get(), ids.get() + si.n)}};
  write_set(a.out, set.get(), annotation, man);
  man.write(manifest_path(a.manifest, a.out));
  return kExitOk;
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string in, out_prefix, mode, k_range, manifest;
  size_t k = 0, restarts = 20, pca_k = 3;
  int max_iter = 100;
  std::uint64_t seed = 0;
  bool force_project = false;
};

std::string matrix_csv(const std::vector<double>& m, size_t rows, size_t cols) {
  std::string csv;
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) csv += (j ? "," : "") + fmt(m[i * cols + j]);
    csv += "\n";
  }
  return csv;
}

int run_cluster(const ClusterArgs& a) {
  bwcli::Manifest man("cluster");
  man.config() = {{"mode", a.mode}, {"k", a.k}, {"k_range", a.k_range}, {"restarts", a.restarts},
                  {"max_iter", a.max_iter}, {"pca_k", a.pca_k}};
  man.set_seed(a.seed);
  if (a.k == 0 && a.k_range.empty()) throw Failure(BWF_INVALID_ARGUMENT, "give --k or --k-range");
  SetPtr set = read_set(a.in, a.force_project ? BWF_READ_FORCE_PROJECT : 0, man);
  const SetInfo si = info(set.get());

  bwf_kmeans_options o;
  bwf_kmeans_options_default(&o);
  o.mode = a.mode == "scores" ? BWF_CLUSTER_SCORES : BWF_CLUSTER_RAW;
  o.restarts = a.restarts;
  o.max_iter = a.max_iter;
  o.seed = a.seed;
  std::vector<double> scores;
  if (o.mode == BWF_CLUSTER_SCORES) {
    bwf_pca_model* mr = nullptr;
    check(bwf_pca_fit(set.get(), nullptr, std::min(a.pca_k, si.n), &mr), "pca");
    std::unique_ptr<bwf_pca_model, PcaFree> model(mr);
    size_t nc = 0;
    check(bwf_pca_info(model.get(), nullptr, &nc, nullptr, nullptr, nullptr), "pca info");
    if (nc == 0) throw Failure(BWF_INVALID_ARGUMENT, "flows have no variability to cluster on");
    scores.resize(si.n * nc);
    check(bwf_pca_scores(model.get(), scores.data()), "scores");
    o.scores = scores.data();
    o.n_score_cols = nc;
  }

  const std::string p = a.out_prefix;
  std::vector<double> dist(si.n * si.n);
  check(bwf_pairwise_distances(set.get(), dist.data()), "distances");
  write_text(p + ".distances.csv", matrix_csv(dist, si.n, si.n), man);

  size_t k = a.k;
  if (!a.k_range.empty()) {
    size_t lo = 0, hi = 0;
    char colon = 0;
    std::stringstream ss(a.k_range);
    if (!(ss >> lo >> colon >> hi) || colon != ':') throw Failure(BWF_INVALID_ARGUMENT, "--k-range must look like 1:8");
    const size_t rows = hi >= lo ? hi - lo + 1 : 0;
    std::vector<double> in(rows), di(rows), sd(rows);
    check(bwf_elbow(set.get(), lo, hi, &o, in.data(), di.data(), sd.data()), "elbow");
    std::string csv = "k,inertia,distortion,second_difference\n";
    double best = -INFINITY;
    size_t elbow = 0;
    for (size_t r = 0; r < rows; ++r) {
      csv += std::to_string(lo + r) + "," + fmt(in[r]) + "," + fmt(di[r]) + "," + (std::isnan(sd[r]) ? "" : fmt(sd[r])) + "\n";
      if (!std::isnan(sd[r]) && sd[r] > best) {
        best = sd[r];
        elbow = lo + r;
      }
    }
    write_text(p + ".elbow.csv", csv, man);
    if (k == 0) k = elbow ? elbow : lo;
    man.note("elbow_k", elbow);
  }

  bwf_kmeans_result* rr = nullptr;
  check(bwf_kmeans(set.get(), k, &o, &rr), "kmeans");
  std::unique_ptr<bwf_kmeans_result, KmFree> res(rr);
  double inertia = 0.0, distortion = 0.0;
  int n_iter = 0;
  check(bwf_kmeans_info(res.get(), &inertia, &distortion, &n_iter, nullptr), "kmeans info");
  std::vector<int> labels(si.n);
  check(bwf_kmeans_labels(res.get(), labels.data()), "labels");
  std::string csv = "flow,label\n";
  for (size_t i = 0; i < si.n; ++i) csv += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  write_text(p + ".labels.csv", csv, man);
  size_t len = 0;
  check(bwf_kmeans_inertia_trace(res.get(), nullptr, &len), "trace");
  std::vector<double> tr(len);
  check(bwf_kmeans_inertia_trace(res.get(), tr.data(), &len), "trace");
  std::string tcsv = "iteration,inertia\n";
  for (size_t i = 0; i < len; ++i) tcsv += std::to_string(i + 1) + "," + fmt(tr[i]) + "\n";
  write_text(p + ".inertia.csv", tcsv, man);
  man.note("k", k);
  man.note("inertia", inertia);
  man.note("distortion", distortion);
  std::cout << "k = " << k << ": inertia " << fmt(inertia) << ", distortion " << fmt(distortion) << ", " << n_iter
            << " iterations\n";
  man.write(manifest_path(a.manifest, p + ".labels.csv"));
  return kExitOk;
}

// ---------------------------------------------------------------- dist

struct DistArgs {
  std::string in, other, out, manifest;
  bool force_project = false;
};

int run_dist(const DistArgs& a) {
  bwcli::Manifest man("dist");
  const int flags = a.force_project ? BWF_READ_FORCE_PROJECT : 0;
  SetPtr x = read_set(a.in, flags, man);
  const size_t n = info(x.get()).n;
  std::vector<double> d;
  size_t cols = n;
  if (a.other.empty()) {
    d.resize(n * n);
    check(bwf_pairwise_distances(x.get(), d.data()), "distances");
  } else {
    SetPtr y = read_set(a.other, flags, man);
    cols = info(y.get()).n;
    d.resize(n * cols);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < cols; ++j) check(bwf_flow_distance(x.get(), i, y.get(), j, &d[i * cols + j]), "distance");
    }
  }
  write_text(a.out, matrix_csv(d, n, cols), man);
  man.write(manifest_path(a.manifest, a.out));
  return kExitOk;
}

// ---------------------------------------------------------------- ingest-sliding

struct IngestArgs {
  std::string raw, out, averaging = "euclidean", manifest;
  size_t window = 10, stride = 1;
};

int run_ingest(const IngestArgs& a) {
  bwcli::Manifest man("ingest-sliding");
  man.config() = {{"window", a.window}, {"stride", a.stride}, {"averaging", a.averaging}};
  man.note("truncation", "windows [c - h, c + h] are clipped to the series; the covariance divides by the clipped length");
  man.add_input(a.raw);
  bwf_flowset* raw = nullptr;
  int64_t* ids_raw = nullptr;
  check(bwf_ingest_sliding(a.raw.c_str(), a.window, a.stride,
                           a.averaging == "frechet" ? BWF_AVERAGE_FRECHET : BWF_AVERAGE_EUCLIDEAN, &raw, &ids_raw),
        "ingest");
  SetPtr set(raw);
  std::unique_ptr<int64_t, MemFree> ids(ids_raw);
  const SetInfo si = info(set.get());
  write_set(a.out, set.get(),
            {{"role", "sliding_window_covariance"},
             {"half_width", a.window},
             {"stride", a.stride},
             {"subject_ids", std::vector<int64_t>(ids.get(), ids.get() + si.n)}},
            man);
  man.write(manifest_path(a.manifest, a.out));
  return kExitOk;
}

int exit_for(bwf_status s) {
  if (s == BWF_NON_CONVERGENCE) return kExitNonConvergence;
  if (s == BWF_INTERNAL) return kExitInternal;
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bures-Wasserstein covariance flows"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0: BWFLOW_THREADS or runtime default)")->capture_default_str();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Sample random flows from a JSON config");
  c_sim->add_option("--config", sim.config, "JSON config")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim.out, "Output BWF1 file")->required();
  c_sim->add_option("--labels", sim.labels, "Labels CSV for bimodal datasets (default <out>.labels.csv)");
  c_sim->add_option("--template-out", sim.template_out, "Also write the template flow");
  c_sim->add_option("--manifest", sim.manifest, "Manifest path (default <out>.manifest.json)");

  MeanArgs mean;
  auto* c_mean = app.add_subcommand("mean", "Fréchet mean flow");
  c_mean->add_option("--in", mean.in, "Input BWF1")->required()->check(CLI::ExistingFile);
  c_mean->add_option("--out", mean.out, "Output BWF1")->required();
  c_mean->add_option("--algo", mean.algo, "gd or sgd")->check(CLI::IsMember({"gd", "sgd"}))->capture_default_str();
  c_mean->add_option("--tol", mean.tol, "Fixed-point residual tolerance")->capture_default_str();
  c_mean->add_option("--max-iter", mean.max_iter, "Gradient-descent iterations")->capture_default_str();
  c_mean->add_flag("--warm-start,!--no-warm-start", mean.warm_start, "Start each grid point from its neighbour")
      ->capture_default_str();
  c_mean->add_option("--sgd-steps", mean.sgd_steps, "SGD steps")->capture_default_str();
  c_mean->add_option("--seed", mean.seed, "SGD seed")->capture_default_str();
  c_mean->add_option("--trace", mean.trace, "Trace CSV (default <out>.trace.csv)");
  c_mean->add_flag("--force-project", mean.force_project, "Project invalid input matrices instead of failing");
  c_mean->add_option("--manifest", mean.manifest, "Manifest path");

  PcaArgs pca;
  auto* c_pca = app.add_subcommand("pca", "Tangent-space PCA");
  c_pca->add_option("--in", pca.in, "Input BWF1")->required()->check(CLI::ExistingFile);
  c_pca->add_option("--mean", pca.mean, "Mean flow BWF1 or 'auto'")->capture_default_str();
  c_pca->add_option("--k", pca.k, "Number of components")->capture_default_str();
  c_pca->add_option("--out-prefix", pca.out_prefix, "Prefix of all outputs")->required();
  c_pca->add_flag("--force-project", pca.force_project, "Project invalid input matrices instead of failing");
  c_pca->add_option("--manifest", pca.manifest, "Manifest path");

  SmoothArgs sm;
  auto* c_sm = app.add_subcommand("smooth", "Smooth scattered observations into a flow");
  auto* o_obs = c_sm->add_option("--obs", sm.obs, "CSV: flow_id,time,m_11..m_dd")->check(CLI::ExistingFile);
  auto* o_in = c_sm->add_option("--in", sm.in, "BWF1 input (with --mask)")->check(CLI::ExistingFile);
  o_obs->excludes(o_in);
  c_sm->add_option("--mask", sm.mask, "0/1 CSV, one row per flow, one column per grid point")->needs(o_in);
  c_sm->add_option("--out", sm.out, "Output BWF1")->required();
  c_sm->add_option("--mode", sm.mode, "nw or lfr")->check(CLI::IsMember({"nw", "lfr"}))->capture_default_str();
  c_sm->add_option("--bandwidth", sm.bandwidth, "Bandwidth or 'auto'")->capture_default_str();
  c_sm->add_option("--kernel", sm.kernel, "uniform, epanechnikov or gaussian")
      ->check(CLI::IsMember({"uniform", "epanechnikov", "gaussian"}))
      ->capture_default_str();
  c_sm->add_option("--grid", sm.grid, "Output grid size")->capture_default_str();
  c_sm->add_option("--h-min", sm.h_min, "Smallest candidate bandwidth")->capture_default_str();
  c_sm->add_option("--h-max", sm.h_max, "Largest candidate bandwidth")->capture_default_str();
  c_sm->add_option("--h-count", sm.h_count, "Number of candidate bandwidths")->capture_default_str();
  c_sm->add_option("--sweep", sm.sweep, "Bandwidth sweep CSV (default <out>.bandwidth.csv)");
  c_sm->add_flag("--force-project", sm.force_project, "Project invalid input matrices instead of failing");
  c_sm->add_option("--manifest", sm.manifest, "Manifest path");

  SpectralArgs sp;
  auto* c_sp = app.add_subcommand("spectral", "Spectral density flows of series panels");
  c_sp->add_option("--panel", sp.panel, "CSV: series_id,time_index,x_1..x_d")->required()->check(CLI::ExistingFile);
  c_sp->add_option("--out", sp.out, "Output BWF1")->required();
  c_sp->add_option("--max-lag", sp.max_lag, "Largest lag")->capture_default_str();
  c_sp->add_option("--freqs", sp.freqs, "Frequency grid size (0: 4 max-lag + 1)")->capture_default_str();
  c_sp->add_option("--window", sp.window, "bartlett or rect")->check(CLI::IsMember({"bartlett", "rect"}))->capture_default_str();
  c_sp->add_flag("--difference", sp.difference, "First-difference the series");
  c_sp->add_flag("--center,!--no-center", sp.center, "Subtract the time mean")->capture_default_str();
  c_sp->add_option("--ma-smooth", sp.ma_smooth, "Moving-average width (0: none)")->capture_default_str();
  c_sp->add_flag("--no-project", sp.no_project, "Skip the PSD projection");
  c_sp->add_option("--manifest", sp.manifest, "Manifest path");

  ClusterArgs cl;
  auto* c_cl = app.add_subcommand("cluster", "k-means over flows");
  c_cl->add_option("--in", cl.in, "Input BWF1")->required()->check(CLI::ExistingFile);
  c_cl->add_option("--out-prefix", cl.out_prefix, "Prefix of all outputs")->required();
  c_cl->add_option("--mode", cl.mode, "scores or raw")->required()->check(CLI::IsMember({"scores", "raw"}));
  c_cl->add_option("--k", cl.k, "Number of clusters");
  c_cl->add_option("--k-range", cl.k_range, "Elbow table range, e.g. 1:8");
  c_cl->add_option("--restarts", cl.restarts, "Seeded restarts")->capture_default_str();
  c_cl->add_option("--max-iter", cl.max_iter, "Lloyd iterations")->capture_default_str();
  c_cl->add_option("--seed", cl.seed, "Base seed")->capture_default_str();
  c_cl->add_option("--pca-k", cl.pca_k, "Components used in scores mode")->capture_default_str();
  c_cl->add_flag("--force-project", cl.force_project, "Project invalid input matrices instead of failing");
  c_cl->add_option("--manifest", cl.manifest, "Manifest path");

  DistArgs di;
  auto* c_di = app.add_subcommand("dist", "Integrated distance matrix");
  c_di->add_option("--in", di.in, "Input BWF1")->required()->check(CLI::ExistingFile);
  c_di->add_option("--other", di.other, "Second BWF1 for a cross-distance matrix")->check(CLI::ExistingFile);
  c_di->add_option("--out", di.out, "Output CSV")->required();
  c_di->add_flag("--force-project", di.force_project, "Project invalid input matrices instead of failing");
  c_di->add_option("--manifest", di.manifest, "Manifest path");

  IngestArgs ing;
  auto* c_ing = app.add_subcommand("ingest-sliding", "Windowed covariance flows from raw recordings");
  c_ing->add_option("--raw", ing.raw, "CSV: subject_id,[run,]time_index,x_1..x_d")->required()->check(CLI::ExistingFile);
  c_ing->add_option("--out", ing.out, "Output BWF1")->required();
  c_ing->add_option("--window", ing.window, "Half-width h (window 2h + 1)")->capture_default_str();
  c_ing->add_option("--stride", ing.stride, "Distance between window centres")->capture_default_str();
  c_ing->add_option("--averaging", ing.averaging, "Averaging across runs: euclidean or frechet")
      ->check(CLI::IsMember({"euclidean", "frechet"}))
      ->capture_default_str();
  c_ing->add_option("--manifest", ing.manifest, "Manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (threads <= 0) {
    if (const char* env = std::getenv("BWFLOW_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) bwf_set_num_threads(threads);

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_mean->parsed()) return run_mean(mean);
    if (c_pca->parsed()) return run_pca(pca);
    if (c_sm->parsed()) {
      if (sm.obs.empty() && sm.in.empty()) throw Failure(BWF_INVALID_ARGUMENT, "give --obs or --in");
      return run_smooth(sm);
    }
    if (c_sp->parsed()) return run_spectral(sp);
    if (c_cl->parsed()) return run_cluster(cl);
    if (c_di->parsed()) return run_dist(di);
    if (c_ing->parsed()) return run_ingest(ing);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.what() << "\n";
    return exit_for(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitInternal;
}
