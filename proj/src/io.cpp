#include "bwflow/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "bwflow/barycenter.hpp"
#include "bwflow/error.hpp"

namespace bwflow {

static_assert(std::endian::native == std::endian::little, "BWF1 I/O assumes a little-endian host");

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_doubles(std::vector<std::uint8_t>& out, const double* v, std::size_t count) {
  const std::size_t at = out.size();
  out.resize(at + count * sizeof(double));
  std::memcpy(out.data() + at, v, count * sizeof(double));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) raise(ErrorCode::kInvalidArgument, std::string(what) + " does not fit the BWF1 header");
  return static_cast<std::uint32_t>(v);
}

template <Scalar S>
AnyFlowSet decode_payload(const Bwf1Header& h, Grid grid, const double* p, const ReadOptions& opts, ReadReport* report) {
  const auto d = static_cast<Eigen::Index>(h.dim);
  std::vector<std::vector<Matrix<S>>> flows(h.n_flows, std::vector<Matrix<S>>(h.n_times));
  for (std::size_t i = 0; i < h.n_flows; ++i) {
    for (std::size_t j = 0; j < h.n_times; ++j) {
      Matrix<S> m(d, d);
      for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
          if constexpr (std::is_same_v<S, double>) {
            m(r, c) = *p++;
          } else {
            const double re = *p++;
            const double im = *p++;
            m(r, c) = Complex(re, im);
          }
        }
      }
      flows[i][j] = std::move(m);
    }
  }
  for (std::size_t i = 0; i < flows.size(); ++i) {
    for (std::size_t j = 0; j < flows[i].size(); ++j) {
      if (!flows[i][j].allFinite()) {
        raise(ErrorCode::kNonFinite, "flow " + std::to_string(i) + ", time " + std::to_string(j) + ": non-finite entry");
      }
    }
  }
  if (!opts.raw) {
    const FlowSetDiagnostics diag = validate_flowset<S>(*grid, flows);
    if (report) report->violations = diag.violations;
    if (!diag.violations.empty()) {
      if (!opts.force_project) {
        const Violation& v = diag.violations.front();
        std::string msg = std::to_string(diag.violations.size()) + " matrices fail validation; first: flow " +
                          std::to_string(v.flow) + ", time " + std::to_string(v.time) + " (" + v.kind +
                          ", value " + std::to_string(v.value) + ")";
        raise(v.kind == "NonHermitian" ? ErrorCode::kNonHermitian : ErrorCode::kNotPsd, msg);
      }
      for (const Violation& v : diag.violations) {
        Matrix<S>& m = flows[v.flow][v.time];
        m = project_psd<S>(hermitian_part<S>(m));
      }
    }
  }
  return BasicFlowSet<S>(std::move(grid), std::move(flows));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::int64_t as_id(double v, std::size_t line, const char* what) {
  if (v != std::floor(v)) raise(ErrorCode::kFormat, "line " + std::to_string(line) + ": " + what + " must be an integer");
  return static_cast<std::int64_t>(v);
}

}  // namespace

std::uint64_t Bwf1Header::payload_doubles() const {
  const std::uint64_t per = static_cast<std::uint64_t>(dim) * dim * (kind == ScalarKind::kComplex ? 2 : 1);
  return static_cast<std::uint64_t>(n_flows) * n_times * per;
}

std::uint64_t Bwf1Header::file_size() const {
  return kBwf1HeaderSize + 8ULL * (n_times + payload_doubles());
}

ScalarKind kind_of(const AnyFlowSet& set) {
  return std::holds_alternative<FlowSet>(set) ? ScalarKind::kReal : ScalarKind::kComplex;
}

template <Scalar S>
std::vector<std::uint8_t> encode_bwf1(const BasicFlowSet<S>& set) {
  std::vector<std::uint8_t> out(kBwf1Magic, kBwf1Magic + 8);
  out.push_back(static_cast<std::uint8_t>(kScalarKindOf<S>));
  out.insert(out.end(), 3, 0);
  put_u32(out, checked_u32(set.size(), "n_flows"));
  put_u32(out, checked_u32(set.n_times(), "n_times"));
  put_u32(out, checked_u32(static_cast<std::size_t>(set.dim()), "dim"));
  if (set.n_times()) put_doubles(out, set.grid().data(), set.n_times());
  for (const auto& flow : set.flows()) {
    for (const auto& m : flow.matrices()) {
      // Row-major order on disk; Eigen stores column-major.
      const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
      put_doubles(out, reinterpret_cast<const double*>(rm.data()),
                  static_cast<std::size_t>(rm.size()) * (kScalarKindOf<S> == ScalarKind::kComplex ? 2 : 1));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_bwf1(const AnyFlowSet& set) {
  return std::visit([](const auto& s) { return encode_bwf1(s); }, set);
}

Bwf1Header decode_bwf1_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBwf1HeaderSize) raise(ErrorCode::kFormat, "file shorter than the BWF1 header");
  if (std::memcmp(bytes.data(), kBwf1Magic, 8) != 0) raise(ErrorCode::kFormat, "bad magic: not a BWF1 file");
  Bwf1Header h;
  const std::uint8_t kind = bytes[8];
  if (kind > 1) raise(ErrorCode::kFormat, "unknown scalar kind " + std::to_string(kind));
  h.kind = static_cast<ScalarKind>(kind);
  if (bytes[9] || bytes[10] || bytes[11]) raise(ErrorCode::kFormat, "reserved header bytes are not zero");
  h.n_flows = get_u32(bytes.data() + 12);
  h.n_times = get_u32(bytes.data() + 16);
  h.dim = get_u32(bytes.data() + 20);
  if (h.n_flows == 0 || h.n_times == 0 || h.dim == 0) raise(ErrorCode::kFormat, "header declares an empty flow set");
  if (bytes.size() != h.file_size()) {
    raise(ErrorCode::kFormat, "payload size mismatch: header implies " + std::to_string(h.file_size()) +
                                  " bytes, file has " + std::to_string(bytes.size()));
  }
  return h;
}

AnyFlowSet decode_bwf1(std::span<const std::uint8_t> bytes, const ReadOptions& opts, ReadReport* report) {
  const Bwf1Header h = decode_bwf1_header(bytes);
  std::vector<double> values((bytes.size() - kBwf1HeaderSize) / sizeof(double));
  std::memcpy(values.data(), bytes.data() + kBwf1HeaderSize, values.size() * sizeof(double));
  Grid grid;
  try {
    grid = make_grid(std::vector<double>(values.begin(), values.begin() + h.n_times));
  } catch (const Error& e) {
    raise(ErrorCode::kFormat, std::string("invalid grid: ") + e.what());
  }
  const double* payload = values.data() + h.n_times;
  if (h.kind == ScalarKind::kReal) return decode_payload<double>(h, std::move(grid), payload, opts, report);
  return decode_payload<Complex>(h, std::move(grid), payload, opts, report);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorCode::kIo, "write failed: " + path.string());
}

void write_bwf1(const std::filesystem::path& path, const AnyFlowSet& set) {
  write_file_bytes(path, encode_bwf1(set));
}

AnyFlowSet read_bwf1(const std::filesystem::path& path, const ReadOptions& opts, ReadReport* report) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  try {
    return decode_bwf1(bytes, opts, report);
  } catch (const Error& e) {
    raise(e.code(), path.string() + ": " + e.what());
  }
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    std::vector<std::string> fields = split_fields(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) numeric = numeric && parse_double(fields[i], row[i]);
    if (!numeric) {
      if (t.header.empty() && t.rows.empty()) {
        t.header = std::move(fields);
        width = t.header.size();
        continue;
      }
      raise(ErrorCode::kFormat, source + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      raise(ErrorCode::kFormat, source + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                    " fields, found " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(lineno);
  }
  if (t.rows.empty()) raise(ErrorCode::kFormat, source + ": no data rows");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kIo, "cannot open " + path.string());
  return parse_csv(in, path.string());
}

std::vector<SeriesPanel> panels_from_csv(const CsvTable& table) {
  const std::size_t width = table.rows.front().size();
  if (width < 3) raise(ErrorCode::kFormat, "panel CSV needs series_id, time_index and at least one value column");
  std::map<std::int64_t, std::vector<std::pair<double, std::size_t>>> by_series;
  std::vector<std::int64_t> order;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::int64_t id = as_id(table.rows[r][0], table.line_numbers[r], "series_id");
    if (!by_series.count(id)) order.push_back(id);
    by_series[id].emplace_back(table.rows[r][1], r);
  }
  std::vector<SeriesPanel> out;
  for (std::int64_t id : order) {
    auto rows = by_series[id];
    std::stable_sort(rows.begin(), rows.end());
    SeriesPanel p;
    p.series_id = id;
    p.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 2));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].first == rows[i - 1].first) {
        raise(ErrorCode::kFormat, "line " + std::to_string(table.line_numbers[rows[i].second]) + ": duplicate time_index");
      }
      const auto& src = table.rows[rows[i].second];
      for (std::size_t c = 2; c < width; ++c) p.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - 2)) = src[c];
    }
    out.push_back(std::move(p));
  }
  return out;
}

ScatterTable scatter_from_csv(const CsvTable& table) {
  const std::size_t width = table.rows.front().size();
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(width >= 2 ? width - 2 : 0))));
  if (width < 3 || static_cast<std::size_t>(d * d) + 2 != width) {
    raise(ErrorCode::kFormat, "observation CSV needs flow_id, time and d*d matrix entries");
  }
  ScatterTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    out.flow_ids.push_back(as_id(row[0], table.line_numbers[r], "flow_id"));
    out.times.push_back(row[1]);
    RealMatrix m(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) m(a, b) = row[static_cast<std::size_t>(2 + a * d + b)];
    }
    out.mats.push_back(std::move(m));
  }
  return out;
}

SlidingResult ingest_sliding(const CsvTable& table, const SlidingConfig& cfg) {
  if (cfg.stride == 0) raise(ErrorCode::kInvalidArgument, "stride must be positive");
  const bool has_run = table.header.size() > 1 && table.header[1] == "run";
  const std::size_t first_value = has_run ? 3 : 2;
  const std::size_t width = table.rows.front().size();
  if (width <= first_value) raise(ErrorCode::kFormat, "raw CSV has no value columns");
  const auto d = static_cast<Eigen::Index>(width - first_value);

  // (subject, run) -> time-ordered rows.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::pair<double, std::size_t>>> groups;
  std::vector<std::int64_t> subjects;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::int64_t subject = as_id(row[0], table.line_numbers[r], "subject_id");
    const std::int64_t run = has_run ? as_id(row[1], table.line_numbers[r], "run") : 0;
    if (std::find(subjects.begin(), subjects.end(), subject) == subjects.end()) subjects.push_back(subject);
    groups[{subject, run}].emplace_back(row[first_value - 1], r);
  }
  std::size_t length = 0;
  for (auto& [key, rows] : groups) {
    std::sort(rows.begin(), rows.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].first != static_cast<double>(rows.front().first + static_cast<double>(i))) {
        raise(ErrorCode::kRaggedSeries, "subject " + std::to_string(key.first) + ": time_index is not contiguous");
      }
    }
    if (length == 0) length = rows.size();
    if (rows.size() != length) {
      raise(ErrorCode::kRaggedSeries, "subject " + std::to_string(key.first) + " has " + std::to_string(rows.size()) +
                                          " samples, expected " + std::to_string(length));
    }
  }
  if (2 * cfg.half_width + 1 > length) {
    raise(ErrorCode::kWindowTooLarge, "window of " + std::to_string(2 * cfg.half_width + 1) + " exceeds series length " +
                                          std::to_string(length));
  }

  SlidingResult out;
  for (std::size_t c = 0; c < length; c += cfg.stride) out.centers.push_back(c);
  std::vector<double> grid_points;
  for (std::size_t c : out.centers) {
    grid_points.push_back(length > 1 ? static_cast<double>(c) / static_cast<double>(length - 1) : 0.0);
  }
  const Grid grid = make_grid(std::move(grid_points));

  auto window_flow = [&](const std::vector<std::pair<double, std::size_t>>& rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(length), d);
    for (std::size_t i = 0; i < length; ++i) {
      for (Eigen::Index c = 0; c < d; ++c) {
        x(static_cast<Eigen::Index>(i), c) = table.rows[rows[i].second][first_value + static_cast<std::size_t>(c)];
      }
    }
    std::vector<RealMatrix> mats;
    for (std::size_t c : out.centers) {
      const std::size_t lo = c >= cfg.half_width ? c - cfg.half_width : 0;
      const std::size_t hi = std::min(length - 1, c + cfg.half_width);
      const auto n = static_cast<Eigen::Index>(hi - lo + 1);
      Eigen::MatrixXd w = x.middleRows(static_cast<Eigen::Index>(lo), n);
      w.rowwise() -= w.colwise().mean();
      mats.push_back(w.transpose() * w / static_cast<double>(n));
    }
    return Flow(grid, std::move(mats));
  };

  std::vector<std::vector<RealMatrix>> flows;
  for (std::int64_t subject : subjects) {
    std::vector<Flow> runs;
    for (const auto& [key, rows] : groups) {
      if (key.first == subject) runs.push_back(window_flow(rows));
    }
    out.runs_averaged = std::max(out.runs_averaged, runs.size());
    if (runs.size() == 1) {
      flows.push_back(runs.front().matrices());
    } else if (cfg.averaging == RunAveraging::kEuclidean) {
      std::vector<RealMatrix> avg(out.centers.size());
      for (std::size_t j = 0; j < avg.size(); ++j) {
        avg[j] = RealMatrix::Zero(d, d);
        for (const auto& f : runs) avg[j] += f[j];
        avg[j] /= static_cast<double>(runs.size());
      }
      flows.push_back(std::move(avg));
    } else {
      flows.push_back(frechet_mean_flow<double>(FlowSet(runs)).mean.matrices());
    }
    out.subject_ids.push_back(subject);
  }
  out.flows = FlowSet(grid, std::move(flows));
  return out;
}

template std::vector<std::uint8_t> encode_bwf1<double>(const BasicFlowSet<double>&);
template std::vector<std::uint8_t> encode_bwf1<Complex>(const BasicFlowSet<Complex>&);

}  // namespace bwflow
