#pragma once

// BWF1 container for flow sets and CSV readers for series, scattered
// observations, and raw multichannel recordings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "bwflow/flow.hpp"
#include "bwflow/spectral.hpp"

namespace bwflow {

/// Layout: "BWFLOW1\0", kind byte, 3 zero bytes, u32 n_flows, n_times, dim,
/// grid doubles, then row-major matrices (complex interleaved), little-endian.
inline constexpr char kBwf1Magic[8] = {'B', 'W', 'F', 'L', 'O', 'W', '1', '\0'};
inline constexpr std::size_t kBwf1HeaderSize = 24;

struct Bwf1Header {
  ScalarKind kind = ScalarKind::kReal;
  std::uint32_t n_flows = 0;
  std::uint32_t n_times = 0;
  std::uint32_t dim = 0;

  std::uint64_t payload_doubles() const;
  std::uint64_t file_size() const;
};

using AnyFlowSet = std::variant<FlowSet, ComplexFlowSet>;

ScalarKind kind_of(const AnyFlowSet& set);

struct ReadOptions {
  bool force_project = false;  // repair PSD violations instead of failing
  bool raw = false;            // skip Hermitian/PSD checks (tangent fields, components)
};

struct ReadReport {
  std::vector<Violation> violations;  // found on read; repaired when force_project
};

template <Scalar S>
std::vector<std::uint8_t> encode_bwf1(const BasicFlowSet<S>& set);
std::vector<std::uint8_t> encode_bwf1(const AnyFlowSet& set);

Bwf1Header decode_bwf1_header(std::span<const std::uint8_t> bytes);
/// Throws Format on structural problems and NotPSD / NonHermitian / NonFinite
/// with indices on content problems (unless opts say otherwise).
AnyFlowSet decode_bwf1(std::span<const std::uint8_t> bytes, const ReadOptions& opts = {}, ReadReport* report = nullptr);

void write_bwf1(const std::filesystem::path& path, const AnyFlowSet& set);
AnyFlowSet read_bwf1(const std::filesystem::path& path, const ReadOptions& opts = {}, ReadReport* report = nullptr);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Numeric CSV table; a first row with any non-numeric field is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable parse_csv(std::istream& in, const std::string& source = "csv");
CsvTable read_csv(const std::filesystem::path& path);

/// Columns series_id, time_index, x_1..x_d; one panel per series, time-ordered.
std::vector<SeriesPanel> panels_from_csv(const CsvTable& table);

/// Scattered observations: columns flow_id, time, m_11, m_12, ..., m_dd (row-major).
struct ScatterTable {
  std::vector<std::int64_t> flow_ids;
  std::vector<double> times;
  std::vector<RealMatrix> mats;
};
ScatterTable scatter_from_csv(const CsvTable& table);

enum class RunAveraging { kEuclidean, kFrechet };

struct SlidingConfig {
  std::size_t half_width = 10;  // window 2h + 1
  std::size_t stride = 1;
  RunAveraging averaging = RunAveraging::kEuclidean;
};

struct SlidingResult {
  FlowSet flows;
  std::vector<std::int64_t> subject_ids;
  std::vector<std::size_t> centers;
  std::size_t runs_averaged = 1;
};

/// Columns subject_id, [run,] time_index, x_1..x_d. Windowed covariances
/// (1/|W|) sum (X_j - mean_W)(X_j - mean_W)^T centred at 0, stride, 2 stride, ...,
/// each window [c - h, c + h] truncated to the series. Grid u = c / (T - 1).
SlidingResult ingest_sliding(const CsvTable& table, const SlidingConfig& cfg);

}  // namespace bwflow
