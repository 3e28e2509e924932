#ifndef PCFLOW_DATAIO_HPP
#define PCFLOW_DATAIO_HPP

#include "pcflow/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pcflow {

/// A univariate series as read from disk. Timestamps are minutes since
/// 1970-01-01T00:00 UTC; an empty optional marks a missing reading.
struct RawSeries {
  std::vector<std::int64_t> timestamps;
  std::vector<std::optional<double>> values;
  std::vector<std::optional<double>> capacity;  // empty when not loaded

  std::size_t size() const { return timestamps.size(); }
  bool has_capacity() const { return !capacity.empty(); }
};

struct CsvSchema {
  std::string time_col = "timestamp";
  std::string value_col = "value";
  std::optional<std::string> capacity_col;
};

enum class Scaling { none, capacity_factor, minmax };

std::string to_string(Scaling scaling);
Scaling parse_scaling(const std::string& name);

/// N scenarios of D consecutive readings, one per row.
///
/// `capacity` is N x D when the source carried installed capacity and is
/// kept so capacity-factor scaling can be inverted exactly.
/// `capacity_reference` is the latest installed capacity seen; it is what
/// generated (timestamp-less) scenarios are de-scaled with.
struct ScenarioSet {
  MatrixXd data;
  Index period_length = 0;
  int interval_minutes = 0;
  Scaling scaling = Scaling::none;
  double min = 0.0;
  double max = 0.0;
  double capacity_reference = 0.0;
  /// Model output: keeps the scaling provenance but may leave [0, 1].
  bool generated = false;
  MatrixXd capacity;
  std::vector<std::int64_t> window_start;

  Index rows() const { return data.rows(); }

  /// Throws DataError when a ScenarioSet invariant is violated.
  void validate() const;
};

struct SliceStats {
  std::size_t windows_seen = 0;
  std::vector<std::int64_t> dropped;  // start minute of every dropped window
};

/// Parses a timestamp such as `2015-01-01T00:15:00Z`, `2015-01-01 00:15`
/// or `2015-01-01T01:15:00+01:00` into minutes since the epoch (UTC).
std::int64_t parse_timestamp(const std::string& text);

/// True for the cell spellings treated as missing: empty, NaN, nan, null.
bool is_missing_token(const std::string& cell);

RawSeries read_csv(std::istream& in, const CsvSchema& schema);
RawSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Most frequent spacing between consecutive timestamps, in minutes.
int nominal_interval(const RawSeries& series);

/// Cuts the series into midnight-aligned windows of `period_length` readings
/// and drops every window that is incomplete, off-grid, or has a missing
/// value or capacity.
ScenarioSet clean_and_slice(const RawSeries& series, Index period_length,
                            SliceStats* stats = nullptr);

ScenarioSet scale(const ScenarioSet& set, Scaling mode);
ScenarioSet scale(const ScenarioSet& set, Scaling mode,
                  const MatrixXd& capacity);

/// Raw values of a scaled set, using the per-reading provenance it carries.
MatrixXd unscale(const ScenarioSet& set);

/// Maps scaled values back to physical units with the set-level provenance
/// only (min/max or the reference capacity). Used for generated scenarios.
MatrixXd descale(const MatrixXd& values, const ScenarioSet& meta);

/// Seeded shuffle then partition; the validation part has
/// floor(N * validation_fraction) rows. Row order within each part follows
/// the input.
std::pair<ScenarioSet, ScenarioSet> split(const ScenarioSet& set,
                                          double validation_fraction,
                                          std::uint64_t seed);

ScenarioSet select_rows(const ScenarioSet& set,
                        const std::vector<Index>& rows);

/// Sidecar path for a scenario CSV: same stem, `.meta` extension.
std::filesystem::path metadata_path(const std::filesystem::path& csv);

void write_matrix_csv(std::ostream& out, const MatrixXd& data);
MatrixXd read_matrix_csv(std::istream& in);

/// Writes `csv` and its sidecar. A `# created ...` comment line is prepended
/// when `stamp` is set.
void write_scenarios(const ScenarioSet& set, const std::filesystem::path& csv,
                     bool stamp);
/// Reads a scenario CSV and its sidecar when present. Without a sidecar the
/// set is assumed to cover one day, unscaled.
ScenarioSet read_scenarios(const std::filesystem::path& csv);

std::string timestamp_comment();

}  // namespace pcflow

#endif  // PCFLOW_DATAIO_HPP
