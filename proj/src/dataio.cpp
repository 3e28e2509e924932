#include "pcflow/dataio.hpp"

#include "pcflow/random.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace pcflow {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

int parse_int(const std::string& text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw DataError("timestamp too short");
  int value = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') {
      throw DataError("non-digit in timestamp '" + text + "'");
    }
    value = value * 10 + (text[i] - '0');
  }
  return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::size_t column_index(const std::vector<std::string>& header,
                         const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw DataError("schema error: column '" + name + "' not in header");
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::string to_string(Scaling scaling) {
  switch (scaling) {
    case Scaling::none:
      return "none";
    case Scaling::capacity_factor:
      return "capacity_factor";
    case Scaling::minmax:
      return "minmax";
  }
  return "none";
}

Scaling parse_scaling(const std::string& name) {
  if (name == "none") return Scaling::none;
  if (name == "capacity_factor") return Scaling::capacity_factor;
  if (name == "minmax") return Scaling::minmax;
  throw ArgumentError("unknown scaling '" + name + "'");
}

void ScenarioSet::validate() const {
  if (data.rows() < 2) throw DataError("scenario set needs at least 2 rows");
  if (data.cols() != period_length) {
    throw DataError("scenario width does not match period_length");
  }
  if (!data.allFinite()) throw DataError("scenario set contains missing values");
  if (scaling != Scaling::none && !generated) {
    constexpr double tol = 1e-9;
    if (data.minCoeff() < -tol || data.maxCoeff() > 1.0 + tol) {
      throw DataError("scaled values outside [0, 1]");
    }
  }
}

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  // YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM]
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    throw DataError("malformed timestamp '" + text + "'");
  }
  const int year = parse_int(text, 0, 4);
  const int month = parse_int(text, 5, 2);
  const int day = parse_int(text, 8, 2);
  const int hour = parse_int(text, 11, 2);
  const int minute = parse_int(text, 14, 2);
  std::size_t pos = 16;
  int second = 0;
  if (pos < text.size() && text[pos] == ':') {
    second = parse_int(text, pos + 1, 2);
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    }
  }
  int offset_minutes = 0;
  if (pos < text.size()) {
    const char sign = text[pos];
    if (sign == 'Z' && pos + 1 == text.size()) {
      // UTC
    } else if ((sign == '+' || sign == '-') && text.size() == pos + 6 &&
               text[pos + 3] == ':') {
      offset_minutes = parse_int(text, pos + 1, 2) * 60 + parse_int(text, pos + 4, 2);
      if (sign == '-') offset_minutes = -offset_minutes;
    } else {
      throw DataError("malformed timestamp '" + text + "'");
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year},
                           std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) {
    throw DataError("invalid date/time in timestamp '" + text + "'");
  }
  const std::int64_t days = sys_days(ymd).time_since_epoch().count();
  if (second != 0) {
    throw DataError("timestamp '" + text + "' is not on a whole minute");
  }
  return days * 1440 + hour * 60 + minute - offset_minutes;
}

bool is_missing_token(const std::string& cell) {
  const std::string t = trim(cell);
  return t.empty() || t == "NaN" || t == "nan" || t == "null";
}

RawSeries read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: header row required");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
    line = line.substr(3);  // UTF-8 BOM
  }
  const auto header = split_fields(line);
  const std::size_t time_idx = column_index(header, schema.time_col);
  const std::size_t value_idx = column_index(header, schema.value_col);
  std::optional<std::size_t> cap_idx;
  if (schema.capacity_col) cap_idx = column_index(header, *schema.capacity_col);

  auto read_cell = [](const std::string& cell, std::size_t line_no,
                      const std::string& col) -> std::optional<double> {
    if (is_missing_token(cell)) return std::nullopt;
    double v = 0.0;
    if (!parse_double(cell, v)) {
      throw DataError("line " + std::to_string(line_no) + ": bad number '" +
                      cell + "' in column '" + col + "'");
    }
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  };

  RawSeries series;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const std::size_t needed =
        std::max({time_idx, value_idx, cap_idx.value_or(0)}) + 1;
    if (fields.size() < needed) {
      throw DataError("line " + std::to_string(line_no) + ": too few fields");
    }
    std::int64_t t = 0;
    try {
      t = parse_timestamp(fields[time_idx]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!series.timestamps.empty() && t <= series.timestamps.back()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": timestamps not increasing");
    }
    series.timestamps.push_back(t);
    series.values.push_back(read_cell(fields[value_idx], line_no, schema.value_col));
    if (cap_idx) {
      series.capacity.push_back(
          read_cell(fields[*cap_idx], line_no, *schema.capacity_col));
    }
  }
  return series;
}

RawSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in, schema);
}

int nominal_interval(const RawSeries& series) {
  if (series.size() < 2) throw DataError("series too short to infer spacing");
  std::map<std::int64_t, std::size_t> counts;
  for (std::size_t i = 1; i < series.size(); ++i) {
    ++counts[series.timestamps[i] - series.timestamps[i - 1]];
  }
  const auto best = std::max_element(
      counts.begin(), counts.end(),
      [](const auto& a, const auto& b) { return a.second < b.second; });
  return static_cast<int>(best->first);
}

ScenarioSet clean_and_slice(const RawSeries& series, Index period_length,
                            SliceStats* stats) {
  if (series.values.size() != series.size() ||
      (series.has_capacity() && series.capacity.size() != series.size())) {
    throw DataError("series columns have different lengths");
  }
  if (period_length < 1) throw ArgumentError("period_length must be >= 1");
  const int interval = nominal_interval(series);
  const std::int64_t window_minutes = period_length * interval;
  if (window_minutes > 1440 || 1440 % window_minutes != 0) {
    throw ArgumentError("period_length * interval must divide a day");
  }

  struct Window {
    std::int64_t start = 0;
    std::vector<double> values;
    std::vector<double> capacity;
    Index filled = 0;
    bool bad = false;
  };
  const bool with_capacity = series.has_capacity();
  std::vector<Window> windows;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::int64_t t = series.timestamps[i];
    const std::int64_t start = floor_div(t, window_minutes) * window_minutes;
    if (windows.empty() || windows.back().start != start) {
      Window w;
      w.start = start;
      w.values.assign(static_cast<std::size_t>(period_length), 0.0);
      if (with_capacity) w.capacity.assign(static_cast<std::size_t>(period_length), 0.0);
      windows.push_back(std::move(w));
    }
    Window& w = windows.back();
    const std::int64_t offset = t - start;
    if (offset % interval != 0) {
      w.bad = true;
      continue;
    }
    const auto pos = static_cast<std::size_t>(offset / interval);
    const auto& value = series.values[i];
    if (!value || (with_capacity && !series.capacity[i])) {
      w.bad = true;
      continue;
    }
    w.values[pos] = *value;
    if (with_capacity) w.capacity[pos] = *series.capacity[i];
    ++w.filled;
  }

  std::vector<const Window*> kept;
  for (const auto& w : windows) {
    if (!w.bad && w.filled == period_length) {
      kept.push_back(&w);
    } else if (stats) {
      stats->dropped.push_back(w.start);
    }
  }
  if (stats) stats->windows_seen = windows.size();
  if (kept.size() < 2) {
    throw DataError("insufficient data: fewer than 2 complete windows");
  }

  ScenarioSet set;
  const auto n = static_cast<Index>(kept.size());
  set.period_length = period_length;
  set.interval_minutes = interval;
  set.data.resize(n, period_length);
  if (with_capacity) set.capacity.resize(n, period_length);
  for (Index r = 0; r < n; ++r) {
    const Window& w = *kept[static_cast<std::size_t>(r)];
    set.window_start.push_back(w.start);
    for (Index c = 0; c < period_length; ++c) {
      set.data(r, c) = w.values[static_cast<std::size_t>(c)];
      if (with_capacity) set.capacity(r, c) = w.capacity[static_cast<std::size_t>(c)];
    }
  }
  if (with_capacity) set.capacity_reference = set.capacity(n - 1, period_length - 1);
  return set;
}

ScenarioSet scale(const ScenarioSet& set, Scaling mode) {
  return scale(set, mode, set.capacity);
}

ScenarioSet scale(const ScenarioSet& set, Scaling mode, const MatrixXd& capacity) {
  if (set.scaling != Scaling::none) throw ArgumentError("set is already scaled");
  ScenarioSet out = set;
  out.scaling = mode;
  switch (mode) {
    case Scaling::none:
      break;
    case Scaling::capacity_factor: {
      if (capacity.rows() != set.data.rows() || capacity.cols() != set.data.cols()) {
        throw DataError("scaling error: capacity not aligned with scenarios");
      }
      if (!capacity.allFinite() || (capacity.array() <= 0.0).any()) {
        throw DataError("scaling error: capacity must be > 0 at every used timestamp");
      }
      out.capacity = capacity;
      out.capacity_reference = capacity(capacity.rows() - 1, capacity.cols() - 1);
      out.data = set.data.cwiseQuotient(capacity);
      break;
    }
    case Scaling::minmax: {
      out.min = set.data.minCoeff();
      out.max = set.data.maxCoeff();
      if (!(out.max > out.min)) {
        throw DataError("degenerate range: max equals min, cannot min-max scale");
      }
      out.data = (set.data.array() - out.min) / (out.max - out.min);
      break;
    }
  }
  out.validate();
  return out;
}

MatrixXd unscale(const ScenarioSet& set) {
  switch (set.scaling) {
    case Scaling::none:
      return set.data;
    case Scaling::capacity_factor:
      if (set.capacity.rows() != set.data.rows()) {
        throw DataError("capacity provenance missing; use descale()");
      }
      return set.data.cwiseProduct(set.capacity);
    case Scaling::minmax:
      return (set.data.array() * (set.max - set.min) + set.min).matrix();
  }
  return set.data;
}

MatrixXd descale(const MatrixXd& values, const ScenarioSet& meta) {
  switch (meta.scaling) {
    case Scaling::none:
      return values;
    case Scaling::capacity_factor:
      if (!(meta.capacity_reference > 0.0)) {
        throw DataError("metadata has no capacity_reference to de-scale with");
      }
      return values * meta.capacity_reference;
    case Scaling::minmax:
      return (values.array() * (meta.max - meta.min) + meta.min).matrix();
  }
  return values;
}

ScenarioSet select_rows(const ScenarioSet& set, const std::vector<Index>& rows) {
  ScenarioSet out = set;
  const auto n = static_cast<Index>(rows.size());
  out.data.resize(n, set.data.cols());
  if (set.capacity.rows() == set.data.rows()) out.capacity.resize(n, set.capacity.cols());
  out.window_start.clear();
  for (Index r = 0; r < n; ++r) {
    const Index src = rows[static_cast<std::size_t>(r)];
    out.data.row(r) = set.data.row(src);
    if (out.capacity.rows() == n && n > 0) out.capacity.row(r) = set.capacity.row(src);
    if (!set.window_start.empty()) {
      out.window_start.push_back(set.window_start[static_cast<std::size_t>(src)]);
    }
  }
  return out;
}

std::pair<ScenarioSet, ScenarioSet> split(const ScenarioSet& set,
                                          double validation_fraction,
                                          std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in (0, 1)");
  }
  const Index n = set.rows();
  const auto n_val =
      static_cast<Index>(std::floor(static_cast<double>(n) * validation_fraction + 1e-9));
  if (n_val < 1 || n_val >= n) {
    throw ArgumentError("validation fraction leaves an empty partition");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  shuffle_in_place(order, rng);

  std::vector<Index> val(order.begin(), order.begin() + n_val);
  std::vector<Index> train(order.begin() + n_val, order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {select_rows(set, train), select_rows(set, val)};
}

std::filesystem::path metadata_path(const std::filesystem::path& csv) {
  auto meta = csv;
  meta.replace_extension(".meta");
  return meta;
}

std::string timestamp_comment() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << "# created " << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_matrix_csv(std::ostream& out, const MatrixXd& data) {
  char buf[32];
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index c = 0; c < data.cols(); ++c) {
      if (c) out << ',';
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), data(r, c));
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<double> row;
    for (const auto& cell : split_fields(t)) {
      double v = 0.0;
      if (!parse_double(cell, v)) {
        throw DataError("line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("line " + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  MatrixXd data(static_cast<Index>(rows.size()),
                rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index c = 0; c < data.cols(); ++c) {
      data(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  return data;
}

void write_scenarios(const ScenarioSet& set, const std::filesystem::path& csv,
                     bool stamp) {
  {
    std::ofstream out(csv);
    if (!out) throw DataError("cannot write " + csv.string());
    if (stamp) out << timestamp_comment() << '\n';
    write_matrix_csv(out, set.data);
  }
  std::ofstream meta(metadata_path(csv));
  if (!meta) throw DataError("cannot write " + metadata_path(csv).string());
  meta << std::setprecision(17);
  meta << "period_length=" << set.period_length << '\n'
       << "interval_minutes=" << set.interval_minutes << '\n'
       << "scaling=" << to_string(set.scaling) << '\n'
       << "min=" << set.min << '\n'
       << "max=" << set.max << '\n';
  if (set.scaling == Scaling::capacity_factor) {
    meta << "capacity_reference=" << set.capacity_reference << '\n';
  }
  if (set.generated) meta << "generated=1\n";
}

ScenarioSet read_scenarios(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open " + csv.string());
  ScenarioSet set;
  set.data = read_matrix_csv(in);
  set.period_length = set.data.cols();
  set.interval_minutes = set.period_length > 0 ? static_cast<int>(1440 / set.period_length) : 0;

  std::ifstream meta(metadata_path(csv));
  std::string line;
  while (meta && std::getline(meta, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("bad metadata line '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    double number = 0.0;
    if (key == "scaling") {
      set.scaling = parse_scaling(value);
      continue;
    }
    if (!parse_double(value, number)) {
      throw DataError("bad metadata value for '" + key + "'");
    }
    if (key == "period_length") {
      set.period_length = static_cast<Index>(number);
    } else if (key == "interval_minutes") {
      set.interval_minutes = static_cast<int>(number);
    } else if (key == "min") {
      set.min = number;
    } else if (key == "max") {
      set.max = number;
    } else if (key == "capacity_reference") {
      set.capacity_reference = number;
    } else if (key == "generated") {
      set.generated = number != 0.0;
    }
  }
  set.validate();
  return set;
}

}  // namespace pcflow
