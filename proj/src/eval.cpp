#include "pcflow/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>

namespace pcflow {

namespace {

constexpr double kExactKsLimit = 1e6;

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

// max |i*n - j*m| over the merged ECDF steps; the statistic is this over m*n.
std::int64_t ks_gap(const std::vector<double>& a, const std::vector<double>& b) {
  const auto m = static_cast<std::int64_t>(a.size());
  const auto n = static_cast<std::int64_t>(b.size());
  std::int64_t i = 0, j = 0, best = 0;
  while (i < m && j < n) {
    const double x = std::min(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
    while (i < m && a[static_cast<std::size_t>(i)] <= x) ++i;
    while (j < n && b[static_cast<std::size_t>(j)] <= x) ++j;
    best = std::max(best, std::abs(i * n - j * m));
  }
  return best;
}

// P(D >= gap / (m n)) as 1 - P(path stays strictly inside the band).
double exact_tail(std::int64_t m, std::int64_t n, std::int64_t gap) {
  if (gap <= 0) return 1.0;
  std::vector<double> row(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> next(static_cast<std::size_t>(n + 1), 0.0);
  auto inside = [&](std::int64_t i, std::int64_t j) { return std::abs(i * n - j * m) < gap; };
  // row[j] holds the probability of reaching (i, j) without leaving the band.
  row[0] = 1.0;
  for (std::int64_t i = 0; i <= m; ++i) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::int64_t j = 0; j <= n; ++j) {
      const double p = row[static_cast<std::size_t>(j)];
      if (p == 0.0) continue;
      const double remaining = static_cast<double>(m - i + n - j);
      if (remaining == 0.0) continue;
      if (j < n && inside(i, j + 1)) {
        row[static_cast<std::size_t>(j + 1)] += p * static_cast<double>(n - j) / remaining;
      }
      if (i < m && inside(i + 1, j)) {
        next[static_cast<std::size_t>(j)] += p * static_cast<double>(m - i) / remaining;
      }
    }
    if (i == m) break;
    std::swap(row, next);
  }
  const double stay = row[static_cast<std::size_t>(n)];
  return std::clamp(1.0 - stay, 0.0, 1.0);
}

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::vector<double> flatten_rows(const MatrixXd& data) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  for (Index r = 0; r < data.rows(); ++r)
    for (Index c = 0; c < data.cols(); ++c) out.push_back(data(r, c));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string clock_label(int minutes) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw ArgumentError("KDE needs at least 2 samples");
  const auto sorted = sorted_copy(samples);
  const double n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  if (!(spread > 0.0)) throw ArgumentError("KDE bandwidth: samples have zero spread");
  return 0.9 * spread * std::pow(n, -0.2);
}

std::vector<double> kde_grid(std::span<const double> samples, double bandwidth,
                             std::size_t points) {
  if (samples.empty() || points < 2) throw ArgumentError("KDE grid needs samples and >= 2 points");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const double a = *lo - 3.0 * bandwidth;
  const double b = *hi + 3.0 * bandwidth;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

std::vector<double> kde_pdf(std::span<const double> samples, std::span<const double> grid,
                            std::optional<double> bandwidth) {
  if (samples.size() < 2) throw ArgumentError("KDE needs at least 2 samples");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  if (!(h > 0.0)) throw ArgumentError("KDE bandwidth must be > 0");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h *
                             std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> density(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (double s : samples) {
      const double u = (grid[g] - s) / h;
      sum += std::exp(-0.5 * u * u);
    }
    density[g] = sum * norm;
  }
  return density;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("KS test needs non-empty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  return static_cast<double>(ks_gap(sa, sb)) /
         (static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
}

double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double ks_exact_p_value(std::size_t m, std::size_t n, double d) {
  const auto mi = static_cast<std::int64_t>(m);
  const auto ni = static_cast<std::int64_t>(n);
  const auto gap = static_cast<std::int64_t>(std::llround(d * static_cast<double>(mi * ni)));
  return exact_tail(mi, ni, gap);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("KS test needs non-empty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  const auto m = static_cast<std::int64_t>(sa.size());
  const auto n = static_cast<std::int64_t>(sb.size());
  const std::int64_t gap = ks_gap(sa, sb);
  KsResult out;
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  out.statistic = static_cast<double>(gap) / mn;
  if (mn <= kExactKsLimit) {
    out.p_value = exact_tail(m, n, gap);
  } else {
    const double n_eff = mn / static_cast<double>(m + n);
    out.p_value = kolmogorov_tail(std::sqrt(n_eff) * out.statistic);
  }
  return out;
}

Psd welch(std::span<const double> signal, double sample_rate, const WelchOptions& options) {
  const auto total = static_cast<Index>(signal.size());
  const Index len = options.segment_length > 0 ? options.segment_length : total / 2;
  if (len < 1 || len > total) throw ArgumentError("Welch segment longer than the scenario");
  if (!(options.overlap_fraction >= 0.0 && options.overlap_fraction <= 0.9)) {
    throw ArgumentError("Welch overlap must lie in [0, 0.9]");
  }
  const auto overlap = static_cast<Index>(std::floor(options.overlap_fraction * static_cast<double>(len)));
  const Index step = std::max<Index>(len - overlap, 1);

  std::vector<double> window(static_cast<std::size_t>(len), 1.0);
  if (options.window == WindowKind::hann) {
    for (Index i = 0; i < len; ++i) {
      window[static_cast<std::size_t>(i)] =
          0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
    }
  }
  double energy = 0.0;
  for (double w : window) energy += w * w;

  std::vector<double> cos_table(static_cast<std::size_t>(len)), sin_table(static_cast<std::size_t>(len));
  for (Index i = 0; i < len; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len);
    cos_table[static_cast<std::size_t>(i)] = std::cos(angle);
    sin_table[static_cast<std::size_t>(i)] = std::sin(angle);
  }

  const Index bins = len / 2 + 1;
  Psd out;
  out.frequency.resize(static_cast<std::size_t>(bins));
  out.power.assign(static_cast<std::size_t>(bins), 0.0);
  for (Index k = 0; k < bins; ++k) {
    out.frequency[static_cast<std::size_t>(k)] = static_cast<double>(k) * sample_rate / static_cast<double>(len);
  }

  Index segments = 0;
  std::vector<double> buf(static_cast<std::size_t>(len));
  for (Index start = 0; start + len <= total; start += step, ++segments) {
    for (Index i = 0; i < len; ++i) {
      buf[static_cast<std::size_t>(i)] =
          signal[static_cast<std::size_t>(start + i)] * window[static_cast<std::size_t>(i)];
    }
    for (Index k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (Index i = 0; i < len; ++i) {
        const auto idx = static_cast<std::size_t>((k * i) % len);
        re += buf[static_cast<std::size_t>(i)] * cos_table[idx];
        im -= buf[static_cast<std::size_t>(i)] * sin_table[idx];
      }
      double p = (re * re + im * im) / (sample_rate * energy);
      const bool nyquist = (len % 2 == 0) && (k == len / 2);
      if (k != 0 && !nyquist) p *= 2.0;
      out.power[static_cast<std::size_t>(k)] += p;
    }
  }
  for (double& p : out.power) p /= static_cast<double>(segments);
  return out;
}

Psd welch_psd(const ScenarioSet& scenarios, const WelchOptions& options) {
  if (scenarios.rows() < 1) throw ArgumentError("Welch PSD needs at least one scenario");
  if (scenarios.interval_minutes <= 0) throw ArgumentError("scenario interval must be > 0");
  const double rate = 60.0 / static_cast<double>(scenarios.interval_minutes);
  Psd mean;
  std::vector<double> row(static_cast<std::size_t>(scenarios.data.cols()));
  for (Index r = 0; r < scenarios.rows(); ++r) {
    for (Index c = 0; c < scenarios.data.cols(); ++c) row[static_cast<std::size_t>(c)] = scenarios.data(r, c);
    Psd one = welch(row, rate, options);
    if (r == 0) {
      mean = std::move(one);
    } else {
      for (std::size_t k = 0; k < mean.power.size(); ++k) mean.power[k] += one.power[k];
    }
  }
  for (double& p : mean.power) p /= static_cast<double>(scenarios.rows());
  return mean;
}

std::vector<std::pair<double, Index>> cev_report(const PcaDecomposition<double>& decomposition) {
  std::vector<std::pair<double, Index>> table;
  for (double threshold : kCevThresholds) {
    table.emplace_back(threshold, components_for_cev(decomposition.singular_values, threshold));
  }
  return table;
}

MarginalStats marginal_stats(const ScenarioSet& set, int from_minute, int to_minute) {
  if (from_minute < 0 || to_minute >= 1440 || from_minute > to_minute) {
    throw ArgumentError("clock window must lie within one day");
  }
  if (set.interval_minutes <= 0) throw ArgumentError("scenario interval must be > 0");
  MarginalStats out;
  const Index n = set.rows();
  for (Index c = 0; c < set.data.cols(); ++c) {
    const int clock = static_cast<int>((c * set.interval_minutes) % 1440);
    if (clock < from_minute || clock > to_minute) continue;
    double sum = 0.0;
    for (Index r = 0; r < n; ++r) sum += set.data(r, c);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Index r = 0; r < n; ++r) ss += (set.data(r, c) - mean) * (set.data(r, c) - mean);
    out.columns.push_back(c);
    out.clock_minutes.push_back(clock);
    out.mean.push_back(mean);
    out.variance.push_back(n > 1 ? ss / static_cast<double>(n - 1) : 0.0);
  }
  if (out.columns.empty()) throw ArgumentError("clock window selects no time steps");
  return out;
}

EvalReport evaluate(const ScenarioSet& historical, const ScenarioSet& generated,
                    const EvalOptions& options) {
  if (historical.data.cols() != generated.data.cols()) {
    throw ArgumentError("historical and generated scenarios differ in length");
  }
  EvalReport report;
  const auto pooled_h = flatten_rows(historical.data);
  const auto pooled_g = flatten_rows(generated.data);

  report.bandwidth_historical = options.bandwidth ? *options.bandwidth : silverman_bandwidth(pooled_h);
  report.bandwidth_generated = options.bandwidth ? *options.bandwidth : silverman_bandwidth(pooled_g);
  std::vector<double> both = pooled_h;
  both.insert(both.end(), pooled_g.begin(), pooled_g.end());
  report.kde_grid = kde_grid(both, std::max(report.bandwidth_historical, report.bandwidth_generated),
                             options.kde_points);
  report.kde_historical = kde_pdf(pooled_h, report.kde_grid, report.bandwidth_historical);
  report.kde_generated = kde_pdf(pooled_g, report.kde_grid, report.bandwidth_generated);

  report.ks = ks_two_sample(pooled_h, pooled_g);
  report.ks_exact = static_cast<double>(pooled_h.size()) * static_cast<double>(pooled_g.size()) <= kExactKsLimit;

  ScenarioSet gen = generated;
  if (gen.interval_minutes <= 0) gen.interval_minutes = historical.interval_minutes;
  report.psd_historical = welch_psd(historical, options.welch);
  report.psd_generated = welch_psd(gen, options.welch);

  report.cev_table = cev_report(fit_pca(historical.data));
  report.marginals_historical = marginal_stats(historical, options.clock_from, options.clock_to);
  report.marginals_generated = marginal_stats(gen, options.clock_from, options.clock_to);
  return report;
}

void write_report(const EvalReport& report, const EvalOptions& options,
                  const std::filesystem::path& dir, bool stamp) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    if (stamp) out << timestamp_comment() << '\n';
    return out;
  };
  {
    auto out = open("kde.csv");
    out << "value,density_historical,density_generated\n";
    for (std::size_t i = 0; i < report.kde_grid.size(); ++i) {
      out << fmt(report.kde_grid[i]) << ',' << fmt(report.kde_historical[i]) << ','
          << fmt(report.kde_generated[i]) << '\n';
    }
  }
  {
    auto out = open("psd.csv");
    out << "frequency_per_hour,power_historical,power_generated\n";
    for (std::size_t i = 0; i < report.psd_historical.frequency.size(); ++i) {
      out << fmt(report.psd_historical.frequency[i]) << ',' << fmt(report.psd_historical.power[i])
          << ',' << fmt(report.psd_generated.power[i]) << '\n';
    }
  }
  {
    auto out = open("ks.txt");
    out << "statistic=" << fmt(report.ks.statistic) << '\n'
        << "p_value=" << fmt(report.ks.p_value) << '\n'
        << "method=" << (report.ks_exact ? "exact" : "asymptotic") << '\n';
  }
  {
    auto out = open("cev.csv");
    out << "threshold,components\n";
    for (const auto& [threshold, m] : report.cev_table) out << fmt(threshold) << ',' << m << '\n';
  }
  {
    auto out = open("marginals.csv");
    out << "clock,mean_historical,variance_historical,mean_generated,variance_generated\n";
    const auto& h = report.marginals_historical;
    const auto& g = report.marginals_generated;
    for (std::size_t i = 0; i < h.columns.size(); ++i) {
      out << clock_label(h.clock_minutes[i]) << ',' << fmt(h.mean[i]) << ',' << fmt(h.variance[i])
          << ',' << fmt(g.mean[i]) << ',' << fmt(g.variance[i]) << '\n';
    }
  }
  {
    auto out = open("summary.txt");
    const Index seg = options.welch.segment_length;
    out << "# settings (defaults are marked)\n"
        << "kde_bandwidth=" << (options.bandwidth ? fmt(*options.bandwidth) : "silverman (default)")
        << '\n'
        << "kde_points=" << options.kde_points << '\n'
        << "ks_pooling=all time steps of all scenarios (default)\n"
        << "welch_window=" << (options.welch.window == WindowKind::hann ? "hann" : "rectangular")
        << '\n'
        << "welch_segment_length=" << (seg > 0 ? std::to_string(seg) : "D/2 (default)") << '\n'
        << "welch_overlap=" << fmt(options.welch.overlap_fraction) << '\n'
        << "# results\n"
        << "bandwidth_historical=" << fmt(report.bandwidth_historical) << '\n'
        << "bandwidth_generated=" << fmt(report.bandwidth_generated) << '\n'
        << "ks_statistic=" << fmt(report.ks.statistic) << '\n'
        << "ks_p_value=" << fmt(report.ks.p_value) << '\n';
    for (const auto& [threshold, m] : report.cev_table) {
      out << "cev_" << fmt(threshold) << '=' << m << '\n';
    }
  }
}

}  // namespace pcflow
