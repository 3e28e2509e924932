#ifndef PCFLOW_EVAL_HPP
#define PCFLOW_EVAL_HPP

#include "pcflow/dataio.hpp"
#include "pcflow/pca.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace pcflow {

/// Gaussian-kernel density at each grid point. Without a bandwidth,
/// Silverman's rule 0.9 * min(std, IQR / 1.34) * n^(-1/5) is used, falling
/// back to std alone when the IQR is zero.
std::vector<double> kde_pdf(std::span<const double> samples, std::span<const double> grid,
                            std::optional<double> bandwidth = std::nullopt);

double silverman_bandwidth(std::span<const double> samples);

/// `points` evenly spaced values over [min - 3h, max + 3h].
std::vector<double> kde_grid(std::span<const double> samples, double bandwidth,
                             std::size_t points = 512);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test. The p-value is exact (lattice path
/// count) when n_a * n_b <= 1e6, otherwise the asymptotic Kolmogorov tail
/// with n_eff = n_a n_b / (n_a + n_b).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// sup |ECDF_a - ECDF_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_tail(double lambda);

/// P(D >= d) for sample sizes m, n under the null, by counting lattice
/// paths that stay strictly inside the band |i/m - j/n| < d.
double ks_exact_p_value(std::size_t m, std::size_t n, double d);

enum class WindowKind { hann, rectangular };

struct WelchOptions {
  Index segment_length = 0;  // 0: half the scenario length
  double overlap_fraction = 0.5;
  WindowKind window = WindowKind::hann;
};

struct Psd {
  std::vector<double> frequency;  // cycles per hour
  std::vector<double> power;
};

/// One-sided Welch estimate of a single signal; `sample_rate` in samples
/// per hour. No detrending.
Psd welch(std::span<const double> signal, double sample_rate, const WelchOptions& options);

/// Welch PSD per scenario, averaged over scenarios.
Psd welch_psd(const ScenarioSet& scenarios, const WelchOptions& options);

inline constexpr double kCevThresholds[] = {0.99, 0.999, 0.9999, 1.0};

/// Threshold -> retained component count for each of kCevThresholds.
std::vector<std::pair<double, Index>> cev_report(const PcaDecomposition<double>& decomposition);

struct MarginalStats {
  std::vector<Index> columns;
  std::vector<int> clock_minutes;
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
};

/// Column-wise mean and variance for columns whose clock time (minutes
/// after midnight) lies in [from_minute, to_minute].
MarginalStats marginal_stats(const ScenarioSet& set, int from_minute, int to_minute);

struct EvalOptions {
  WelchOptions welch;
  std::optional<double> bandwidth;
  std::size_t kde_points = 512;
  int clock_from = 0;
  int clock_to = 240;
};

struct EvalReport {
  std::vector<double> kde_grid;
  std::vector<double> kde_historical;
  std::vector<double> kde_generated;
  double bandwidth_historical = 0.0;
  double bandwidth_generated = 0.0;
  KsResult ks;
  bool ks_exact = false;
  Psd psd_historical;
  Psd psd_generated;
  std::vector<std::pair<double, Index>> cev_table;
  MarginalStats marginals_historical;
  MarginalStats marginals_generated;
};

EvalReport evaluate(const ScenarioSet& historical, const ScenarioSet& generated,
                    const EvalOptions& options);

/// kde.csv, psd.csv, ks.txt, cev.csv, marginals.csv and summary.txt.
void write_report(const EvalReport& report, const EvalOptions& options,
                  const std::filesystem::path& dir, bool stamp);

}  // namespace pcflow

#endif  // PCFLOW_EVAL_HPP
