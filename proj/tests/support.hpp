#ifndef PCFLOW_TESTS_SUPPORT_HPP
#define PCFLOW_TESTS_SUPPORT_HPP

#include "pcflow/dataio.hpp"
#include "pcflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

namespace pcflow::fixtures {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("pcflow_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Clear-sky-like PV day: zero outside [sunrise, sunset), a noisy sine
/// bump in between, clipped to [0, 1]. The night columns are exactly 0.
inline MatrixXd pv_like(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  MatrixXd out = MatrixXd::Zero(n, d);
  const Index rise = d / 4;
  const Index set = 3 * d / 4;
  for (Index r = 0; r < n; ++r) {
    const double amp = 0.3 + 0.6 * unit(rng);
    const double width = 0.8 + 0.4 * unit(rng);
    for (Index c = rise; c < set; ++c) {
      const double phase = static_cast<double>(c - rise) / static_cast<double>(set - rise);
      double v = amp * std::sin(std::numbers::pi * std::min(1.0, phase * width));
      v *= 1.0 + 0.05 * noise(rng);
      out(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

inline ScenarioSet pv_like_set(Index n, Index d, std::uint64_t seed) {
  ScenarioSet set;
  set.data = pv_like(n, d, seed);
  set.period_length = d;
  set.interval_minutes = static_cast<int>(1440 / d);
  set.scaling = Scaling::capacity_factor;
  set.capacity_reference = 1.0;
  return set;
}

/// Raw PV-like CSV with timestamp, power and capacity columns, 15-minute
/// readings starting 2015-01-01T00:00Z.
inline void write_pv_csv(const std::filesystem::path& path, int days, std::uint64_t seed,
                         double capacity = 2000.0) {
  const MatrixXd cf = pv_like(days, 96, seed);
  std::ofstream out(path);
  out.precision(17);
  out << "timestamp,power,capacity\n";
  const std::int64_t start = 1420070400 / 60;  // 2015-01-01T00:00Z in minutes
  for (Index r = 0; r < cf.rows(); ++r) {
    for (Index c = 0; c < cf.cols(); ++c) {
      const std::time_t t = static_cast<std::time_t>((start + (r * 96 + c) * 15) * 60);
      std::tm utc{};
      gmtime_r(&t, &utc);
      char stamp[32];
      std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
      out << stamp << ',' << cf(r, c) * capacity << ',' << capacity << '\n';
    }
  }
}

}  // namespace pcflow::fixtures

#endif  // PCFLOW_TESTS_SUPPORT_HPP
