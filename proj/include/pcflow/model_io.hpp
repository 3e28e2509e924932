#ifndef PCFLOW_MODEL_IO_HPP
#define PCFLOW_MODEL_IO_HPP

#include "pcflow/dataio.hpp"
#include "pcflow/flow.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace pcflow {

inline constexpr char kModelMagic[8] = {'P', 'C', 'F', 'L', 'O', 'W', 'M', 'D'};
inline constexpr std::uint32_t kModelMajorVersion = 1;
inline constexpr std::uint32_t kModelMinorVersion = 0;

// Binary layout is documented in docs/model_format.md.
void write_model(std::ostream& out, const FlowModel<double>& model);
FlowModel<double> read_model(std::istream& in);

void save_model(const FlowModel<double>& model, const std::filesystem::path& path);
FlowModel<double> load_model(const std::filesystem::path& path);

/// Draws n scenarios using the sampling stream of `seed`. The returned set
/// copies period/interval/scaling provenance from `like`.
ScenarioSet sample_scenarios(const FlowModel<double>& model, Index n, std::uint64_t seed,
                             const ScenarioSet& like);

}  // namespace pcflow

#endif  // PCFLOW_MODEL_IO_HPP
