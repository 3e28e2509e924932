#ifndef PCFLOW_TRAIN_HPP
#define PCFLOW_TRAIN_HPP

#include "pcflow/dataio.hpp"
#include "pcflow/flow.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pcflow {

struct TrainConfig {
  Index epochs = 1000;
  Index batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  Index early_stop_patience = 50;
  double validation_fraction = 0.2;
  double clip_norm = 100.0;
  /// A flow-space training NLL below this (nats per scenario, standardizer
  /// constant excluded) is reported as likelihood runaway by full-space
  /// training.
  double runaway_nll = -50.0;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  Index best_epoch = -1;
  bool diverged = false;
  std::string divergence_reason;
  std::vector<std::string> warnings;

  Index epochs_completed() const { return static_cast<Index>(train_nll.size()); }
  double best_val_nll() const;
};

/// TrainLog as CSV: `# key=value` header lines, then epoch,train_nll,val_nll.
void write_train_log(std::ostream& out, const TrainLog& log, bool stamp);

struct AdamState {
  VectorXd first_moment;
  VectorXd second_moment;
  long step = 0;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state,
               const TrainConfig& config);

struct NllResult {
  double nll = 0.0;
  VectorXd grads;  // flattened like flatten(model.layers)
};

/// Mean NLL of the given scenarios (rows) and its parameter gradient.
/// Throws NumericError naming the first offending row if the NLL is not
/// finite.
NllResult nll_and_grads(const FlowModel<double>& model, const MatrixXd& batch);

/// Mean NLL of scenario rows, no gradient.
double mean_nll(const FlowModel<double>& model, const MatrixXd& rows);

/// Untrained model: optional PCA fitted on `train`, standardizer fitted on
/// the training latents, Glorot-initialised couplings from the init stream.
FlowModel<double> build_model(const MatrixXd& train, const std::optional<Truncation>& pca,
                              const FlowArchitecture& arch, std::uint64_t seed);

struct TrainResult {
  FlowModel<double> model;
  TrainLog log;
};

class DivergedError : public NumericError {
 public:
  DivergedError(const std::string& what, TrainLog log)
      : NumericError(what), log_(std::move(log)) {}
  const TrainLog& log() const { return log_; }

 private:
  TrainLog log_;
};

/// Mini-batch Adam with early stopping; returns the best-validation
/// parameters. With `tolerate_divergence` a non-finite loss ends training
/// and is recorded instead of thrown, and a training NLL below
/// `runaway_nll` is recorded as divergence too.
TrainResult train_flow(FlowModel<double> model, const MatrixXd& train, const MatrixXd& val,
                       const TrainConfig& config, bool tolerate_divergence);

/// Principal component flow: PCA head fitted on `train` only.
TrainResult fit_pcf(const ScenarioSet& train, const ScenarioSet& val, const Truncation& target,
                    const FlowArchitecture& arch, const TrainConfig& config);

/// Full-space flow, no PCA head.
TrainResult fit_fsnf(const ScenarioSet& train, const ScenarioSet& val,
                     const FlowArchitecture& arch, const TrainConfig& config);

}  // namespace pcflow

#endif  // PCFLOW_TRAIN_HPP
