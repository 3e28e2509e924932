#include "pcflow/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace pcflow {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ArgumentError("Adam epsilon must be > 0");
  if (early_stop_patience < 1) throw ArgumentError("patience must be >= 1");
}

double TrainLog::best_val_nll() const {
  if (best_epoch < 0) return std::numeric_limits<double>::quiet_NaN();
  return val_nll[static_cast<std::size_t>(best_epoch)];
}

void write_train_log(std::ostream& out, const TrainLog& log, bool stamp) {
  if (stamp) out << timestamp_comment() << '\n';
  out << "# best_epoch=" << log.best_epoch << '\n';
  out << "# diverged=" << (log.diverged ? 1 : 0) << '\n';
  if (log.diverged) out << "# divergence_reason=" << log.divergence_reason << '\n';
  for (const auto& w : log.warnings) out << "# warning=" << w << '\n';
  out << "epoch,train_nll,val_nll\n";
  for (std::size_t e = 0; e < log.train_nll.size(); ++e) {
    out << e << ',' << format_double(log.train_nll[e]) << ','
        << format_double(log.val_nll[e]) << '\n';
  }
}

void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state,
               const TrainConfig& config) {
  if (grads.size() != params.size()) throw ArgumentError("Adam: gradient size mismatch");
  if (state.first_moment.size() != params.size()) {
    state.first_moment = VectorXd::Zero(params.size());
    state.second_moment = VectorXd::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
  state.second_moment = b2 * state.second_moment + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.adam_epsilon);
}

NllResult nll_and_grads(const FlowModel<double>& model, const MatrixXd& batch) {
  if (batch.rows() < 1) throw ArgumentError("empty batch");
  const MatrixXd y = to_flow_space(model, batch.transpose());
  auto result = flow_nll_and_grad(model.layers, y, model.standardizer.log_det());
  if (!std::isfinite(result.nll)) {
    Index row = 0;
    for (; row < result.per_sample_nll.size(); ++row) {
      if (!std::isfinite(result.per_sample_nll(row))) break;
    }
    throw NumericError("diverged: non-finite NLL at batch row " + std::to_string(row));
  }
  return {result.nll, flatten(result.grads)};
}

double mean_nll(const FlowModel<double>& model, const MatrixXd& rows) {
  return -log_prob(model, rows.transpose()).mean();
}

FlowModel<double> build_model(const MatrixXd& train, const std::optional<Truncation>& pca,
                              const FlowArchitecture& arch, std::uint64_t seed) {
  FlowModel<double> model;
  model.data_dim = train.cols();
  if (pca) model.pca = truncate(fit_pca(train), *pca);
  const MatrixXd latent = model.pca ? project(*model.pca, train.transpose())
                                    : MatrixXd(train.transpose());
  model.standardizer = Standardizer<double>::fit(latent);
  Rng rng = SeedStreams{seed}.init();
  model.layers = make_coupling_stack<double>(model.flow_dim(), arch, rng);
  return model;
}

TrainResult train_flow(FlowModel<double> model, const MatrixXd& train, const MatrixXd& val,
                       const TrainConfig& config, bool tolerate_divergence) {
  config.validate();
  if (train.rows() < 1 || val.rows() < 1) throw ArgumentError("empty training or validation set");
  if (train.cols() != model.data_dim || val.cols() != model.data_dim) {
    throw ArgumentError("training data dimension does not match the model");
  }

  TrainLog log;
  const MatrixXd y_train = to_flow_space(model, train.transpose());
  const double constant = model.standardizer.log_det();

  if (model.layers.empty()) {
    log.warnings.push_back(
        "flow dimension 1: coupling layers cannot act, using the standardizer-only Gaussian");
    log.train_nll.push_back(mean_nll(model, train));
    log.val_nll.push_back(mean_nll(model, val));
    log.best_epoch = 0;
    return {std::move(model), std::move(log)};
  }

  VectorXd params = flatten(model.layers);
  VectorXd best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  AdamState adam;
  Rng shuffle_rng = SeedStreams{config.seed}.shuffle();

  const Index n = y_train.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  MatrixXd batch;

  auto record_divergence = [&](const std::string& reason) {
    if (!log.diverged) {
      log.diverged = true;
      log.divergence_reason = reason;
    }
  };

  Index since_best = 0;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, shuffle_rng);
    double epoch_sum = 0.0;
    bool blew_up = false;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index size = std::min(config.batch_size, n - start);
      batch.resize(y_train.rows(), size);
      for (Index j = 0; j < size; ++j) batch.col(j) = y_train.col(order[static_cast<std::size_t>(start + j)]);

      NllGradient<double> result;
      try {
        result = flow_nll_and_grad(model.layers, batch, constant);
      } catch (const NumericError& e) {
        blew_up = true;
        record_divergence(std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
        break;
      }
      VectorXd grads = flatten(result.grads);
      if (!std::isfinite(result.nll) || !grads.allFinite()) {
        blew_up = true;
        record_divergence("epoch " + std::to_string(epoch) + ": non-finite loss");
        break;
      }
      const double norm = grads.norm();
      if (norm > config.clip_norm) grads *= config.clip_norm / norm;
      adam_step(params, grads, adam, config);
      unflatten(model.layers, params);
      epoch_sum += result.nll * static_cast<double>(size);
    }
    if (blew_up) {
      if (!tolerate_divergence) {
        unflatten(model.layers, best_params);
        throw DivergedError("training diverged: " + log.divergence_reason, log);
      }
      break;
    }

    const double train_nll = epoch_sum / static_cast<double>(n);
    double val_nll = std::numeric_limits<double>::infinity();
    try {
      val_nll = mean_nll(model, val);
    } catch (const NumericError&) {
    }
    log.train_nll.push_back(train_nll);
    log.val_nll.push_back(val_nll);
    if (!std::isfinite(val_nll)) {
      record_divergence("epoch " + std::to_string(epoch) + ": non-finite validation NLL");
    }
    if (tolerate_divergence && train_nll - constant < config.runaway_nll) {
      record_divergence("epoch " + std::to_string(epoch) +
                        ": likelihood runaway (numerically singular Jacobian), flow-space NLL " +
                        format_double(train_nll - constant));
    }

    if (val_nll < best_val) {
      best_val = val_nll;
      best_params = params;
      log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  unflatten(model.layers, best_params);
  return {std::move(model), std::move(log)};
}

TrainResult fit_pcf(const ScenarioSet& train, const ScenarioSet& val, const Truncation& target,
                    const FlowArchitecture& arch, const TrainConfig& config) {
  if (train.data.cols() != val.data.cols()) throw ArgumentError("train/validation width mismatch");
  auto model = build_model(train.data, target, arch, config.seed);
  return train_flow(std::move(model), train.data, val.data, config, false);
}

TrainResult fit_fsnf(const ScenarioSet& train, const ScenarioSet& val,
                     const FlowArchitecture& arch, const TrainConfig& config) {
  if (train.data.cols() != val.data.cols()) throw ArgumentError("train/validation width mismatch");
  auto model = build_model(train.data, std::nullopt, arch, config.seed);
  return train_flow(std::move(model), train.data, val.data, config, true);
}

}  // namespace pcflow
