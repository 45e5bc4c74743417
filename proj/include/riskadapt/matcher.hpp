#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskadapt/corpus.hpp"

namespace riskadapt {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t pretrain_epochs = 20;
  std::size_t risk_epochs = 10;
  std::size_t batch_size = 32;
  std::size_t hidden = 32;
  AdamSettings adam;
  // phase-2 step size = learning_rate * risk_lr_scale
  double risk_lr_scale = 0.1;
  std::uint64_t seed = 7;

  void validate() const;  // throws PreconditionError
};

// Two-layer perceptron: input -> rectified hidden layer -> logistic output.
//
// Parameters live in one flat buffer laid out as
//   [ W1 (hidden x input, row major) | b1 (hidden) | w2 (hidden) | b2 ]
// and gradients use the same layout.
class MatcherModel {
 public:
  MatcherModel() = default;
  // All parameters zero.
  MatcherModel(std::size_t input, std::size_t hidden);
  // He-uniform first layer, Glorot-uniform output layer, zero biases.
  static MatcherModel initialized(std::size_t input, std::size_t hidden, std::uint64_t seed);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return hidden_ * input_; }
  std::size_t w2_offset() const { return hidden_ * input_ + hidden_; }
  std::size_t b2_offset() const { return hidden_ * input_ + 2 * hidden_; }

  // Output pre-activation before clamping.
  double logit(const FeatureVector& x) const;
  double predict_proba(const FeatureVector& x) const;
  int predict(const FeatureVector& x) const { return predict_proba(x) >= 0.5 ? 1 : 0; }

  friend bool operator==(const MatcherModel&, const MatcherModel&) = default;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

inline constexpr double kLogitClamp = 30.0;
inline constexpr double kProbabilityClamp = 1e-7;

// Per-instance weights of the log terms:
//   loss_i = -pos * log g(x_i) - neg * log(1 - g(x_i))
// Cross-entropy uses (y, 1-y); the risk loss uses (1 - VaR+, 1 - VaR-).
struct LogLossWeights {
  double pos = 0.0;
  double neg = 0.0;
};

std::vector<LogLossWeights> cross_entropy_weights(std::span<const int> labels);

// Mean weighted log-loss over the batch; natural log, probabilities clamped to
// [1e-7, 1 - 1e-7]. Throws on an empty batch or length mismatch.
double weighted_log_loss(const MatcherModel& model, std::span<const FeatureVector> xs,
                         std::span<const LogLossWeights> weights);

double cross_entropy_loss(const MatcherModel& model, std::span<const Example> batch);

// d(loss)/d(g) of one instance at probability g, including the clamp.
double log_loss_probability_derivative(double g, LogLossWeights w);

// Exact gradient of `weighted_log_loss`, laid out like the parameters.
std::vector<double> backward(const MatcherModel& model, std::span<const FeatureVector> xs,
                             std::span<const LogLossWeights> weights);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected adaptive-moment update in place.
void adam_step(std::span<double> params, AdamState& state, std::span<const double> gradient,
               double learning_rate, const AdamSettings& settings);

// One row of the metrics log: an epoch of pre-training or a risk iteration.
struct EpochRecord {
  std::string phase;  // "pretrain" | "risk"
  std::size_t index = 0;
  double loss = 0.0;       // mean mini-batch loss of the epoch
  double rank_loss = 0.0;  // risk iterations: ranking objective after refit
  double val_f1 = 0.0;
  std::optional<double> test_f1;
};

std::string format_metrics_log(std::span<const EpochRecord> log);

struct PretrainResult {
  MatcherModel model;  // best validation F1, earliest on ties
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  MatcherModel final_model;
  std::vector<EpochRecord> log;
};

// F1 of the thresholded predictions on labeled examples.
double f1_on(const MatcherModel& model, std::span<const Example> examples);
std::vector<int> predict_all(const MatcherModel& model, std::span<const FeatureVector> xs);

// Mini-batch cross-entropy training on `train` for config.pretrain_epochs
// epochs, reshuffled each epoch from config.seed. `scoring` (optional, labels
// included) only feeds the test_f1 column of the log.
PretrainResult pretrain(const MatcherModel& initial, std::span<const Example> train,
                        std::span<const Example> validation, const TrainConfig& config,
                        std::span<const Example> scoring = {});

std::string write_checkpoint(const MatcherModel& model);
MatcherModel parse_checkpoint(std::string_view text);

}  // namespace riskadapt
