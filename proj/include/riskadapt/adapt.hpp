#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskadapt/matcher.hpp"
#include "riskadapt/risk_model.hpp"
#include "riskadapt/rules.hpp"

namespace riskadapt {

// Per test pair weights of the risk loss, fixed for one iteration:
// pos = 1 - VaR+, neg = 1 - VaR-.
struct RiskWeights {
  std::size_t iteration = 0;
  std::vector<LogLossWeights> weights;
};

RiskWeights risk_weights(const RiskModel& model, std::span<const RiskInstance> test, std::size_t iteration);

// Mean over the test pairs of -(1-VaR+) log g - (1-VaR-) log(1-g).
double risk_loss(const MatcherModel& model, std::span<const FeatureVector> test, const RiskWeights& weights);

// What the risk model says about one pair.
struct PairAnalysis {
  double mu_hat = 0.0;
  double sigma_hat = 0.0;  // classifier feature std from its confidence bin
  double mu = 0.0;
  double sigma = 0.0;
  double var_plus = 0.0;
  double var_minus = 0.0;
  double w_hat_share = 0.0;  // classifier weight over the normalization mass N
};

PairAnalysis analyze_pair(const RiskModel& model, const RiskInstance& instance);

enum class Outcome { tp, tn, fp, fn };
Outcome outcome_of(int predicted, int truth);
const char* outcome_name(Outcome o);

// Supporters of a mispredicted pair: correctly predicted pairs of the opposite
// predicted class that the risk model ranks below it by more than the simple
// cost estimate. For a false negative i and a true positive j,
//   VaR-(i) - VaR+(j) > delta_c_fn,
// with delta_c_fn the mean classifier weight share over the true positives;
// false positives mirror this against the true negatives.
struct SupportSummary {
  std::vector<std::size_t> supporters;  // per pair, 0 for correct predictions
  double delta_c_fn = 0.0;
  double delta_c_fp = 0.0;
};

SupportSummary count_supporters(std::span<const PairAnalysis> analysis, std::span<const int> predicted,
                                std::span<const int> truth);

// Predictions of one classifier on the test pairs, together with the risk
// analysis that drove the iteration starting from it.
struct LedgerSnapshot {
  std::size_t iteration = 0;
  std::vector<int> predicted;
  std::vector<PairAnalysis> analysis;
};

// Evaluation-side record of every iteration. Holds the test ground truth; the
// training path never reads it.
class FlipLedger {
 public:
  FlipLedger() = default;
  FlipLedger(std::vector<std::string> ids, std::vector<int> truth);

  void record(LedgerSnapshot snapshot);
  const std::vector<LedgerSnapshot>& snapshots() const { return snapshots_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<int>& truth() const { return truth_; }

 private:
  std::vector<std::string> ids_;
  std::vector<int> truth_;
  std::vector<LedgerSnapshot> snapshots_;
};

inline constexpr std::size_t kSupporterThreshold = 100;

struct FlipCount {
  std::size_t total = 0;
  std::size_t flipped = 0;
};

struct FlipReport {
  std::size_t iteration = 0;
  std::array<FlipCount, 4> by_outcome{};  // indexed by Outcome
  // [0] fewer than 100 supporters, [1] at least 100
  std::array<FlipCount, 2> fn_by_support{};
  std::array<FlipCount, 2> fp_by_support{};
  double delta_c_fn = 0.0;
  double delta_c_fp = 0.0;
};

// Transitions between snapshots k and k+1. Throws PreconditionError when the
// ledger has fewer than k+2 snapshots.
FlipReport flip_report(const FlipLedger& ledger, std::size_t k);
std::string format_flip_report(const FlipReport& report);

struct AdaptConfig {
  TrainConfig train;  // train.risk_epochs = number of risk iterations
  RuleParams rules;
  RankFitConfig rank;
  double theta = 0.975;
  std::size_t bins = kDefaultBins;

  void validate() const;
};

// Unlabeled view of the data the optimizer is allowed to see.
struct TrainingView {
  std::span<const Example> train;
  std::span<const Example> validation;
  std::vector<std::string> test_ids;
  std::vector<FeatureVector> test;
};

TrainingView training_view(const DatasetSplit& split);

struct IterationState {
  MatcherModel classifier;
  RiskModel risk;
  AdamState optimizer;
};

struct IterationResult {
  IterationState state;
  RiskWeights weights;   // exactly what the epoch used
  double loss = 0.0;     // mean mini-batch risk loss
  double rank_loss = 0.0;
  bool refit = false;    // false when the ranking refit was skipped
  LedgerSnapshot snapshot;  // predictions of the incoming classifier
};

// One pass of the alternating loop: score validation and test with the current
// classifier, recalibrate and refit the risk model on validation, freeze the
// risk weights on test, then one mini-batch epoch of the risk loss.
IterationResult risk_iteration(const IterationState& state, const TrainingView& view, const AdaptConfig& config,
                               std::size_t k);

struct AdaptResult {
  MatcherModel classifier;  // last risk iteration
  MatcherModel pretrained;  // best-on-validation pre-training model
  RiskModel risk;
  FlipLedger ledger;
  std::vector<EpochRecord> log;
};

// Pre-training followed by config.train.risk_epochs risk iterations.
AdaptResult adaptive_train(const DatasetSplit& split, const AdaptConfig& config);

// Phase 2 only, starting from a pre-trained classifier.
AdaptResult fine_tune(const MatcherModel& pretrained, const DatasetSplit& split, const AdaptConfig& config);

// Risk model for a classifier: rules from train, calibration and ranking fit on
// validation. The fit is skipped when the classifier is perfect or hopeless
// on validation.
RiskModel build_risk_model(const MatcherModel& classifier, const TrainingView& view, const AdaptConfig& config,
                           std::vector<RiskFeature> rules);

}  // namespace riskadapt
