#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskadapt/rules.hpp"

namespace riskadapt {

inline constexpr std::size_t kDefaultBins = 10;
inline constexpr double kBinVarianceFloor = 1e-4;
inline constexpr double kDnnWeightFloor = 1e-3;

// Classifier output as a risk feature: its expectation is the output itself,
// its variance is looked up from equal-width confidence bins calibrated on
// labeled validation data, and its weight grows with confidence.
struct DnnRiskFeature {
  std::vector<double> sigma2_hat;  // per bin
  double u = 1.0;                  // weight scale

  std::size_t bins() const { return sigma2_hat.size(); }
  std::size_t bin_of(double mu_hat) const;
  double variance(double mu_hat) const { return sigma2_hat[bin_of(mu_hat)]; }
  // u * 2|mu_hat - 0.5| + 1e-3
  double weight(double mu_hat) const;

  friend bool operator==(const DnnRiskFeature&, const DnnRiskFeature&) = default;
};

// Per bin: Bernoulli variance of the labels falling in it, floored at 1e-4.
// An empty bin takes the mean of the nearest non-empty bin on each side (or
// the one side that exists). Throws on empty input, length mismatch, or a
// single label class.
DnnRiskFeature dnn_feature_fit(std::span<const double> mu_hat, std::span<const int> labels,
                               std::size_t bins = kDefaultBins, double u = 1.0);

struct EquivalenceDistribution {
  double mu = 0.5;
  double sigma2 = 0.0;
  double sigma() const;
};

struct RiskScore {
  double var_plus = 0.0;
  double var_minus = 0.0;
};

struct RiskModel {
  std::vector<RiskFeature> features;
  std::vector<double> weights;  // one per feature, >= 0
  DnnRiskFeature dnn;
  double theta = 0.975;
  double k = 2.0;

  // Unit weights, k derived from theta.
  static RiskModel create(std::vector<RiskFeature> features, DnnRiskFeature dnn, double theta = 0.975);
  void validate() const;
  friend bool operator==(const RiskModel&, const RiskModel&) = default;
};

// 2.0 exactly at 0.975, otherwise the standard normal theta-quantile.
double quantile_multiplier(double theta);

// Weight-normalized mixture of the active rule features and the classifier:
//   N      = sum_j z_j w_j + w_hat
//   mu     = (sum_j z_j w_j mu_j + w_hat mu_hat) / N
//   sigma2 = (sum_j z_j w_j^2 s_j + w_hat^2 s_hat) / N^2
// Requires w_hat > 0 and equal lengths.
EquivalenceDistribution combine(std::span<const std::uint8_t> z, std::span<const double> w,
                                std::span<const double> mu_f, std::span<const double> sigma2_f, double w_hat,
                                double mu_hat, double sigma2_hat);

EquivalenceDistribution aggregate(const RiskModel& model, std::span<const std::uint8_t> z, double mu_hat);

// var_plus = clamp(1 - (mu - k sigma)), var_minus = clamp(mu + k sigma)
RiskScore score_var(const EquivalenceDistribution& dist, double k);
inline RiskScore score_var(const EquivalenceDistribution& dist, const RiskModel& model) {
  return score_var(dist, model.k);
}

// Risk of the label the classifier assigns: VaR+ for a predicted match
// (mu_hat >= 0.5), VaR- otherwise.
double misprediction_risk(const RiskScore& score, double mu_hat);

// One pair as seen by the risk model.
struct RiskInstance {
  std::string id;
  std::vector<std::uint8_t> z;
  double mu_hat = 0.5;
};

std::vector<RiskInstance> make_instances(const RiskModel& model, std::span<const std::string> ids,
                                         std::span<const FeatureVector> xs, std::span<const double> mu_hat);

struct RankedRisk {
  std::string id;
  int predicted = 0;
  double risk = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
};

// Descending risk; ties by id.
std::vector<RankedRisk> rank_by_risk(const RiskModel& model, std::span<const RiskInstance> instances);
std::string format_ranked_risk(std::span<const RankedRisk> ranking);

struct RankFitConfig {
  double margin = 0.3;
  std::size_t pair_samples = 64;
  std::size_t steps = 200;
  double learning_rate = 0.05;
  std::uint64_t seed = 13;

  void validate() const;
};

// Unconstrained parameters of a risk model, laid out as
//   [ softplus^-1(w_1..w_m) | log(sigma2_f 1..m) | softplus^-1(u) ].
std::vector<double> pack_parameters(const RiskModel& model);
void unpack_parameters(RiskModel& model, std::span<const double> raw);

using RankPair = std::pair<std::size_t, std::size_t>;  // (mispredicted, correct)

// Mean hinge max(0, margin - (risk(a) - risk(b))) over the given pairs; when
// `gradient` is non-null it receives the derivative with respect to the packed
// parameters.
double ranking_objective(const RiskModel& model, std::span<const RiskInstance> instances,
                         std::span<const RankPair> pairs, double margin, std::vector<double>* gradient = nullptr);

struct RankFitResult {
  RiskModel model;
  double objective = 0.0;  // on a fixed evaluation sample of pairs, after fitting
  std::size_t mispredicted = 0;
  std::size_t correct = 0;
};

// Learn-to-rank refit of rule weights, rule variances and the classifier weight
// scale on labeled validation data; rule expectations stay fixed. Starts from
// the given model. Throws PreconditionError when the classifier makes no
// mistake or no correct prediction on the data, in which case the caller keeps
// the previous model.
RankFitResult fit_ranking(const RiskModel& model, std::span<const RiskInstance> validation,
                          std::span<const int> labels, const RankFitConfig& config);

std::string write_risk_model(const RiskModel& model, const FeatureSchema& schema);
RiskModel parse_risk_model(std::string_view text, const FeatureSchema& schema);

}  // namespace riskadapt
