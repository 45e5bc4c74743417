#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "riskadapt/adapt.hpp"
#include "riskadapt/risk_model.hpp"

namespace riskadapt {

enum class ErrorDirection { false_negative, false_positive };

struct BoundQuery {
  std::size_t m = 10;  // rule features
  std::size_t n = 100;  // supporters
  double delta = 0.05;
  double epsilon = 0.2;
  ErrorDirection direction = ErrorDirection::false_negative;

  void validate() const;
};

// Radical term sqrt((m+1)/2 * ln(1 / (1 - sqrt(1 - delta^(1/n))))).
long double bound_radical(const BoundQuery& q);

// False negative: 0.5 + eps/2 - radical (lower bound on mu).
// False positive: 0.5 - eps/2 + radical (upper bound on mu).
double theorem_bound(const BoundQuery& q);

std::string format_bound_table(std::span<const BoundQuery> queries);

struct DeltaEstimate {
  std::size_t supporters = 0;
  double delta_var = 0.0;  // mean VaR gap over the supporters (0 without supporters)
  std::vector<double> supporter_gaps;
  double delta_c_lemma = 0.0;
  double delta_c_simple = 0.0;
};

// ΔVaR and ΔC estimates for the mispredicted pair `index`. Classifier weights
// enter as shares of each pair's normalization mass. Throws PreconditionError
// when the pair is predicted correctly.
DeltaEstimate estimate_deltas(std::span<const PairAnalysis> analysis, std::span<const int> predicted,
                              std::span<const int> truth, std::size_t index, double k = 2.0);

// Bound on ΔC from the classifier outputs, stds and weight shares of the
// correctly predicted population (`support`) and the mispredicted side
// (`own`). False negative:
//   max(E_s[w (mu^ - k s^)] - E_o[w (mu^ - k s^)], E_s[w mu^] - E_o[w mu^])
// false positive:
//   max(E_o[w (mu^ + k s^)] - E_s[w (mu^ + k s^)], E_o[w mu^] - E_s[w mu^])
// with mu^ -+ k s^ clamped to [0, 1]. Both groups must be non-empty.
double delta_c_lemma(ErrorDirection direction, std::span<const PairAnalysis> support,
                     std::span<const PairAnalysis> own, double k = 2.0);

// Mean classifier weight share of the supporter population.
double delta_c_simple(std::span<const PairAnalysis> support);

struct ConcentrationTrial {
  std::vector<double> activation_probability;  // per rule feature
  std::vector<double> weights;
  std::vector<double> mu_f;
  std::vector<double> sigma2_f;
  double w_hat = 0.5;
  double mu_hat_low = 0.5;  // classifier output drawn uniformly from [low, high]
  double mu_hat_high = 0.5;
  double sigma2_hat = 0.01;
  double k = 2.0;
  std::size_t samples = 100000;
  std::uint64_t seed = 17;

  std::size_t m() const { return activation_probability.size(); }
  void validate() const;
};

struct TailRow {
  double epsilon = 0.0;
  double empirical = 0.0;
  double bound = 1.0;  // exp(-2 eps^2 / (m+1))
};

// Samples f = mu - k sigma over independent activations and reports the upper
// tail P(f - E f >= eps) against the bounded-differences bound.
std::vector<TailRow> mcdiarmid_trial(const ConcentrationTrial& trial, std::span<const double> eps_grid);
std::string format_tail_table(std::span<const TailRow> rows, std::size_t m, std::size_t samples);

struct FeatureDivergence {
  std::string feature;
  double freq_a = 0.0;
  double freq_b = 0.0;
  double abs_diff = 0.0;
};

struct GroupDivergence {
  std::string group_a, group_b;
  std::vector<FeatureDivergence> features;
  double mean_abs_diff = 0.0;
  double max_abs_diff = 0.0;
};

// Per-feature activation frequency in two groups. Throws on an empty group.
GroupDivergence activation_divergence(std::string a_name, std::span<const std::vector<std::uint8_t>> a,
                                      std::string b_name, std::span<const std::vector<std::uint8_t>> b,
                                      std::span<const std::string> feature_ids);

struct Assumption1Report {
  GroupDivergence tp_fn;
  GroupDivergence tn_fp;
};

// Activations grouped by outcome. Throws PreconditionError when any of the
// four groups is empty.
Assumption1Report assumption1_diagnostic(std::span<const std::vector<std::uint8_t>> activations,
                                         std::span<const int> predicted, std::span<const int> truth,
                                         std::span<const std::string> feature_ids);
std::string format_assumption1(const Assumption1Report& report);

}  // namespace riskadapt
