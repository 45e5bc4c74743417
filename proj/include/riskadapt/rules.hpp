#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskadapt/corpus.hpp"

namespace riskadapt {

enum class Comparator { le, gt };

// A threshold test on one similarity channel: x[channel] <= t or x[channel] > t.
struct Predicate {
  std::size_t channel = 0;
  Comparator comparator = Comparator::le;
  double threshold = 0.0;

  bool holds(const FeatureVector& x) const {
    return comparator == Comparator::le ? x[channel] <= threshold : x[channel] > threshold;
  }
  friend bool operator==(const Predicate&, const Predicate&) = default;
  friend auto operator<=>(const Predicate&, const Predicate&) = default;
};

struct RiskFeature {
  std::string id;
  std::vector<Predicate> conjunction;
  int asserted_class = 0;  // 1 equivalent, 0 inequivalent
  std::size_t coverage = 0;
  double mu_f = 0.5;
  double sigma2_f = 0.01;

  bool matches(const FeatureVector& x) const;
  friend bool operator==(const RiskFeature&, const RiskFeature&) = default;
};

struct RuleParams {
  std::size_t trees = 10;
  std::size_t depth = 3;
  double purity = 0.95;
  double min_coverage = 0.01;  // fraction of |train|
  double feature_subsample = 0.6;
  std::uint64_t seed = 11;

  void validate() const;
};

inline constexpr double kInitialRuleVariance = 0.01;

// Bagged one-sided decision trees. Each leaf whose conjunction, evaluated on
// the full training set, has purity >= params.purity and support >=
// params.min_coverage * |train| becomes a rule asserting its majority class.
// Predicates on the same channel and comparator collapse to the tightest one;
// identical conjunctions are emitted once. Ids are "r0", "r1", ... in
// discovery order. Throws PreconditionError on empty or single-class data.
std::vector<RiskFeature> induce_rules(std::span<const Example> train, const RuleParams& params);

// Laplace-smoothed equivalence rate over the covered training examples.
// Throws PreconditionError when the rule covers nothing.
double estimate_prior(const RiskFeature& rule, std::span<const Example> train);

std::vector<std::uint8_t> activate(std::span<const RiskFeature> features, const FeatureVector& x);

// "year_eq ≤ 0.5 ∧ title_jaccard ≤ 0.3 → inequivalent"
std::string render_rule(const RiskFeature& rule, const FeatureSchema& schema);

// Tab separated rule list: header lines starting with '#', then one rule per
// line: id, conjunction, class, coverage, mu_f, sigma2_f. The conjunction uses
// ASCII "<=" / ">" joined by " & ". Numbers are written in shortest
// round-trip form.
std::string write_rules(std::span<const RiskFeature> rules, const FeatureSchema& schema);
std::vector<RiskFeature> parse_rules(std::string_view text, const FeatureSchema& schema);

// Parses one rule-file line body (no header). `line` is used in error messages.
RiskFeature parse_rule_line(std::string_view text, const FeatureSchema& schema, std::size_t line);

}  // namespace riskadapt
