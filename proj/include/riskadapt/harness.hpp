#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskadapt/adapt.hpp"
#include "riskadapt/synthetic.hpp"

namespace riskadapt {

enum class Scenario { same_source, misaligned, robustness };

const char* scenario_name(Scenario s);
Scenario scenario_from_name(std::string_view name);

struct ExperimentPlan {
  Scenario scenario = Scenario::same_source;
  std::vector<double> fractions{1.0};        // of the training part
  std::vector<std::size_t> validation_sizes;  // robustness only
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SyntheticSpec source;  // same-source workload, or the training side when misaligned
  SyntheticSpec target;  // validation/test side when misaligned
  std::size_t min_shared_tokens = 1;
  SplitRatios ratios{0.2, 0.2, 0.6};
  // Robustness runs on the misaligned pair of workloads unless this is false.
  bool robustness_misaligned = true;
  AdaptConfig adapt;

  void validate() const;
  // key = value lines, one per knob, for provenance headers
  std::string describe() const;
};

struct RunRow {
  std::string condition;
  std::string method;  // "tradition" | "risk"
  std::uint64_t seed = 0;
  double f1 = 0.0;
};

struct SummaryRow {
  std::string condition;
  std::string method;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
};

struct ExperimentResult {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;
  // First risk iteration flip report per (condition, seed), in run order.
  std::vector<std::pair<std::string, FlipReport>> first_flips;
};

// Mean and population standard deviation. Throws on an empty list.
std::pair<double, double> mean_std(std::span<const double> values);

// Data of one seed: the same-source 2:2:6 split, or training from the source
// workload's training part and validation/test from the target workload.
DatasetSplit experiment_split(const ExperimentPlan& plan, const std::vector<Example>& source_examples,
                              const std::vector<Example>& target_examples, std::uint64_t seed);

// Config with every stochastic knob derived from the seed.
AdaptConfig seeded_config(const AdaptConfig& base, std::uint64_t seed);

ExperimentResult run_sufficiency_sweep(const ExperimentPlan& plan);
ExperimentResult run_misaligned(const ExperimentPlan& plan);
ExperimentResult run_robustness(const ExperimentPlan& plan);
ExperimentResult run_experiment(const ExperimentPlan& plan);

// Columns: condition, method, seed|aggregate, f1, std. The plan description
// is echoed as '#' header lines.
std::string format_results(const ExperimentPlan& plan, const ExperimentResult& result);

}  // namespace riskadapt
