#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "riskadapt/adapt.hpp"
#include "riskadapt/error.hpp"
#include "riskadapt/harness.hpp"
#include "riskadapt/synthetic.hpp"

namespace riskadapt {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Labeled pairs read from disk.
struct FileDataset {
  Schema schema;
  std::filesystem::path left;   // records CSV, header "id" + attribute names
  std::filesystem::path right;
  std::filesystem::path pairs;  // CSV "left_id,right_id,label"
};

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::optional<FileDataset> files;
};

struct RunConfig {
  DataSource source;
  // When set, validation and test come from this workload (20% each) and
  // training from the source's training part.
  std::optional<DataSource> target;
  std::size_t min_shared_tokens = 1;
  SplitRatios ratios;
  std::uint64_t seed = 1;  // every stochastic component derives from it
  AdaptConfig adapt;
  std::filesystem::path output = "riskadapt-out";

  void validate() const;
};

// INI text:
//   [run]       seed, output
//   [source]    kind = synthetic|files, then synthetic or file keys
//   [target]    optional, same keys as [source]
//   [split]     train, validation, test, min_shared_tokens
//   [train]     learning_rate, pretrain_epochs, risk_iterations, batch_size, hidden, risk_lr_scale
//   [rules]     trees, depth, purity, min_coverage, feature_subsample
//   [risk]      theta, bins, margin, pair_samples, steps, learning_rate
// Paths are resolved against `base_dir`. Unknown keys are rejected.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Plan files add a [plan] section (scenario, fractions, validation_sizes,
// seeds, robustness_misaligned) to the synthetic [source]/[target] sections
// and the model sections above.
ExperimentPlan parse_plan(std::string_view text);
ExperimentPlan load_plan(const std::filesystem::path& path);

}  // namespace riskadapt
