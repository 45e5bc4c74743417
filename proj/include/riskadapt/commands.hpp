#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "riskadapt/config.hpp"
#include "riskadapt/theory.hpp"

namespace riskadapt {

// Where a command reads and writes. `report` receives tables meant for the
// user, `log` progress lines (silenced by --quiet).
struct CommandContext {
  RunConfig config;
  std::ostream& report;
  std::ostream& log;
};

// Layout of the output directory.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path prepared() const { return root / "prepared"; }
  std::filesystem::path manifest() const { return prepared() / "manifest.tsv"; }
  std::filesystem::path model() const { return root / "model"; }
  std::filesystem::path pretrained_checkpoint() const { return model() / "pretrained.ckpt"; }
  std::filesystem::path final_checkpoint() const { return model() / "final.ckpt"; }
  std::filesystem::path risk_model() const { return model() / "risk_model.txt"; }
  std::filesystem::path theory() const { return root / "theory"; }
};

// Builds the split and writes the feature caches plus a manifest of their
// SHA-256 digests.
void cmd_prepare(const CommandContext& ctx);
void cmd_pretrain(const CommandContext& ctx);
void cmd_finetune(const CommandContext& ctx);
// checkpoint: "final", "pretrained" or empty for final-if-present.
void cmd_eval(const CommandContext& ctx, const std::string& checkpoint);

struct BoundsOptions {
  std::size_t m = 10;
  std::optional<std::size_t> n;  // empty: a grid of n values
  double delta = 0.05;
  double epsilon = 0.2;
  std::string direction = "both";  // fn | fp | both
};

struct McDiarmidOptions {
  std::size_t m = 10;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
};

// Theory commands that need no dataset only use ctx.report / ctx.log and
// ctx.config.output.
void cmd_theory_bounds(const CommandContext& ctx, const BoundsOptions& options);
void cmd_theory_mcdiarmid(const CommandContext& ctx, const McDiarmidOptions& options);
void cmd_theory_assumption1(const CommandContext& ctx, const std::string& checkpoint);
void cmd_theory_deltas(const CommandContext& ctx, const std::string& checkpoint);

void cmd_experiment(const CommandContext& ctx, const ExperimentPlan& plan);

// Random but valid concentration trial derived from a seed.
ConcentrationTrial random_trial(std::size_t m, std::size_t samples, std::uint64_t seed);

}  // namespace riskadapt
