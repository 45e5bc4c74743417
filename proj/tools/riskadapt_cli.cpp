#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "riskadapt/commands.hpp"

namespace fs = std::filesystem;
using namespace riskadapt;

namespace {

// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct NullBuffer : std::streambuf {
  int overflow(int c) override { return c; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-based adaptive training for entity resolution"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "run configuration (INI)");
  app.add_option("--out", out_dir, "output directory, overrides [run] output");
  app.add_option("--seed", seed, "overrides [run] seed");
  app.add_flag("--quiet", quiet, "suppress progress lines");

  auto* prepare = app.add_subcommand("prepare", "build the split and feature caches");
  auto* pretrain = app.add_subcommand("pretrain", "pre-train the matcher on the prepared training split");
  auto* finetune = app.add_subcommand("finetune", "risk-based adaptive training from the pretrained checkpoint");
  auto* eval = app.add_subcommand("eval", "precision, recall and F1 on the prepared test split");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "final or pretrained")->check(CLI::IsMember({"final", "pretrained"}));

  auto* theory = app.add_subcommand("theory", "theory checks");
  theory->require_subcommand(1);
  BoundsOptions bounds;
  std::size_t bounds_n = 0;
  auto* t_bounds = theory->add_subcommand("bounds", "false-negative and false-positive probability bounds");
  t_bounds->add_option("-m", bounds.m, "number of risk features");
  t_bounds->add_option("-n", bounds_n, "number of supporters, omit for a grid");
  t_bounds->add_option("--delta", bounds.delta);
  t_bounds->add_option("--epsilon", bounds.epsilon);
  t_bounds->add_option("--direction", bounds.direction)->check(CLI::IsMember({"fn", "fp", "both"}));
  McDiarmidOptions mcd;
  auto* t_mcd = theory->add_subcommand("mcdiarmid", "Monte-Carlo check of the concentration inequality");
  t_mcd->add_option("-m", mcd.m, "number of risk features");
  t_mcd->add_option("--samples", mcd.samples);
  t_mcd->add_option("--trial-seed", mcd.seed);
  auto* t_a1 = theory->add_subcommand("assumption1", "per-feature activation divergence on the test split");
  t_a1->add_option("--checkpoint", checkpoint)->check(CLI::IsMember({"final", "pretrained"}));
  auto* t_deltas = theory->add_subcommand("deltas", "per-mispredicted-pair supporter gaps");
  t_deltas->add_option("--checkpoint", checkpoint)->check(CLI::IsMember({"final", "pretrained"}));

  auto* experiment = app.add_subcommand("experiment", "run an experiment plan");
  std::string plan_path;
  experiment->add_option("--plan", plan_path, "plan file (INI)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsage;
  }

  NullBuffer null_buffer;
  std::ostream null_stream(&null_buffer);
  std::ostream& log = quiet ? null_stream : std::cerr;

  const bool needs_data = !theory->parsed() || t_a1->parsed() || t_deltas->parsed();
  RunConfig config;
  try {
    if (!config_path.empty()) config = load_run_config(config_path);
    else if (needs_data && !experiment->parsed()) throw ConfigError("--config is required for this command");
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.output = out_dir;
    if (!config_path.empty()) config.validate();
  } catch (const Error& e) {
    std::cerr << "riskadapt: " << e.what() << '\n';
    return kUsage;
  }

  const CommandContext ctx{config, std::cout, log};
  try {
    if (prepare->parsed()) cmd_prepare(ctx);
    else if (pretrain->parsed()) cmd_pretrain(ctx);
    else if (finetune->parsed()) cmd_finetune(ctx);
    else if (eval->parsed()) cmd_eval(ctx, checkpoint);
    else if (t_bounds->parsed()) {
      if (t_bounds->count("-n")) bounds.n = bounds_n;
      cmd_theory_bounds(ctx, bounds);
    } else if (t_mcd->parsed()) cmd_theory_mcdiarmid(ctx, mcd);
    else if (t_a1->parsed()) cmd_theory_assumption1(ctx, checkpoint);
    else if (t_deltas->parsed()) cmd_theory_deltas(ctx, checkpoint);
    else if (experiment->parsed()) {
      ExperimentPlan plan;
      try {
        plan = load_plan(plan_path);
      } catch (const Error& e) {
        std::cerr << "riskadapt: " << plan_path << ": " << e.what() << '\n';
        return kUsage;
      }
      cmd_experiment(ctx, plan);
    }
  } catch (const ConfigError& e) {
    std::cerr << "riskadapt: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "riskadapt: " << e.what() << '\n';
    return kRuntime;
  }
  return 0;
}
