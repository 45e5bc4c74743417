#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "riskadapt/commands.hpp"
#include "riskadapt/config.hpp"
#include "riskadapt/harness.hpp"
#include "riskadapt/metrics.hpp"
#include "riskadapt/text_io.hpp"

using namespace riskadapt;
namespace fs = std::filesystem;

namespace {

const char* kTinySource = R"([source]
entities = 60
duplicates_per_entity = 4
seed = 3
left_typo_rate = 0.05
right_typo_rate = 0.3
)";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST_CASE("metrics by hand") {
  const std::vector<int> pred{1, 1, 0, 0, 1}, truth{1, 0, 0, 1, 1};
  const auto c = confusion(pred, truth);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);
  CHECK(c.fn == 1);
  const auto p = f1_score(pred, truth);
  CHECK(p.precision == doctest::Approx(2.0 / 3));
  CHECK(p.f1 == doctest::Approx(2.0 / 3));
  CHECK(prf(Confusion{}).f1 == 0.0);
  CHECK_THROWS_AS(confusion(pred, std::vector<int>{1}), PreconditionError);
}

TEST_CASE("population mean and standard deviation") {
  const std::vector<double> v{0.2, 0.4, 0.9};
  const auto [mean, sd] = mean_std(v);
  CHECK(mean == doctest::Approx(0.5));
  CHECK(sd == doctest::Approx(std::sqrt(((0.09) + (0.01) + (0.16)) / 3.0)));
  CHECK_THROWS_AS(mean_std(std::vector<double>{}), PreconditionError);
}

TEST_CASE("seeded configs differ per seed and repeat per seed") {
  const AdaptConfig base;
  const auto a = seeded_config(base, 1), b = seeded_config(base, 2);
  CHECK(a.train.seed != b.train.seed);
  CHECK(a.rules.seed != b.rules.seed);
  CHECK(a.rank.seed != b.rank.seed);
  CHECK(seeded_config(base, 1).train.seed == a.train.seed);
}

TEST_CASE("one seed and one fraction give two method rows and echo the plan") {
  auto plan = parse_plan(std::string("[plan]\nscenario = same_source\nfractions = 1.0\nseeds = 4\n") + kTinySource +
                         "[train]\npretrain_epochs = 4\nrisk_iterations = 2\n");
  const auto result = run_experiment(plan);
  CHECK(result.runs.size() == 2);
  CHECK(result.runs[0].method == "tradition");
  CHECK(result.runs[1].method == "risk");
  const auto table = format_results(plan, result);
  CHECK(count_lines_starting(table, "fraction=1\t") == 4);
  CHECK(table.find("# scenario = same_source") != std::string::npos);
  CHECK(count_lines_starting(table, "# ") >= 10);
  CHECK(table.find("condition\tmethod\tseed\tf1\tstd\n") != std::string::npos);
  CHECK(format_results(plan, run_experiment(plan)) == table);
}

TEST_CASE("plan and config parsing") {
  CHECK_THROWS_AS(parse_plan("[plan]\nscenario = sideways\n"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[plan]\nscenario = misaligned\n"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[plan]\nunknown_knob = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[plan]\nfractions = 0.1, x\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[source]\nkind = carrier_pigeon\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[source]\nkind = files\nleft = a.csv\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlearning_rate = -1\n"), ConfigError);
  const auto c = parse_run_config("[run]\nseed = 9\noutput = out\n[split]\ntrain = 0.5\n", "/base");
  CHECK(c.seed == 9);
  CHECK(c.output == fs::path("/base/out"));
  CHECK(c.ratios.train == 0.5);
  for (const char* name : {"misaligned.ini", "robustness.ini", "same_source.ini"})
    CHECK_NOTHROW(load_plan(fs::path(RISKADAPT_CONFIG_DIR) / name));
  for (const char* name : {"standard.ini", "misaligned_run.ini"})
    CHECK_NOTHROW(load_run_config(fs::path(RISKADAPT_CONFIG_DIR) / name));
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("command pipeline on a small synthetic workload") {
  const auto out = fresh_dir("riskadapt_cmd_test");
  auto config = parse_run_config(std::string("[run]\nseed = 2\n") + kTinySource +
                                 "[train]\npretrain_epochs = 4\nrisk_iterations = 2\n");
  config.output = out;
  std::ostringstream report, log;
  const CommandContext ctx{config, report, log};

  CHECK_THROWS_WITH_AS(cmd_pretrain(ctx), doctest::Contains("run prepare first"), Error);
  cmd_prepare(ctx);
  const OutputLayout layout{out};
  const auto manifest = read_file(layout.manifest());
  CHECK(manifest.find("# seed 2") != std::string::npos);
  cmd_prepare(ctx);
  CHECK(read_file(layout.manifest()) == manifest);
  CHECK_FALSE(fs::exists(layout.manifest().string() + ".~1~"));

  const auto train = parse_examples(read_file(layout.prepared() / "train.tsv"));
  const auto val = parse_examples(read_file(layout.prepared() / "validation.tsv"));
  const auto test = parse_examples(read_file(layout.prepared() / "test.tsv"));
  const double total = static_cast<double>(train.size() + val.size() + test.size());
  CHECK(std::abs(train.size() - 0.2 * total) <= 2.0);
  CHECK(std::abs(val.size() - 0.2 * total) <= 2.0);
  CHECK(std::abs(test.size() - 0.6 * total) <= 2.0);

  CHECK_THROWS_WITH_AS(cmd_finetune(ctx), doctest::Contains("run pretrain first"), Error);
  cmd_pretrain(ctx);
  cmd_finetune(ctx);
  for (const char* f : {"final.ckpt", "rules.tsv", "risk_model.txt", "metrics.tsv", "flip_report.tsv", "ranked_risk.tsv"})
    CHECK(fs::exists(layout.model() / f));
  CHECK(count_lines_starting(read_file(layout.model() / "metrics.tsv"), "pretrain\t") == 4);
  CHECK(count_lines_starting(read_file(layout.model() / "metrics.tsv"), "risk\t") == 2);

  report.str("");
  cmd_eval(ctx, "final");
  const auto model = parse_checkpoint(read_file(layout.final_checkpoint()));
  CHECK(report.str().find("f1\t" + format_double(f1_on(model, test)) + "\n") != std::string::npos);

  // tampering with a cache is detected
  write_artifact(layout.prepared() / "test.tsv", "tampered\n");
  CHECK_THROWS_AS(cmd_eval(ctx, "final"), IntegrityError);
  fs::remove_all(out);
}

TEST_CASE("file sources report missing paths") {
  auto config = parse_run_config(
      "[source]\nkind = files\nleft = /nonexistent/left.csv\nright = /nonexistent/right.csv\npairs = /nonexistent/pairs.csv\n");
  config.output = fresh_dir("riskadapt_missing_test");
  std::ostringstream report, log;
  CHECK_THROWS_WITH_AS(cmd_prepare({config, report, log}), doctest::Contains("/nonexistent/left.csv"), Error);
}

TEST_CASE("theory commands") {
  RunConfig config;
  config.output = fresh_dir("riskadapt_theory_test");
  std::ostringstream report, log;
  const CommandContext ctx{config, report, log};
  BoundsOptions b;
  b.n = 1000000;
  b.direction = "fn";
  cmd_theory_bounds(ctx, b);
  CHECK(report.str().find("FN\t10\t1000000\t0.05\t0.2\t0.50238") != std::string::npos);
  McDiarmidOptions m;
  m.samples = 500;
  CHECK_THROWS_AS(cmd_theory_mcdiarmid(ctx, m), ConfigError);
  m.samples = 5000;
  report.str("");
  cmd_theory_mcdiarmid(ctx, m);
  const auto first = report.str();
  report.str("");
  cmd_theory_mcdiarmid(ctx, m);
  CHECK(report.str() == first);
  fs::remove_all(config.output);
}
