#include "riskadapt/commands.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "riskadapt/metrics.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

namespace fs = std::filesystem;

namespace {

const char* kSplitFiles[] = {"train.tsv", "validation.tsv", "test.tsv"};

void write_out(const CommandContext& ctx, const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  switch (write_artifact(path, content)) {
    case WriteOutcome::created: ctx.log << "wrote " << path.string() << '\n'; break;
    case WriteOutcome::unchanged: ctx.log << "unchanged " << path.string() << '\n'; break;
    case WriteOutcome::replaced: ctx.log << "updated " << path.string() << " (previous version kept as backup)\n"; break;
  }
}

template <typename F>
auto with_path(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<Example> source_examples(const DataSource& d, std::size_t min_shared) {
  if (d.synthetic) return workload_examples(generate_workload(*d.synthetic), min_shared);
  const auto& f = *d.files;
  auto left = with_path(f.left, [&] { return RecordTable(f.schema, load_records(f.left, f.schema)); });
  auto right = with_path(f.right, [&] { return RecordTable(f.schema, load_records(f.right, f.schema)); });
  auto pairs = with_path(f.pairs, [&] { return load_pairs(f.pairs); });
  return featurize_pairs(pairs, left, right);
}

FeatureSchema feature_schema(const DataSource& d) {
  return FeatureSchema(d.synthetic ? bibliographic_schema() : d.files->schema);
}

ExperimentPlan plan_for(const RunConfig& c) {
  ExperimentPlan p;
  p.ratios = c.ratios;
  p.min_shared_tokens = c.min_shared_tokens;
  p.adapt = c.adapt;
  return p;
}

// Reads the prepared split, refusing caches whose bytes no longer match the
// manifest.
DatasetSplit load_prepared(const CommandContext& ctx, FeatureSchema* schema = nullptr) {
  const OutputLayout out{ctx.config.output};
  if (!fs::exists(out.manifest()))
    throw Error("no prepared data under " + out.prepared().string() + "; run prepare first");
  std::map<std::string, std::string> digests;
  {
    std::istringstream in(read_file(out.manifest()));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto f = split(line, '\t');
      if (f.size() == 2) digests[f[0]] = f[1];
    }
  }
  std::vector<Example> parts[3];
  for (int i = 0; i < 3; ++i) {
    const auto path = out.prepared() / kSplitFiles[i];
    if (!fs::exists(path)) throw Error("prepared file missing: " + path.string() + "; run prepare again");
    const auto text = read_file(path);
    if (digests[kSplitFiles[i]] != sha256_hex(text))
      throw IntegrityError(path.string() + " does not match the manifest; run prepare again");
    parts[i] = with_path(path, [&] { return parse_examples(text, i == 0 ? schema : nullptr); });
  }
  DatasetSplit s;
  s.seed = ctx.config.seed;
  s.train = std::move(parts[0]);
  s.validation = std::move(parts[1]);
  s.test = std::move(parts[2]);
  return s;
}

AdaptConfig run_adapt_config(const RunConfig& c) { return seeded_config(c.adapt, c.seed); }

MatcherModel load_checkpoint(const fs::path& path) {
  return with_path(path, [&] { return parse_checkpoint(read_file(path)); });
}

fs::path pick_checkpoint(const OutputLayout& out, const std::string& which) {
  if (which == "pretrained") return out.pretrained_checkpoint();
  if (which == "final") return out.final_checkpoint();
  if (!which.empty()) throw ConfigError("checkpoint must be 'final' or 'pretrained', found '" + which + "'");
  return fs::exists(out.final_checkpoint()) ? out.final_checkpoint() : out.pretrained_checkpoint();
}

MatcherModel require_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw Error("no checkpoint at " + path.string() + "; run pretrain first");
  return load_checkpoint(path);
}

struct AnalysisInputs {
  DatasetSplit split;
  FeatureSchema schema;
  MatcherModel classifier;
  RiskModel risk;
  std::vector<RiskInstance> test;
  std::vector<int> predicted;
};

AnalysisInputs analysis_inputs(const CommandContext& ctx, const std::string& checkpoint) {
  const OutputLayout out{ctx.config.output};
  AnalysisInputs a;
  a.split = load_prepared(ctx, &a.schema);
  a.classifier = require_checkpoint(pick_checkpoint(out, checkpoint));
  if (!fs::exists(out.risk_model())) throw Error("no risk model at " + out.risk_model().string() + "; run finetune first");
  a.risk = with_path(out.risk_model(), [&] { return parse_risk_model(read_file(out.risk_model()), a.schema); });
  const auto xs = a.split.test_features();
  std::vector<std::string> ids;
  std::vector<double> mu;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ids.push_back(a.split.test[i].id);
    mu.push_back(a.classifier.predict_proba(xs[i]));
    a.predicted.push_back(mu.back() >= 0.5 ? 1 : 0);
  }
  a.test = make_instances(a.risk, ids, xs, mu);
  return a;
}

}  // namespace

void cmd_prepare(const CommandContext& ctx) {
  const auto& c = ctx.config;
  const OutputLayout out{c.output};
  const auto source = source_examples(c.source, c.min_shared_tokens);
  std::vector<Example> target;
  if (c.target) target = source_examples(*c.target, c.min_shared_tokens);
  const auto split = experiment_split(plan_for(c), source, target, c.seed);
  const auto schema = feature_schema(c.source);
  if (c.target && !(feature_schema(*c.target) == schema))
    throw ConfigError("source and target workloads have different schemas");

  const std::vector<Example>* parts[] = {&split.train, &split.validation, &split.test};
  std::ostringstream manifest;
  manifest << "# riskadapt manifest 1\n# seed " << c.seed << '\n';
  for (int i = 0; i < 3; ++i) {
    const auto text = write_examples(*parts[i], schema);
    write_out(ctx, out.prepared() / kSplitFiles[i], text);
    manifest << kSplitFiles[i] << '\t' << sha256_hex(text) << '\n';
  }
  write_out(ctx, out.manifest(), manifest.str());
  ctx.report << "train " << split.train.size() << ", validation " << split.validation.size() << ", test "
             << split.test.size() << '\n';
}

void cmd_pretrain(const CommandContext& ctx) {
  const OutputLayout out{ctx.config.output};
  const auto split = load_prepared(ctx);
  if (split.train.empty()) throw Error("prepared training split is empty");
  const auto cfg = run_adapt_config(ctx.config);
  const auto initial = MatcherModel::initialized(split.train.front().x.size(), cfg.train.hidden, cfg.train.seed);
  const auto result = pretrain(initial, split.train, split.validation, cfg.train, split.test);
  write_out(ctx, out.pretrained_checkpoint(), write_checkpoint(result.model));
  write_out(ctx, out.model() / "metrics_pretrain.tsv", format_metrics_log(result.log));
  ctx.report << "best epoch " << result.best_epoch << ", validation F1 " << format_double(result.best_val_f1) << '\n';
}

void cmd_finetune(const CommandContext& ctx) {
  const OutputLayout out{ctx.config.output};
  FeatureSchema schema;
  const auto split = load_prepared(ctx, &schema);
  if (!fs::exists(out.pretrained_checkpoint()))
    throw Error("no pretrained checkpoint at " + out.pretrained_checkpoint().string() + "; run pretrain first");
  const auto pre = load_checkpoint(out.pretrained_checkpoint());
  const auto result = fine_tune(pre, split, run_adapt_config(ctx.config));

  write_out(ctx, out.final_checkpoint(), write_checkpoint(result.classifier));
  write_out(ctx, out.model() / "rules.tsv", write_rules(result.risk.features, schema));
  write_out(ctx, out.risk_model(), write_risk_model(result.risk, schema));

  std::string log;
  const auto pre_log = out.model() / "metrics_pretrain.tsv";
  if (fs::exists(pre_log)) log = read_file(pre_log);
  auto risk_rows = format_metrics_log(result.log);
  if (!log.empty()) risk_rows = risk_rows.substr(risk_rows.find('\n') + 1);
  write_out(ctx, out.model() / "metrics.tsv", log + risk_rows);

  std::string flips;
  for (std::size_t k = 0; k + 1 < result.ledger.snapshots().size(); ++k)
    flips += format_flip_report(flip_report(result.ledger, k)) + "\n";
  write_out(ctx, out.model() / "flip_report.tsv", flips);

  const auto xs = split.test_features();
  std::vector<double> mu;
  for (const auto& x : xs) mu.push_back(result.classifier.predict_proba(x));
  std::vector<std::string> ids;
  for (const auto& e : split.test) ids.push_back(e.id);
  write_out(ctx, out.model() / "ranked_risk.tsv",
            format_ranked_risk(rank_by_risk(result.risk, make_instances(result.risk, ids, xs, mu))));

  ctx.report << "test F1 pretrained " << format_double(f1_on(pre, split.test)) << ", after "
             << result.log.size() << " risk iterations " << format_double(f1_on(result.classifier, split.test))
             << '\n';
  if (result.ledger.snapshots().size() >= 2) ctx.report << format_flip_report(flip_report(result.ledger, 0));
}

void cmd_eval(const CommandContext& ctx, const std::string& checkpoint) {
  const OutputLayout out{ctx.config.output};
  const auto split = load_prepared(ctx);
  const auto path = pick_checkpoint(out, checkpoint);
  const auto model = require_checkpoint(path);
  const auto xs = split.test_features();
  const auto prf_ = f1_score(predict_all(model, xs), split.test_labels());
  std::ostringstream table;
  table << "# checkpoint " << path.filename().string() << '\n';
  table << "precision\t" << format_double(prf_.precision) << '\n';
  table << "recall\t" << format_double(prf_.recall) << '\n';
  table << "f1\t" << format_double(prf_.f1) << '\n';
  write_out(ctx, out.root / ("eval_" + path.stem().string() + ".tsv"), table.str());
  ctx.report << table.str();
}

void cmd_theory_bounds(const CommandContext& ctx, const BoundsOptions& o) {
  std::vector<std::size_t> ns;
  if (o.n) ns.push_back(*o.n);
  else ns = {1, 10, 100, 1000, 10000, 100000, 1000000, 10000000};
  std::vector<BoundQuery> qs;
  for (auto dir : {ErrorDirection::false_negative, ErrorDirection::false_positive}) {
    if (o.direction == "fn" && dir != ErrorDirection::false_negative) continue;
    if (o.direction == "fp" && dir != ErrorDirection::false_positive) continue;
    for (auto n : ns) {
      BoundQuery q{o.m, n, o.delta, o.epsilon, dir};
      try {
        q.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      qs.push_back(q);
    }
  }
  if (o.direction != "fn" && o.direction != "fp" && o.direction != "both")
    throw ConfigError("direction must be fn, fp or both");
  const auto table = format_bound_table(qs);
  write_out(ctx, OutputLayout{ctx.config.output}.theory() / "bounds.tsv", table);
  ctx.report << table;
}

ConcentrationTrial random_trial(std::size_t m, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ConcentrationTrial t;
  for (std::size_t j = 0; j < m; ++j) {
    t.activation_probability.push_back(unit(rng));
    t.weights.push_back(0.5 + 1.5 * unit(rng));
    t.mu_f.push_back(unit(rng));
    t.sigma2_f.push_back(0.001 + 0.049 * unit(rng));
  }
  t.w_hat = 0.5 + unit(rng);
  t.mu_hat_low = 0.0;
  t.mu_hat_high = 1.0;
  t.sigma2_hat = 0.01;
  t.samples = samples;
  t.seed = seed;
  return t;
}

void cmd_theory_mcdiarmid(const CommandContext& ctx, const McDiarmidOptions& o) {
  ConcentrationTrial trial;
  std::vector<TailRow> rows;
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.05 * i);
  try {
    trial = random_trial(o.m, o.samples, o.seed);
    rows = mcdiarmid_trial(trial, grid);
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  const auto table = format_tail_table(rows, trial.m(), trial.samples);
  write_out(ctx, OutputLayout{ctx.config.output}.theory() / "mcdiarmid.tsv", table);
  ctx.report << table;
}

void cmd_theory_assumption1(const CommandContext& ctx, const std::string& checkpoint) {
  const auto a = analysis_inputs(ctx, checkpoint);
  std::vector<std::vector<std::uint8_t>> z;
  for (const auto& inst : a.test) z.push_back(inst.z);
  std::vector<std::string> ids;
  for (const auto& f : a.risk.features) ids.push_back(f.id);
  const auto table = format_assumption1(assumption1_diagnostic(z, a.predicted, a.split.test_labels(), ids));
  write_out(ctx, OutputLayout{ctx.config.output}.theory() / "assumption1.tsv", table);
  ctx.report << table;
}

void cmd_theory_deltas(const CommandContext& ctx, const std::string& checkpoint) {
  const auto a = analysis_inputs(ctx, checkpoint);
  const auto truth = a.split.test_labels();
  std::vector<PairAnalysis> analysis;
  for (const auto& inst : a.test) analysis.push_back(analyze_pair(a.risk, inst));

  std::ostringstream rows;
  rows << "pair_id\tstatus\tsupporters\tdelta_var\tdelta_c_lemma\tdelta_c_simple\n";
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    const auto o = outcome_of(a.predicted[i], truth[i]);
    if (o != Outcome::fn && o != Outcome::fp) continue;
    const auto d = estimate_deltas(analysis, a.predicted, truth, i, a.risk.k);
    rows << a.test[i].id << '\t' << outcome_name(o) << '\t' << d.supporters << '\t' << format_double(d.delta_var)
         << '\t' << format_double(d.delta_c_lemma) << '\t' << format_double(d.delta_c_simple) << '\n';
  }
  double share = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    share += analysis[i].w_hat_share;
    weight += a.risk.dnn.weight(a.test[i].mu_hat);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, analysis.size()));
  share /= n;
  weight /= n;
  std::ostringstream table;
  table << "# mean classifier weight " << format_double(weight) << ", mean share of the normalization mass "
        << format_double(share) << '\n'
        << rows.str();
  if (weight < 0.2 || weight > 0.6)
    ctx.log << "note: mean classifier weight " << format_double(weight) << " lies outside [0.2, 0.6]\n";
  write_out(ctx, OutputLayout{ctx.config.output}.theory() / "deltas.tsv", table.str());
  ctx.report << table.str();
}

void cmd_experiment(const CommandContext& ctx, const ExperimentPlan& plan) {
  const auto result = run_experiment(plan);
  const auto table = format_results(plan, result);
  write_out(ctx, ctx.config.output / ("experiment_" + std::string(scenario_name(plan.scenario)) + ".tsv"), table);
  ctx.report << table;
}

}  // namespace riskadapt
