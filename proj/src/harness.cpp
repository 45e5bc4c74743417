#include "riskadapt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::same_source: return "same_source";
    case Scenario::misaligned: return "misaligned";
    case Scenario::robustness: return "robustness";
  }
  return "?";
}

Scenario scenario_from_name(std::string_view name) {
  for (auto s : {Scenario::same_source, Scenario::misaligned, Scenario::robustness})
    if (name == scenario_name(s)) return s;
  throw PreconditionError("unknown scenario '" + std::string(name) + "'");
}

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw PreconditionError("an experiment needs at least one seed");
  if (fractions.empty()) throw PreconditionError("an experiment needs at least one training fraction");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw PreconditionError("training fractions must lie in (0, 1]");
  if (scenario == Scenario::robustness && validation_sizes.empty())
    throw PreconditionError("a robustness plan needs validation sizes");
  adapt.validate();
}

namespace {

void describe_corruption(std::ostream& out, const std::string& prefix, const Corruption& c) {
  out << prefix << "typo_rate = " << format_double(c.typo_rate) << '\n';
  out << prefix << "token_drop_rate = " << format_double(c.token_drop_rate) << '\n';
  out << prefix << "numeric_jitter = " << format_double(c.numeric_jitter) << '\n';
}

void describe_spec(std::ostream& out, const std::string& prefix, const SyntheticSpec& s) {
  out << prefix << "entities = " << s.n_entities << '\n';
  out << prefix << "duplicates_per_entity = " << s.duplicates_per_entity << '\n';
  out << prefix << "sibling_rate = " << format_double(s.sibling_rate) << '\n';
  out << prefix << "seed = " << s.seed << '\n';
  describe_corruption(out, prefix + "left.", s.sources[0]);
  describe_corruption(out, prefix + "right.", s.sources[1]);
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += format_double(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

std::string ExperimentPlan::describe() const {
  std::ostringstream out;
  out << "scenario = " << scenario_name(scenario) << '\n';
  out << "fractions = " << join_list(fractions) << '\n';
  if (!validation_sizes.empty()) out << "validation_sizes = " << join_list(validation_sizes) << '\n';
  out << "seeds = " << join_list(seeds) << '\n';
  out << "min_shared_tokens = " << min_shared_tokens << '\n';
  out << "ratios = " << format_double(ratios.train) << ',' << format_double(ratios.validation) << ','
      << format_double(ratios.test) << '\n';
  if (scenario == Scenario::robustness) out << "robustness_misaligned = " << (robustness_misaligned ? 1 : 0) << '\n';
  describe_spec(out, "source.", source);
  if (scenario != Scenario::same_source) describe_spec(out, "target.", target);
  const auto& t = adapt.train;
  out << "train.learning_rate = " << format_double(t.learning_rate) << '\n';
  out << "train.pretrain_epochs = " << t.pretrain_epochs << '\n';
  out << "train.risk_iterations = " << t.risk_epochs << '\n';
  out << "train.batch_size = " << t.batch_size << '\n';
  out << "train.hidden = " << t.hidden << '\n';
  out << "train.risk_lr_scale = " << format_double(t.risk_lr_scale) << '\n';
  const auto& r = adapt.rules;
  out << "rules.trees = " << r.trees << '\n';
  out << "rules.depth = " << r.depth << '\n';
  out << "rules.purity = " << format_double(r.purity) << '\n';
  out << "rules.min_coverage = " << format_double(r.min_coverage) << '\n';
  out << "rules.feature_subsample = " << format_double(r.feature_subsample) << '\n';
  const auto& k = adapt.rank;
  out << "rank.margin = " << format_double(k.margin) << '\n';
  out << "rank.pair_samples = " << k.pair_samples << '\n';
  out << "rank.steps = " << k.steps << '\n';
  out << "rank.learning_rate = " << format_double(k.learning_rate) << '\n';
  out << "risk.theta = " << format_double(adapt.theta) << '\n';
  out << "risk.bins = " << adapt.bins << '\n';
  return out.str();
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("mean of an empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Example> subsample_fraction(const std::vector<Example>& xs, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return xs;
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(xs.size())));
  return stratified_subsample(xs, std::max<std::size_t>(n, 2), seed);
}

std::string fraction_condition(double f) { return "fraction=" + format_double(f); }

void summarize(ExperimentResult& result) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : result.runs) {
    auto key = std::pair{r.condition, r.method};
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(r.f1);
  }
  result.summary.clear();
  for (const auto& key : keys) {
    const auto [mean, std] = mean_std(groups[key]);
    result.summary.push_back({key.first, key.second, mean, std});
  }
}

struct Workloads {
  std::vector<Example> source;
  std::vector<Example> target;
};

Workloads build_workloads(const ExperimentPlan& plan, bool misaligned) {
  Workloads w;
  w.source = workload_examples(generate_workload(plan.source), plan.min_shared_tokens);
  if (misaligned) w.target = workload_examples(generate_workload(plan.target), plan.min_shared_tokens);
  return w;
}

void record_pair(ExperimentResult& result, const std::string& condition, std::uint64_t seed,
                 const DatasetSplit& split, const AdaptResult& run) {
  result.runs.push_back({condition, "tradition", seed, f1_on(run.pretrained, split.test)});
  result.runs.push_back({condition, "risk", seed, f1_on(run.classifier, split.test)});
  if (run.ledger.snapshots().size() >= 2) result.first_flips.emplace_back(condition, flip_report(run.ledger, 0));
}

}  // namespace

AdaptConfig seeded_config(const AdaptConfig& base, std::uint64_t seed) {
  AdaptConfig c = base;
  c.train.seed = mix(seed, 1);
  c.rules.seed = mix(seed, 2);
  c.rank.seed = mix(seed, 3);
  return c;
}

DatasetSplit experiment_split(const ExperimentPlan& plan, const std::vector<Example>& source_examples,
                              const std::vector<Example>& target_examples, std::uint64_t seed) {
  if (target_examples.empty()) return split_dataset(source_examples, plan.ratios, mix(seed, 4));
  // both sides use 20% validation/test shares of their own workload
  auto source_split = split_dataset(source_examples, plan.ratios, mix(seed, 4));
  auto target_split = split_dataset(target_examples, SplitRatios{0.6, 0.2, 0.2}, mix(seed, 5));
  DatasetSplit s;
  s.seed = seed;
  s.train = std::move(source_split.train);
  s.validation = std::move(target_split.validation);
  s.test = std::move(target_split.test);
  return s;
}

ExperimentResult run_sufficiency_sweep(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.scenario != Scenario::same_source) throw PreconditionError("sufficiency sweep needs a same_source plan");
  const auto data = build_workloads(plan, false);
  ExperimentResult result;
  for (double fraction : plan.fractions) {
    for (auto seed : plan.seeds) {
      auto split = experiment_split(plan, data.source, {}, seed);
      split.train = subsample_fraction(split.train, fraction, mix(seed, 6));
      const auto run = adaptive_train(split, seeded_config(plan.adapt, seed));
      record_pair(result, fraction_condition(fraction), seed, split, run);
    }
  }
  summarize(result);
  return result;
}

ExperimentResult run_misaligned(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.scenario != Scenario::misaligned) throw PreconditionError("misaligned run needs a misaligned plan");
  const auto data = build_workloads(plan, true);
  ExperimentResult result;
  for (double fraction : plan.fractions) {
    const std::string condition = plan.fractions.size() == 1 && fraction == 1.0 ? "misaligned"
                                                                                : "misaligned," + fraction_condition(fraction);
    for (auto seed : plan.seeds) {
      auto split = experiment_split(plan, data.source, data.target, seed);
      split.train = subsample_fraction(split.train, fraction, mix(seed, 6));
      const auto run = adaptive_train(split, seeded_config(plan.adapt, seed));
      record_pair(result, condition, seed, split, run);
    }
  }
  summarize(result);
  return result;
}

ExperimentResult run_robustness(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.scenario != Scenario::robustness) throw PreconditionError("robustness run needs a robustness plan");
  const auto data = build_workloads(plan, plan.robustness_misaligned);
  const double fraction = plan.fractions.front();
  ExperimentResult result;
  std::vector<RunRow> sized;
  for (auto seed : plan.seeds) {
    auto split = experiment_split(plan, data.source, data.target, seed);
    split.train = subsample_fraction(split.train, fraction, mix(seed, 6));
    for (auto size : plan.validation_sizes)
      if (size > split.validation.size())
        throw PreconditionError("validation size " + std::to_string(size) + " exceeds the " +
                                std::to_string(split.validation.size()) + " available instances");
    const auto config = seeded_config(plan.adapt, seed);
    const auto full = adaptive_train(split, config);
    record_pair(result, "validation=full", seed, split, full);
    for (auto size : plan.validation_sizes) {
      DatasetSplit sub = split;
      sub.validation = stratified_subsample(split.validation, size, mix(seed, 7 + size));
      const auto run = fine_tune(full.pretrained, sub, config);
      sized.push_back({"validation=" + std::to_string(size), "risk", seed, f1_on(run.classifier, sub.test)});
    }
  }
  // per-size rows after the reference rows, sizes in plan order
  for (auto size : plan.validation_sizes)
    for (const auto& r : sized)
      if (r.condition == "validation=" + std::to_string(size)) result.runs.push_back(r);
  summarize(result);
  return result;
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  switch (plan.scenario) {
    case Scenario::same_source: return run_sufficiency_sweep(plan);
    case Scenario::misaligned: return run_misaligned(plan);
    case Scenario::robustness: return run_robustness(plan);
  }
  throw PreconditionError("unknown scenario");
}

std::string format_results(const ExperimentPlan& plan, const ExperimentResult& result) {
  std::ostringstream out;
  std::istringstream plan_lines(plan.describe());
  for (std::string line; std::getline(plan_lines, line);) out << "# " << line << '\n';
  out << "condition\tmethod\tseed\tf1\tstd\n";
  for (const auto& r : result.runs)
    out << r.condition << '\t' << r.method << '\t' << r.seed << '\t' << format_double(r.f1) << "\tNA\n";
  for (const auto& s : result.summary)
    out << s.condition << '\t' << s.method << "\taggregate\t" << format_double(s.mean) << '\t' << format_double(s.std)
        << '\n';
  return out.str();
}

}  // namespace riskadapt
