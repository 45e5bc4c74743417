#include "riskadapt/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/metrics.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

RiskWeights risk_weights(const RiskModel& model, std::span<const RiskInstance> test, std::size_t iteration) {
  RiskWeights rw;
  rw.iteration = iteration;
  rw.weights.reserve(test.size());
  for (const auto& inst : test) {
    const auto s = score_var(aggregate(model, inst.z, inst.mu_hat), model);
    rw.weights.push_back({1.0 - s.var_plus, 1.0 - s.var_minus});
  }
  return rw;
}

double risk_loss(const MatcherModel& model, std::span<const FeatureVector> test, const RiskWeights& weights) {
  if (test.empty()) throw PreconditionError("risk loss over an empty test set");
  if (weights.weights.size() != test.size()) throw PreconditionError("risk weights do not cover every test pair");
  return weighted_log_loss(model, test, weights.weights);
}

PairAnalysis analyze_pair(const RiskModel& model, const RiskInstance& instance) {
  const auto d = aggregate(model, instance.z, instance.mu_hat);
  const auto s = score_var(d, model);
  const double w_hat = model.dnn.weight(instance.mu_hat);
  double n = w_hat;
  for (std::size_t j = 0; j < instance.z.size(); ++j)
    if (instance.z[j]) n += model.weights[j];
  return {instance.mu_hat, std::sqrt(model.dnn.variance(instance.mu_hat)), d.mu, d.sigma(), s.var_plus, s.var_minus, w_hat / n};
}

Outcome outcome_of(int predicted, int truth) {
  if (predicted) return truth ? Outcome::tp : Outcome::fp;
  return truth ? Outcome::fn : Outcome::tn;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::tp: return "TP";
    case Outcome::tn: return "TN";
    case Outcome::fp: return "FP";
    case Outcome::fn: return "FN";
  }
  return "?";
}

SupportSummary count_supporters(std::span<const PairAnalysis> analysis, std::span<const int> predicted,
                                std::span<const int> truth) {
  if (analysis.size() != predicted.size() || predicted.size() != truth.size())
    throw PreconditionError("analysis, predictions and labels differ in length");
  std::vector<double> tp_var, tn_var;
  double tp_share = 0.0, tn_share = 0.0;
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    const auto o = outcome_of(predicted[i], truth[i]);
    if (o == Outcome::tp) {
      tp_var.push_back(analysis[i].var_plus);
      tp_share += analysis[i].w_hat_share;
    } else if (o == Outcome::tn) {
      tn_var.push_back(analysis[i].var_minus);
      tn_share += analysis[i].w_hat_share;
    }
  }
  SupportSummary s;
  s.supporters.assign(analysis.size(), 0);
  if (!tp_var.empty()) s.delta_c_fn = tp_share / static_cast<double>(tp_var.size());
  if (!tn_var.empty()) s.delta_c_fp = tn_share / static_cast<double>(tn_var.size());
  std::sort(tp_var.begin(), tp_var.end());
  std::sort(tn_var.begin(), tn_var.end());
  // number of values v with own - v > delta, i.e. v < own - delta
  auto below = [](const std::vector<double>& sorted, double own, double delta) {
    std::size_t c = 0;
    for (auto it = sorted.begin(); it != sorted.end() && own - *it > delta; ++it) ++c;
    return c;
  };
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    const auto o = outcome_of(predicted[i], truth[i]);
    if (o == Outcome::fn) s.supporters[i] = below(tp_var, analysis[i].var_minus, s.delta_c_fn);
    else if (o == Outcome::fp) s.supporters[i] = below(tn_var, analysis[i].var_plus, s.delta_c_fp);
  }
  return s;
}

FlipLedger::FlipLedger(std::vector<std::string> ids, std::vector<int> truth) : ids_(std::move(ids)), truth_(std::move(truth)) {
  if (ids_.size() != truth_.size()) throw PreconditionError("ledger ids and labels differ in length");
}

void FlipLedger::record(LedgerSnapshot snapshot) {
  if (snapshot.predicted.size() != truth_.size() || snapshot.analysis.size() != truth_.size())
    throw PreconditionError("ledger snapshot does not cover every test pair");
  snapshots_.push_back(std::move(snapshot));
}

FlipReport flip_report(const FlipLedger& ledger, std::size_t k) {
  const auto& snaps = ledger.snapshots();
  if (k + 1 >= snaps.size())
    throw PreconditionError("flip report for iteration " + std::to_string(k) + " needs " + std::to_string(k + 2) +
                            " snapshots, ledger has " + std::to_string(snaps.size()));
  const auto& before = snaps[k];
  const auto& after = snaps[k + 1];
  const auto& truth = ledger.truth();
  const auto support = count_supporters(before.analysis, before.predicted, truth);

  FlipReport r;
  r.iteration = k;
  r.delta_c_fn = support.delta_c_fn;
  r.delta_c_fp = support.delta_c_fp;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto o = outcome_of(before.predicted[i], truth[i]);
    const bool flipped = before.predicted[i] != after.predicted[i];
    auto& c = r.by_outcome[static_cast<std::size_t>(o)];
    ++c.total;
    c.flipped += flipped;
    const std::size_t bucket = support.supporters[i] >= kSupporterThreshold ? 1 : 0;
    if (o == Outcome::fn) {
      ++r.fn_by_support[bucket].total;
      r.fn_by_support[bucket].flipped += flipped;
    } else if (o == Outcome::fp) {
      ++r.fp_by_support[bucket].total;
      r.fp_by_support[bucket].flipped += flipped;
    }
  }
  return r;
}

std::string format_flip_report(const FlipReport& report) {
  std::ostringstream out;
  out << "# flips between iteration " << report.iteration << " and " << report.iteration + 1 << '\n';
  out << "status\ttotal\tflipped\n";
  for (auto o : {Outcome::tp, Outcome::tn, Outcome::fn, Outcome::fp}) {
    const auto& c = report.by_outcome[static_cast<std::size_t>(o)];
    out << outcome_name(o) << '\t' << c.total << '\t' << c.flipped << '\n';
  }
  out << "\n# mispredictions by supporter count (delta_c_fn " << format_double(report.delta_c_fn) << ", delta_c_fp "
      << format_double(report.delta_c_fp) << ")\n";
  out << "supporters\tFN_total\tFN_flipped\tFP_total\tFP_flipped\n";
  const char* labels[2] = {"<100", ">=100"};
  for (std::size_t b = 0; b < 2; ++b)
    out << labels[b] << '\t' << report.fn_by_support[b].total << '\t' << report.fn_by_support[b].flipped << '\t'
        << report.fp_by_support[b].total << '\t' << report.fp_by_support[b].flipped << '\n';
  return out.str();
}

void AdaptConfig::validate() const {
  train.validate();
  rules.validate();
  rank.validate();
  quantile_multiplier(theta);
  if (bins < 1) throw PreconditionError("at least one confidence bin is required");
}

TrainingView training_view(const DatasetSplit& split) {
  TrainingView v;
  v.train = split.train;
  v.validation = split.validation;
  for (const auto& e : split.test) v.test_ids.push_back(e.id);
  v.test = split.test_features();
  return v;
}

namespace {

std::vector<double> outputs(const MatcherModel& model, std::span<const Example> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& e : xs) out.push_back(model.predict_proba(e.x));
  return out;
}

std::vector<double> outputs(const MatcherModel& model, std::span<const FeatureVector> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(model.predict_proba(x));
  return out;
}

std::vector<RiskInstance> instances_for(const RiskModel& model, std::span<const Example> xs,
                                        std::span<const double> mu_hat) {
  std::vector<RiskInstance> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i].id, activate(model.features, xs[i].x), mu_hat[i]});
  return out;
}

std::vector<int> labels_of(std::span<const Example> xs) {
  std::vector<int> y;
  y.reserve(xs.size());
  for (const auto& e : xs) y.push_back(e.label);
  return y;
}

struct Refresh {
  RiskModel risk;
  double rank_loss = 0.0;
  bool refit = false;
};

// Recalibrates the classifier feature and refits the ranking on validation;
// keeps `previous` whole when either step's precondition fails.
Refresh refresh_risk(const RiskModel& previous, const MatcherModel& classifier, const TrainingView& view,
                     const AdaptConfig& config, std::uint64_t seed) {
  const auto mu_val = outputs(classifier, view.validation);
  const auto y_val = labels_of(view.validation);
  Refresh r{previous, 0.0, false};
  try {
    RiskModel candidate = previous;
    candidate.dnn = dnn_feature_fit(mu_val, y_val, config.bins, previous.dnn.u);
    auto rank = config.rank;
    rank.seed = seed;
    auto fit = fit_ranking(candidate, instances_for(candidate, view.validation, mu_val), y_val, rank);
    r.risk = std::move(fit.model);
    r.rank_loss = fit.objective;
    r.refit = true;
  } catch (const PreconditionError&) {
  }
  return r;
}

LedgerSnapshot snapshot_of(const RiskModel& risk, std::span<const RiskInstance> test, std::size_t k) {
  LedgerSnapshot s;
  s.iteration = k;
  for (const auto& inst : test) {
    s.predicted.push_back(inst.mu_hat >= 0.5 ? 1 : 0);
    s.analysis.push_back(analyze_pair(risk, inst));
  }
  return s;
}

std::vector<RiskInstance> test_instances(const RiskModel& risk, const MatcherModel& classifier,
                                         const TrainingView& view) {
  const auto mu = outputs(classifier, view.test);
  return make_instances(risk, view.test_ids, view.test, mu);
}

std::uint64_t iteration_seed(std::uint64_t base, std::size_t k) {
  return base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(k) + 1);
}

}  // namespace

RiskModel build_risk_model(const MatcherModel& classifier, const TrainingView& view, const AdaptConfig& config,
                           std::vector<RiskFeature> rules) {
  const auto mu_val = outputs(classifier, view.validation);
  const auto y_val = labels_of(view.validation);
  auto risk = RiskModel::create(std::move(rules), dnn_feature_fit(mu_val, y_val, config.bins), config.theta);
  return refresh_risk(risk, classifier, view, config, config.rank.seed).risk;
}

IterationResult risk_iteration(const IterationState& state, const TrainingView& view, const AdaptConfig& config,
                               std::size_t k) {
  if (view.test.empty()) throw PreconditionError("risk iteration needs unlabeled test pairs");
  auto refreshed = refresh_risk(state.risk, state.classifier, view, config, iteration_seed(config.rank.seed, k));

  IterationResult out;
  out.rank_loss = refreshed.rank_loss;
  out.refit = refreshed.refit;
  const auto test = test_instances(refreshed.risk, state.classifier, view);
  out.weights = risk_weights(refreshed.risk, test, k);
  out.snapshot = snapshot_of(refreshed.risk, test, k);

  out.state.classifier = state.classifier;
  out.state.optimizer = state.optimizer;
  if (out.state.optimizer.m.size() != out.state.classifier.parameter_count())
    out.state.optimizer = AdamState(out.state.classifier.parameter_count());
  out.state.risk = std::move(refreshed.risk);

  std::vector<std::size_t> order(view.test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(iteration_seed(config.train.seed, k));
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = config.train.learning_rate * config.train.risk_lr_scale;
  std::vector<FeatureVector> xs;
  std::vector<LogLossWeights> ws;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config.train.batch_size) {
    xs.clear();
    ws.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + config.train.batch_size); ++i) {
      xs.push_back(view.test[order[i]]);
      ws.push_back(out.weights.weights[order[i]]);
    }
    loss_sum += weighted_log_loss(out.state.classifier, xs, ws);
    ++batches;
    const auto grad = backward(out.state.classifier, xs, ws);
    adam_step(out.state.classifier.parameters(), out.state.optimizer, grad, lr, config.train.adam);
  }
  out.loss = loss_sum / static_cast<double>(batches);
  return out;
}

AdaptResult fine_tune(const MatcherModel& pretrained, const DatasetSplit& split, const AdaptConfig& config) {
  config.validate();
  const auto view = training_view(split);
  AdaptResult result;
  result.pretrained = pretrained;
  result.ledger = FlipLedger(view.test_ids, split.test_labels());

  auto rules = induce_rules(split.train, config.rules);
  IterationState state{pretrained, build_risk_model(pretrained, view, config, std::move(rules)),
                       AdamState(pretrained.parameter_count())};
  for (std::size_t k = 0; k < config.train.risk_epochs; ++k) {
    auto it = risk_iteration(state, view, config, k);
    result.ledger.record(std::move(it.snapshot));
    state = std::move(it.state);
    EpochRecord rec;
    rec.phase = "risk";
    rec.index = k;
    rec.loss = it.loss;
    rec.rank_loss = it.rank_loss;
    rec.val_f1 = f1_on(state.classifier, split.validation);
    rec.test_f1 = f1_on(state.classifier, split.test);
    result.log.push_back(rec);
  }
  if (config.train.risk_epochs > 0) {
    // closing snapshot so the last iteration's flips can be reported
    auto refreshed =
        refresh_risk(state.risk, state.classifier, view, config, iteration_seed(config.rank.seed, config.train.risk_epochs));
    state.risk = std::move(refreshed.risk);
    result.ledger.record(
        snapshot_of(state.risk, test_instances(state.risk, state.classifier, view), config.train.risk_epochs));
  }
  result.classifier = std::move(state.classifier);
  result.risk = std::move(state.risk);
  return result;
}

AdaptResult adaptive_train(const DatasetSplit& split, const AdaptConfig& config) {
  config.validate();
  if (split.train.empty()) throw PreconditionError("adaptive training needs training data");
  const auto initial =
      MatcherModel::initialized(split.train.front().x.size(), config.train.hidden, config.train.seed);
  auto pre = pretrain(initial, split.train, split.validation, config.train, split.test);
  auto result = fine_tune(pre.model, split, config);
  auto log = std::move(pre.log);
  log.insert(log.end(), result.log.begin(), result.log.end());
  result.log = std::move(log);
  return result;
}

}  // namespace riskadapt
