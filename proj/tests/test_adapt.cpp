#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "riskadapt/adapt.hpp"
#include "riskadapt/error.hpp"
#include "riskadapt/synthetic.hpp"

using namespace riskadapt;

namespace {

std::vector<PairAnalysis> random_analysis(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PairAnalysis> out(n);
  for (auto& a : out) {
    a.var_plus = u(rng);
    a.var_minus = u(rng);
    a.w_hat_share = 0.3 * u(rng);
  }
  return out;
}

DatasetSplit small_split(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_entities = 80;
  spec.duplicates_per_entity = 4;
  spec.sources = {Corruption{0.05, 0.05, 0.02}, Corruption{0.3, 0.05, 0.02}};
  spec.seed = seed;
  return split_dataset(workload_examples(generate_workload(spec), 1), SplitRatios{}, seed);
}

}  // namespace

TEST_CASE("outcomes") {
  CHECK(outcome_of(1, 1) == Outcome::tp);
  CHECK(outcome_of(0, 0) == Outcome::tn);
  CHECK(outcome_of(1, 0) == Outcome::fp);
  CHECK(outcome_of(0, 1) == Outcome::fn);
  CHECK(std::string(outcome_name(Outcome::fn)) == "FN");
}

TEST_CASE("risk loss by substitution") {
  const MatcherModel zero(2, 3);
  const std::vector<FeatureVector> xs{FeatureVector{{0.3, 0.4}}};
  RiskWeights w{0, {{0.7, 0.1}}};
  CHECK(risk_loss(zero, xs, w) == doctest::Approx(0.8 * std::log(2.0)));
  CHECK(log_loss_probability_derivative(0.5, {0.7, 0.1}) == doctest::Approx(-1.2));
  RiskWeights maximal{0, {{0.0, 0.0}}};
  CHECK(risk_loss(zero, xs, maximal) == 0.0);
}

TEST_CASE("risk weights are one minus the VaR scores") {
  std::mt19937_64 rng(3);
  const auto model = oracle::random_model(rng, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RiskInstance> inst;
  for (int i = 0; i < 30; ++i) {
    RiskInstance r{"p" + std::to_string(i), {}, u(rng)};
    for (int j = 0; j < 5; ++j) r.z.push_back(u(rng) < 0.5);
    inst.push_back(r);
  }
  const auto w = risk_weights(model, inst, 4);
  CHECK(w.iteration == 4);
  REQUIRE(w.weights.size() == inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto s = score_var(aggregate(model, inst[i].z, inst[i].mu_hat), model);
    CHECK(w.weights[i].pos == doctest::Approx(1.0 - s.var_plus).epsilon(1e-15));
    CHECK(w.weights[i].neg == doctest::Approx(1.0 - s.var_minus).epsilon(1e-15));
    const auto a = analyze_pair(model, inst[i]);
    CHECK(a.var_plus == s.var_plus);
    CHECK(a.w_hat_share > 0.0);
    CHECK(a.w_hat_share <= 1.0);
  }
}

TEST_CASE("supporter counts match a pairwise scan") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 300;
    const auto analysis = random_analysis(rng, n);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng() % 2;
      truth[i] = rng() % 2;
    }
    double tp_share = 0, tn_share = 0;
    std::size_t tps = 0, tns = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] && truth[i]) { tp_share += analysis[i].w_hat_share; ++tps; }
      if (!pred[i] && !truth[i]) { tn_share += analysis[i].w_hat_share; ++tns; }
    }
    const double dfn = tp_share / tps, dfp = tn_share / tns;
    const auto s = count_supporters(analysis, pred, truth);
    CHECK(s.delta_c_fn == doctest::Approx(dfn).epsilon(1e-14));
    CHECK(s.delta_c_fp == doctest::Approx(dfp).epsilon(1e-14));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t expected = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!pred[i] && truth[i] && pred[j] && truth[j])
          expected += analysis[i].var_minus - analysis[j].var_plus > dfn;
        if (pred[i] && !truth[i] && !pred[j] && !truth[j])
          expected += analysis[i].var_plus - analysis[j].var_minus > dfp;
      }
      CHECK(s.supporters[i] == expected);
    }
  }
}

TEST_CASE("flip report counts transitions by outcome and support") {
  std::mt19937_64 rng(15);
  const std::size_t n = 400;
  std::vector<std::string> ids;
  std::vector<int> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("p" + std::to_string(i));
    truth[i] = rng() % 2;
  }
  FlipLedger ledger(ids, truth);
  LedgerSnapshot s0{0, std::vector<int>(n), random_analysis(rng, n)};
  LedgerSnapshot s1{1, std::vector<int>(n), random_analysis(rng, n)};
  for (std::size_t i = 0; i < n; ++i) {
    s0.predicted[i] = rng() % 2;
    s1.predicted[i] = rng() % 3 == 0 ? 1 - s0.predicted[i] : s0.predicted[i];
  }
  ledger.record(s0);
  CHECK_THROWS_AS(flip_report(ledger, 0), PreconditionError);
  ledger.record(s1);
  const auto r = flip_report(ledger, 0);
  const auto sup = count_supporters(s0.analysis, s0.predicted, truth);
  std::array<FlipCount, 4> by{};
  std::array<FlipCount, 2> fn{}, fp{};
  for (std::size_t i = 0; i < n; ++i) {
    const auto o = static_cast<std::size_t>(outcome_of(s0.predicted[i], truth[i]));
    const bool f = s0.predicted[i] != s1.predicted[i];
    by[o].total++;
    by[o].flipped += f;
    auto& bucket = (o == 3 ? fn : fp)[sup.supporters[i] >= 100];
    if (o >= 2) { bucket.total++; bucket.flipped += f; }
  }
  for (std::size_t o = 0; o < 4; ++o) {
    CHECK(r.by_outcome[o].total == by[o].total);
    CHECK(r.by_outcome[o].flipped == by[o].flipped);
  }
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(r.fn_by_support[b].total == fn[b].total);
    CHECK(r.fn_by_support[b].flipped == fn[b].flipped);
    CHECK(r.fp_by_support[b].total == fp[b].total);
    CHECK(r.fp_by_support[b].flipped == fp[b].flipped);
  }
  CHECK(format_flip_report(r).find("status\ttotal\tflipped") != std::string::npos);
}

TEST_CASE("adaptive training is reproducible and logs every epoch") {
  const auto split = small_split(4);
  AdaptConfig cfg;
  cfg.train.pretrain_epochs = 5;
  cfg.train.risk_epochs = 3;
  cfg.validate();
  const auto a = adaptive_train(split, cfg);
  CHECK(a.log.size() == 8);
  CHECK(a.log[4].phase == "pretrain");
  CHECK(a.log[5].phase == "risk");
  CHECK(a.ledger.snapshots().size() == 4);
  CHECK(a.ledger.truth() == split.test_labels());
  const auto b = adaptive_train(split, cfg);
  CHECK(a.classifier == b.classifier);
  CHECK(a.risk == b.risk);
  CHECK(format_metrics_log(a.log) == format_metrics_log(b.log));
  const auto ft = fine_tune(a.pretrained, split, cfg);
  CHECK(ft.classifier == a.classifier);
}

TEST_CASE("a risk iteration only touches the classifier through the frozen weights") {
  const auto split = small_split(6);
  AdaptConfig cfg;
  cfg.train.pretrain_epochs = 5;
  const auto view = training_view(split);
  CHECK(view.test.size() == split.test.size());
  const auto pre = pretrain(MatcherModel::initialized(view.train.front().x.size(), cfg.train.hidden, cfg.train.seed),
                            split.train, split.validation, cfg.train);
  IterationState state{pre.model, build_risk_model(pre.model, view, cfg, induce_rules(split.train, cfg.rules)),
                       AdamState(pre.model.parameter_count())};
  const auto r = risk_iteration(state, view, cfg, 0);
  CHECK(r.weights.weights.size() == view.test.size());
  CHECK(r.snapshot.predicted == predict_all(pre.model, view.test));
  CHECK(r.state.optimizer.step > 0);
  CHECK_FALSE(r.state.classifier == pre.model);
  for (const auto& w : r.weights.weights) {
    CHECK(w.pos >= 0.0);
    CHECK(w.pos <= 1.0);
    CHECK(w.neg >= 0.0);
    CHECK(w.neg <= 1.0);
  }
}
