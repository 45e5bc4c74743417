#include <doctest.h>

#include <map>
#include <set>

#include "riskadapt/corpus.hpp"
#include "riskadapt/error.hpp"
#include "riskadapt/rules.hpp"
#include "riskadapt/synthetic.hpp"

using namespace riskadapt;

namespace {

std::vector<Example> rule_data() {
  SyntheticSpec spec;
  spec.n_entities = 120;
  spec.duplicates_per_entity = 4;
  spec.sources = {Corruption{0.05, 0.05, 0.02}, Corruption{0.3, 0.05, 0.02}};
  spec.seed = 3;
  return workload_examples(generate_workload(spec), 1);
}

}  // namespace

TEST_CASE("every induced rule is sound on the training data") {
  const auto train = rule_data();
  RuleParams params;
  const auto rules = induce_rules(train, params);
  REQUIRE_FALSE(rules.empty());
  std::set<std::vector<Predicate>> conjunctions;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    CHECK(rule.id == "r" + std::to_string(r));
    std::size_t covered = 0, agree = 0, positives = 0;
    for (const auto& e : train) {
      bool all = true;
      for (const auto& p : rule.conjunction) all = all && p.holds(e.x);
      CHECK(all == rule.matches(e.x));
      if (!all) continue;
      ++covered;
      positives += e.label;
      agree += e.label == rule.asserted_class;
    }
    CHECK(covered == rule.coverage);
    CHECK(static_cast<double>(covered) >= params.min_coverage * train.size());
    CHECK(static_cast<double>(agree) / covered >= params.purity);
    CHECK(rule.mu_f == doctest::Approx((positives + 1.0) / (covered + 2.0)).epsilon(1e-15));
    CHECK(estimate_prior(rule, train) == rule.mu_f);
    CHECK(rule.sigma2_f == kInitialRuleVariance);
    std::set<std::pair<std::size_t, Comparator>> keys;
    for (const auto& p : rule.conjunction) CHECK(keys.insert({p.channel, p.comparator}).second);
    CHECK(conjunctions.insert(rule.conjunction).second);
    CHECK(rule.conjunction.size() <= params.depth);
  }
  bool both_classes[2] = {false, false};
  for (const auto& r : rules) both_classes[r.asserted_class] = true;
  CHECK(both_classes[0]);
  CHECK(both_classes[1]);
}

TEST_CASE("rule induction is seeded") {
  const auto train = rule_data();
  RuleParams p;
  CHECK(induce_rules(train, p) == induce_rules(train, p));
  RuleParams strict = p;
  strict.purity = 1.0;
  for (const auto& r : induce_rules(train, strict)) {
    for (const auto& e : train)
      if (r.matches(e.x)) CHECK(e.label == r.asserted_class);
  }
}

TEST_CASE("rule induction preconditions") {
  RuleParams p;
  CHECK_THROWS_AS(induce_rules({}, p), PreconditionError);
  std::vector<Example> one_class{{"a", FeatureVector{{0.1}}, 1}, {"b", FeatureVector{{0.2}}, 1}};
  CHECK_THROWS_AS(induce_rules(one_class, p), PreconditionError);
  p.purity = 1.5;
  CHECK_THROWS_AS(p.validate(), PreconditionError);
  RiskFeature never{"r0", {{0, Comparator::gt, 2.0}}, 1};
  CHECK_THROWS_AS(estimate_prior(never, one_class), PreconditionError);
}

TEST_CASE("activation is the per-rule match indicator") {
  const std::vector<RiskFeature> rules{{"r0", {{0, Comparator::le, 0.5}}, 0},
                                       {"r1", {{0, Comparator::gt, 0.3}, {1, Comparator::gt, 0.8}}, 1}};
  CHECK(activate(rules, FeatureVector{{0.4, 0.9}}) == std::vector<std::uint8_t>{1, 1});
  CHECK(activate(rules, FeatureVector{{0.6, 0.9}}) == std::vector<std::uint8_t>{0, 1});
  CHECK(activate(rules, FeatureVector{{0.5, 0.8}}) == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("rule rendering and file round-trip") {
  const FeatureSchema schema(bibliographic_schema());
  RiskFeature r{"r0",
                {{schema.index_of("year_eq"), Comparator::le, 0.5},
                 {schema.index_of("title_jaccard"), Comparator::le, 0.3}},
                0, 17, 0.1, 0.01};
  CHECK(render_rule(r, schema) == "year_eq ≤ 0.5 ∧ title_jaccard ≤ 0.3 → inequivalent");
  const auto rules = induce_rules(rule_data(), RuleParams{});
  const auto text = write_rules(rules, schema);
  CHECK(text.rfind("# riskadapt-rules 1\n", 0) == 0);
  CHECK(parse_rules(text, schema) == rules);
  try {
    parse_rules("# riskadapt-rules 1\nr0\tbogus_channel <= 0.5\tequivalent\t3\t0.5\t0.01\n", schema);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_rule_line("r0\ttitle_edit <= 0.5\tequivalent\t3\t1.5\t0.01", schema, 1), ParseError);
}
