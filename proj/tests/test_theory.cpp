#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "riskadapt/adapt.hpp"
#include "riskadapt/error.hpp"
#include "riskadapt/theory.hpp"

using namespace riskadapt;

TEST_CASE("bound agrees with the 50-digit closed form") {
  for (std::size_t m : {1, 5, 10, 40})
    for (std::size_t n : {1, 10, 100, 1000, 100000, 1000000, 100000000})
      for (double delta : {0.01, 0.05, 0.2})
        for (double eps : {0.0, 0.2, 0.5}) {
          BoundQuery q{m, n, delta, eps, ErrorDirection::false_negative};
          const double want = oracle::fn_bound(m, n, delta, eps);
          CHECK(std::abs(theorem_bound(q) - want) <= 1e-12);
          q.direction = ErrorDirection::false_positive;
          CHECK(theorem_bound(q) == doctest::Approx(1.0 - want).epsilon(1e-12));
        }
  CHECK(theorem_bound({10, 100, 0.05, 0.2}) == doctest::Approx(-0.418).epsilon(1e-3));
  CHECK(theorem_bound({10, 1000000, 0.05, 0.2}) == doctest::Approx(0.5024).epsilon(1e-3));
}

TEST_CASE("bound rises with the supporter count and falls with m") {
  double prev = -1e9;
  for (std::size_t n = 1; n <= 100000000; n *= 3) {
    const double b = theorem_bound({10, n, 0.05, 0.2});
    CHECK(b > prev);
    prev = b;
  }
  CHECK(theorem_bound({20, 1000, 0.05, 0.2}) < theorem_bound({10, 1000, 0.05, 0.2}));
}

TEST_CASE("bound query validation") {
  CHECK_THROWS_AS(BoundQuery({10, 0, 0.05, 0.2}).validate(), PreconditionError);
  CHECK_THROWS_AS(BoundQuery({10, 10, 0.0, 0.2}).validate(), PreconditionError);
  CHECK_THROWS_AS(BoundQuery({10, 10, 1.0, 0.2}).validate(), PreconditionError);
  CHECK_THROWS_AS(BoundQuery({10, 10, 0.05, -0.1}).validate(), PreconditionError);
  const std::vector<BoundQuery> qs{{10, 100, 0.05, 0.2}};
  CHECK(format_bound_table(qs).rfind("direction\tm\tn\tdelta\tepsilon\tbound\nFN\t10\t100\t", 0) == 0);
}

TEST_CASE("McDiarmid tail stays under the bound") {
  ConcentrationTrial t;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < 6; ++j) {
    t.activation_probability.push_back(u(rng));
    t.weights.push_back(0.5 + u(rng));
    t.mu_f.push_back(u(rng));
    t.sigma2_f.push_back(0.02 * u(rng));
  }
  t.mu_hat_low = 0.2;
  t.mu_hat_high = 0.9;
  t.samples = 20000;
  const std::vector<double> grid{0.0, 0.05, 0.1, 0.2, 0.4};
  const auto rows = mcdiarmid_trial(t, grid);
  REQUIRE(rows.size() == grid.size());
  for (const auto& r : rows) {
    CHECK(r.bound == doctest::Approx(std::exp(-2 * r.epsilon * r.epsilon / 7.0)));
    CHECK(r.empirical <= r.bound + 3 * std::sqrt(r.bound * (1 - r.bound) / t.samples) + 1e-12);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].empirical <= rows[i - 1].empirical);
  const auto again = mcdiarmid_trial(t, grid);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(again[i].empirical == rows[i].empirical);
  t.samples = 999;
  CHECK_THROWS_AS(mcdiarmid_trial(t, grid), PreconditionError);
}

TEST_CASE("activation divergence by group") {
  std::mt19937_64 rng(5);
  const std::size_t n = 500, m = 4;
  std::vector<std::vector<std::uint8_t>> z(n);
  std::vector<int> pred(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) z[i].push_back(rng() % 3 == 0);
    pred[i] = rng() % 2;
    truth[i] = rng() % 2;
  }
  const std::vector<std::string> ids{"r0", "r1", "r2", "r3"};
  const auto rep = assumption1_diagnostic(z, pred, truth, ids);
  auto freq = [&](Outcome o, std::size_t j) {
    double hit = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (outcome_of(pred[i], truth[i]) == o) { total++; hit += z[i][j]; }
    return hit / total;
  };
  double max_diff = 0, sum = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto& f = rep.tp_fn.features[j];
    CHECK(f.feature == ids[j]);
    CHECK(f.freq_a == doctest::Approx(freq(Outcome::tp, j)));
    CHECK(f.freq_b == doctest::Approx(freq(Outcome::fn, j)));
    CHECK(f.abs_diff == doctest::Approx(std::abs(f.freq_a - f.freq_b)));
    CHECK(rep.tn_fp.features[j].freq_a == doctest::Approx(freq(Outcome::tn, j)));
    CHECK(rep.tn_fp.features[j].freq_b == doctest::Approx(freq(Outcome::fp, j)));
    max_diff = std::max(max_diff, f.abs_diff);
    sum += f.abs_diff;
  }
  CHECK(rep.tp_fn.max_abs_diff == doctest::Approx(max_diff));
  CHECK(rep.tp_fn.mean_abs_diff == doctest::Approx(sum / m));
  std::vector<int> all_right = truth;
  CHECK_THROWS_AS(assumption1_diagnostic(z, all_right, truth, ids), PreconditionError);
  CHECK(format_assumption1(rep).find("feature\tfreq_TP\tfreq_FN\tabs_diff") != std::string::npos);
}

TEST_CASE("delta estimates against their definitions") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 200;
  std::vector<PairAnalysis> a(n);
  std::vector<int> pred(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i].mu_hat = u(rng);
    a[i].sigma_hat = 0.3 * u(rng);
    a[i].var_plus = u(rng);
    a[i].var_minus = u(rng);
    a[i].w_hat_share = u(rng);
    pred[i] = a[i].mu_hat >= 0.5;
    truth[i] = u(rng) < 0.2 ? 1 - pred[i] : pred[i];
  }
  const auto sup = count_supporters(a, pred, truth);
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto o = outcome_of(pred[i], truth[i]);
    if (o != Outcome::fn && o != Outcome::fp) {
      CHECK_THROWS_AS(estimate_deltas(a, pred, truth, i), PreconditionError);
      continue;
    }
    const bool fn = o == Outcome::fn;
    const auto d = estimate_deltas(a, pred, truth, i);
    CHECK(d.supporters == sup.supporters[i]);
    CHECK(d.delta_c_simple == doctest::Approx(fn ? sup.delta_c_fn : sup.delta_c_fp));
    double gap_sum = 0;
    std::vector<PairAnalysis> support;
    for (std::size_t j = 0; j < n; ++j) {
      if (outcome_of(pred[j], truth[j]) != (fn ? Outcome::tp : Outcome::tn)) continue;
      support.push_back(a[j]);
      const double gap = fn ? a[i].var_minus - a[j].var_plus : a[i].var_plus - a[j].var_minus;
      if (gap > d.delta_c_simple) gap_sum += gap;
    }
    CHECK(d.delta_var == doctest::Approx(d.supporters ? gap_sum / d.supporters : 0.0));
    double es_k = 0, es = 0;
    for (const auto& s : support) {
      es_k += s.w_hat_share * clamp01(s.mu_hat + (fn ? -2 : 2) * s.sigma_hat);
      es += s.w_hat_share * s.mu_hat;
    }
    es_k /= support.size();
    es /= support.size();
    const double own_k = a[i].w_hat_share * clamp01(a[i].mu_hat + (fn ? -2 : 2) * a[i].sigma_hat);
    const double own = a[i].w_hat_share * a[i].mu_hat;
    const double want = fn ? std::max(es_k - own_k, es - own) : std::max(own_k - es_k, own - es);
    CHECK(d.delta_c_lemma == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(delta_c_lemma(ErrorDirection::false_negative, {}, a, 2.0), PreconditionError);
}
