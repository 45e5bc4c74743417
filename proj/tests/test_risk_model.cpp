#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "riskadapt/corpus.hpp"
#include "riskadapt/error.hpp"
#include "riskadapt/risk_model.hpp"
#include "riskadapt/synthetic.hpp"

using namespace riskadapt;

namespace {

std::vector<RiskInstance> random_instances(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RiskInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    RiskInstance r;
    r.id = "p" + std::to_string(1000 + i);
    for (std::size_t j = 0; j < m; ++j) r.z.push_back(u(rng) < 0.4 ? 1 : 0);
    r.mu_hat = u(rng);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("quantile multiplier") {
  CHECK(quantile_multiplier(0.975) == 2.0);
  CHECK(quantile_multiplier(0.95) == doctest::Approx(1.6448536269514722));
  CHECK(quantile_multiplier(0.99) == doctest::Approx(2.3263478740408408));
  CHECK_THROWS_AS(quantile_multiplier(0.5), PreconditionError);
  CHECK_THROWS_AS(quantile_multiplier(1.0), PreconditionError);
}

TEST_CASE("VaR scores by substitution") {
  const auto s = score_var({0.8, 0.05 * 0.05}, 2.0);
  CHECK(s.var_plus == doctest::Approx(0.3));
  CHECK(s.var_minus == doctest::Approx(0.9));
  const auto point = score_var({0.35, 0.0}, 2.0);
  CHECK(point.var_plus == doctest::Approx(0.65));
  CHECK(point.var_minus == doctest::Approx(0.35));
  const auto wide = score_var({0.9, 0.25}, 2.0);
  CHECK(wide.var_minus == 1.0);
  CHECK(misprediction_risk(s, 0.7) == s.var_plus);
  CHECK(misprediction_risk(s, 0.2) == s.var_minus);
  CHECK(misprediction_risk(s, 0.5) == s.var_plus);
}

TEST_CASE("VaR duality under mirroring") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double mu = u(rng), s2 = 0.3 * u(rng);
    const auto a = score_var({mu, s2}, 2.0), b = score_var({1.0 - mu, s2}, 2.0);
    CHECK(a.var_plus == doctest::Approx(b.var_minus).epsilon(1e-12));
    CHECK(a.var_minus == doctest::Approx(b.var_plus).epsilon(1e-12));
  }
}

TEST_CASE("combine matches the extended-precision mixture") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 1 + rng() % 12;
    std::vector<std::uint8_t> z;
    std::vector<double> w, mu, s2;
    for (std::size_t j = 0; j < m; ++j) {
      z.push_back(u(rng) < 0.5);
      w.push_back(5.0 * u(rng));
      mu.push_back(u(rng));
      s2.push_back(0.1 * u(rng));
    }
    const double wh = 1e-3 + u(rng), mh = u(rng), sh = 0.25 * u(rng);
    const auto got = combine(z, w, mu, s2, wh, mh, sh);
    const auto want = oracle::combine(z, w, mu, s2, wh, mh, sh);
    CHECK(std::abs(got.mu - static_cast<double>(want.mu)) <= 1e-12);
    CHECK(std::abs(got.sigma2 - static_cast<double>(want.sigma2)) <= 1e-12);
    CHECK(got.mu >= 0.0);
    CHECK(got.mu <= 1.0);
  }
  const std::vector<std::uint8_t> none{0, 0};
  const std::vector<double> w{1, 1}, mu{0.1, 0.9}, s2{0.01, 0.01};
  const auto only_dnn = combine(none, w, mu, s2, 0.4, 0.7, 0.02);
  CHECK(only_dnn.mu == doctest::Approx(0.7));
  CHECK(only_dnn.sigma2 == doctest::Approx(0.02));
  CHECK_THROWS_AS(combine(none, w, mu, s2, 0.0, 0.7, 0.02), PreconditionError);
}

TEST_CASE("classifier feature calibration per bin") {
  // bins of width 0.25: [0,.25) two negatives and one positive, [.25,.5) empty,
  // [.5,.75) empty, [.75,1] all positive
  const std::vector<double> mu{0.1, 0.2, 0.05, 0.9, 0.8, 1.0};
  const std::vector<int> y{0, 0, 1, 1, 1, 1};
  const auto f = dnn_feature_fit(mu, y, 4, 1.5);
  REQUIRE(f.bins() == 4);
  const double first = (1.0 / 3.0) * (2.0 / 3.0);
  CHECK(f.sigma2_hat[0] == doctest::Approx(first));
  CHECK(f.sigma2_hat[3] == kBinVarianceFloor);
  CHECK(f.sigma2_hat[1] == doctest::Approx((first + kBinVarianceFloor) / 2));
  CHECK(f.sigma2_hat[2] == doctest::Approx((first + kBinVarianceFloor) / 2));
  CHECK(f.bin_of(1.0) == 3);
  CHECK(f.bin_of(0.25) == 1);
  CHECK(f.u == 1.5);
  CHECK(f.weight(0.9) == doctest::Approx(1.5 * 0.8 + 1e-3));
  CHECK(f.weight(0.5) == doctest::Approx(1e-3));
  CHECK_THROWS_AS(dnn_feature_fit(mu, std::vector<int>(6, 1), 4), PreconditionError);
  CHECK_THROWS_AS(dnn_feature_fit({}, {}, 4), PreconditionError);
}

TEST_CASE("aggregate uses the model's weights and classifier feature") {
  std::mt19937_64 rng(2);
  const auto model = oracle::random_model(rng, 6);
  model.validate();
  for (const auto& inst : random_instances(rng, 6, 50)) {
    std::vector<double> mu_f, s2_f;
    for (const auto& f : model.features) {
      mu_f.push_back(f.mu_f);
      s2_f.push_back(f.sigma2_f);
    }
    const auto want = oracle::combine(inst.z, model.weights, mu_f, s2_f, model.dnn.weight(inst.mu_hat), inst.mu_hat,
                                      model.dnn.variance(inst.mu_hat));
    const auto got = aggregate(model, inst.z, inst.mu_hat);
    CHECK(std::abs(got.mu - static_cast<double>(want.mu)) <= 1e-12);
  }
}

TEST_CASE("ranking is by descending risk with ties broken by id") {
  std::mt19937_64 rng(5);
  const auto model = oracle::random_model(rng, 5);
  auto inst = random_instances(rng, 5, 200);
  inst.push_back(inst[3]);
  inst.back().id = "p0000";
  const auto ranked = rank_by_risk(model, inst);
  REQUIRE(ranked.size() == inst.size());
  std::vector<std::pair<double, std::string>> want;
  for (const auto& i : inst) {
    const auto d = aggregate(model, i.z, i.mu_hat);
    want.push_back({misprediction_risk(score_var(d, model), i.mu_hat), i.id});
  }
  std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].id == want[i].second);
    CHECK(ranked[i].risk == want[i].first);
  }
  const auto text = format_ranked_risk(ranked);
  CHECK(text.rfind("pair_id\tpredicted\trisk\tmu\tsigma\n", 0) == 0);
}

TEST_CASE("parameter packing round-trips") {
  std::mt19937_64 rng(6);
  const auto model = oracle::random_model(rng, 7);
  const auto raw = pack_parameters(model);
  CHECK(raw.size() == 2 * 7 + 1);
  RiskModel back = model;
  unpack_parameters(back, raw);
  for (std::size_t j = 0; j < 7; ++j) {
    CHECK(back.weights[j] == doctest::Approx(model.weights[j]).epsilon(1e-12));
    CHECK(back.features[j].sigma2_f == doctest::Approx(model.features[j].sigma2_f).epsilon(1e-12));
  }
  CHECK(back.dnn.u == doctest::Approx(model.dnn.u).epsilon(1e-12));
}

TEST_CASE("ranking objective gradient agrees with central differences") {
  std::mt19937_64 rng(31);
  for (int draw = 0; draw < 20; ++draw) {
    const auto model = oracle::random_model(rng, 5);
    const auto inst = random_instances(rng, 5, 40);
    std::vector<RankPair> pairs;
    for (std::size_t a = 0; a < 20; ++a) pairs.push_back({a, 20 + (a * 7) % 20});
    std::vector<double> grad;
    const double f0 = ranking_objective(model, inst, pairs, 0.3, &grad);
    CHECK(f0 >= 0.0);
    const auto raw = pack_parameters(model);
    REQUIRE(grad.size() == raw.size());
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      auto up = raw, down = raw;
      const double h = 1e-6;
      up[i] += h;
      down[i] -= h;
      RiskModel mu = model, md = model;
      unpack_parameters(mu, up);
      unpack_parameters(md, down);
      const double fd = (ranking_objective(mu, inst, pairs, 0.3) - ranking_objective(md, inst, pairs, 0.3)) / (2 * h);
      diff += (fd - grad[i]) * (fd - grad[i]);
      norm += std::max(fd * fd, grad[i] * grad[i]);
    }
    if (norm > 0) CHECK(std::sqrt(diff / norm) < 1e-4);
  }
}

TEST_CASE("ranking fit lowers the hinge objective") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto model = oracle::random_model(rng, 6);
  for (auto& w : model.weights) w = 1.0;
  model.features[0].mu_f = 0.9;
  model.features[1].mu_f = 0.1;
  // rule 0 flags true matches the classifier misses, rule 1 false matches it accepts
  std::vector<RiskInstance> inst;
  std::vector<int> labels;
  for (int i = 0; i < 400; ++i) {
    RiskInstance r;
    r.id = "v" + std::to_string(i);
    r.z.assign(6, 0);
    for (std::size_t j = 2; j < 6; ++j) r.z[j] = u(rng) < 0.3;
    const int y = u(rng) < 0.4;
    const bool wrong = u(rng) < 0.15;
    const double conf = 0.55 + 0.4 * u(rng);
    const int pred = wrong ? 1 - y : y;
    r.mu_hat = pred ? conf : 1.0 - conf;
    if (wrong) r.z[y ? 0 : 1] = 1;
    inst.push_back(r);
    labels.push_back(y);
  }
  std::vector<RankPair> all;
  for (std::size_t a = 0; a < inst.size(); ++a)
    if ((inst[a].mu_hat >= 0.5) != (labels[a] == 1))
      for (std::size_t b = 0; b < inst.size(); ++b)
        if ((inst[b].mu_hat >= 0.5) == (labels[b] == 1)) all.push_back({a, b});
  RankFitConfig cfg;
  const auto fit = fit_ranking(model, inst, labels, cfg);
  fit.model.validate();
  CHECK(ranking_objective(fit.model, inst, all, cfg.margin) < ranking_objective(model, inst, all, cfg.margin));
  CHECK(fit.mispredicted + fit.correct == inst.size());
  for (std::size_t j = 0; j < 6; ++j) CHECK(fit.model.features[j].mu_f == model.features[j].mu_f);
  const auto again = fit_ranking(model, inst, labels, cfg);
  CHECK(again.model == fit.model);

  std::vector<int> perfect;
  for (const auto& r : inst) perfect.push_back(r.mu_hat >= 0.5);
  CHECK_THROWS_AS(fit_ranking(model, inst, perfect, cfg), PreconditionError);
}

TEST_CASE("risk model file round-trip") {
  std::mt19937_64 rng(9);
  auto model = oracle::random_model(rng, 4);
  const FeatureSchema schema(bibliographic_schema());
  const auto back = parse_risk_model(write_risk_model(model, schema), schema);
  CHECK(back == model);
  CHECK_THROWS_AS(parse_risk_model("# riskadapt-risk-model 1\ntheta x\n", schema), ParseError);
}
