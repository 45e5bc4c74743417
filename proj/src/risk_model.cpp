#include "riskadapt/risk_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "riskadapt/error.hpp"
#include "riskadapt/matcher.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

namespace {

double softplus(double a) { return a > 30.0 ? a : std::log1p(std::exp(a)); }
double softplus_inverse(double w) {
  w = std::max(w, 1e-12);
  return w > 30.0 ? w : std::log(std::expm1(w));
}
double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

std::size_t DnnRiskFeature::bin_of(double mu_hat) const {
  if (sigma2_hat.empty()) throw PreconditionError("classifier risk feature has no bins");
  const double b = static_cast<double>(sigma2_hat.size());
  const double idx = std::floor(std::clamp(mu_hat, 0.0, 1.0) * b);
  return std::min(sigma2_hat.size() - 1, static_cast<std::size_t>(idx));
}

double DnnRiskFeature::weight(double mu_hat) const { return u * 2.0 * std::abs(mu_hat - 0.5) + kDnnWeightFloor; }

DnnRiskFeature dnn_feature_fit(std::span<const double> mu_hat, std::span<const int> labels, std::size_t bins,
                               double u) {
  if (mu_hat.empty()) throw PreconditionError("calibrating the classifier feature needs validation data");
  if (mu_hat.size() != labels.size()) throw PreconditionError("outputs and labels differ in length");
  if (bins < 1) throw PreconditionError("at least one confidence bin is required");
  if (!(u >= 0.0)) throw PreconditionError("weight scale must be non-negative");
  bool any_pos = false, any_neg = false;
  for (int y : labels) (y ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg) throw PreconditionError("calibration data must contain both classes");

  DnnRiskFeature f;
  f.u = u;
  f.sigma2_hat.assign(bins, 0.0);
  std::vector<std::size_t> n(bins, 0), pos(bins, 0);
  for (std::size_t i = 0; i < mu_hat.size(); ++i) {
    const auto b = f.bin_of(mu_hat[i]);
    ++n[b];
    pos[b] += static_cast<std::size_t>(labels[i]);
  }
  std::vector<bool> filled(bins, false);
  for (std::size_t b = 0; b < bins; ++b) {
    if (!n[b]) continue;
    const double p = static_cast<double>(pos[b]) / static_cast<double>(n[b]);
    f.sigma2_hat[b] = std::max(kBinVarianceFloor, p * (1.0 - p));
    filled[b] = true;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (filled[b]) continue;
    double sum = 0.0;
    int count = 0;
    for (std::size_t l = b; l-- > 0;)
      if (filled[l]) {
        sum += f.sigma2_hat[l];
        ++count;
        break;
      }
    for (std::size_t r = b + 1; r < bins; ++r)
      if (filled[r]) {
        sum += f.sigma2_hat[r];
        ++count;
        break;
      }
    f.sigma2_hat[b] = sum / count;  // at least one bin is filled
  }
  return f;
}

double EquivalenceDistribution::sigma() const { return std::sqrt(std::max(0.0, sigma2)); }

double quantile_multiplier(double theta) {
  if (!(theta > 0.5 && theta < 1.0)) throw PreconditionError("confidence level must lie in (0.5, 1)");
  if (theta == 0.975) return 2.0;
  return boost::math::quantile(boost::math::normal_distribution<double>(), theta);
}

RiskModel RiskModel::create(std::vector<RiskFeature> features, DnnRiskFeature dnn, double theta) {
  RiskModel m;
  m.weights.assign(features.size(), 1.0);
  m.features = std::move(features);
  m.dnn = std::move(dnn);
  m.theta = theta;
  m.k = quantile_multiplier(theta);
  m.validate();
  return m;
}

void RiskModel::validate() const {
  if (weights.size() != features.size()) throw IntegrityError("risk model has one weight per rule feature");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw IntegrityError("rule weights must be finite and non-negative");
  for (const auto& f : features)
    if (!(f.sigma2_f > 0.0) || !std::isfinite(f.sigma2_f)) throw IntegrityError("rule variances must be positive");
  if (dnn.sigma2_hat.empty()) throw IntegrityError("classifier risk feature has no bins");
  if (!(dnn.u >= 0.0)) throw IntegrityError("classifier weight scale must be non-negative");
  if (!(k > 0.0)) throw IntegrityError("quantile multiplier must be positive");
}

EquivalenceDistribution combine(std::span<const std::uint8_t> z, std::span<const double> w,
                                std::span<const double> mu_f, std::span<const double> sigma2_f, double w_hat,
                                double mu_hat, double sigma2_hat) {
  if (z.size() != w.size() || z.size() != mu_f.size() || z.size() != sigma2_f.size())
    throw PreconditionError("activation length does not match the number of rule features");
  if (!(w_hat > 0.0)) throw PreconditionError("classifier weight must be positive");
  double n = w_hat, num = w_hat * mu_hat, var = w_hat * w_hat * sigma2_hat;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!z[j]) continue;
    n += w[j];
    num += w[j] * mu_f[j];
    var += w[j] * w[j] * sigma2_f[j];
  }
  return {num / n, var / (n * n)};
}

EquivalenceDistribution aggregate(const RiskModel& model, std::span<const std::uint8_t> z, double mu_hat) {
  if (z.size() != model.features.size())
    throw PreconditionError("activation length does not match the number of rule features");
  const double w_hat = model.dnn.weight(mu_hat);
  double n = w_hat, num = w_hat * mu_hat, var = w_hat * w_hat * model.dnn.variance(mu_hat);
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!z[j]) continue;
    const double w = model.weights[j];
    n += w;
    num += w * model.features[j].mu_f;
    var += w * w * model.features[j].sigma2_f;
  }
  return {num / n, var / (n * n)};
}

RiskScore score_var(const EquivalenceDistribution& dist, double k) {
  // (1 - mu) + k sigma rather than 1 - (mu - k sigma): the mirrored form rounds
  // identically to mu + k sigma at mu = 0.5
  const double ks = k * dist.sigma();
  return {std::clamp((1.0 - dist.mu) + ks, 0.0, 1.0), std::clamp(dist.mu + ks, 0.0, 1.0)};
}

double misprediction_risk(const RiskScore& score, double mu_hat) {
  return mu_hat >= 0.5 ? score.var_plus : score.var_minus;
}

std::vector<RiskInstance> make_instances(const RiskModel& model, std::span<const std::string> ids,
                                         std::span<const FeatureVector> xs, std::span<const double> mu_hat) {
  if (ids.size() != xs.size() || xs.size() != mu_hat.size())
    throw PreconditionError("ids, features and classifier outputs differ in length");
  std::vector<RiskInstance> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({ids[i], activate(model.features, xs[i]), mu_hat[i]});
  return out;
}

std::vector<RankedRisk> rank_by_risk(const RiskModel& model, std::span<const RiskInstance> instances) {
  std::vector<RankedRisk> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto d = aggregate(model, inst.z, inst.mu_hat);
    const auto s = score_var(d, model);
    out.push_back({inst.id, inst.mu_hat >= 0.5 ? 1 : 0, misprediction_risk(s, inst.mu_hat), d.mu, d.sigma()});
  }
  std::sort(out.begin(), out.end(), [](const RankedRisk& a, const RankedRisk& b) {
    if (a.risk != b.risk) return a.risk > b.risk;
    return a.id < b.id;
  });
  return out;
}

std::string format_ranked_risk(std::span<const RankedRisk> ranking) {
  std::ostringstream out;
  out << "pair_id\tpredicted\trisk\tmu\tsigma\n";
  for (const auto& r : ranking)
    out << r.id << '\t' << r.predicted << '\t' << format_double(r.risk) << '\t' << format_double(r.mu) << '\t'
        << format_double(r.sigma) << '\n';
  return out.str();
}

void RankFitConfig::validate() const {
  if (!(margin > 0.0)) throw PreconditionError("ranking margin must be positive");
  if (pair_samples < 1) throw PreconditionError("ranking fit needs at least one pair per step");
  if (!(learning_rate > 0.0)) throw PreconditionError("ranking learning rate must be positive");
}

std::vector<double> pack_parameters(const RiskModel& model) {
  const std::size_t m = model.features.size();
  std::vector<double> raw(2 * m + 1);
  for (std::size_t j = 0; j < m; ++j) {
    raw[j] = softplus_inverse(model.weights[j]);
    raw[m + j] = std::log(model.features[j].sigma2_f);
  }
  raw[2 * m] = softplus_inverse(model.dnn.u);
  return raw;
}

void unpack_parameters(RiskModel& model, std::span<const double> raw) {
  const std::size_t m = model.features.size();
  if (raw.size() != 2 * m + 1) throw PreconditionError("parameter vector does not match the risk model");
  for (std::size_t j = 0; j < m; ++j) {
    model.weights[j] = softplus(raw[j]);
    model.features[j].sigma2_f = std::exp(raw[m + j]);
  }
  model.dnn.u = softplus(raw[2 * m]);
}

namespace {

// Risk of one instance and its derivative with respect to the packed
// parameters, accumulated into `grad` with factor `scale`.
double risk_with_gradient(const RiskModel& model, const RiskInstance& inst, double scale, std::vector<double>* grad) {
  const std::size_t m = model.features.size();
  const double mu_hat = inst.mu_hat;
  const double conf = 2.0 * std::abs(mu_hat - 0.5);
  const double w_hat = model.dnn.weight(mu_hat);
  const double s_hat = model.dnn.variance(mu_hat);

  double n = w_hat, num = w_hat * mu_hat, S = w_hat * w_hat * s_hat;
  for (std::size_t j = 0; j < m; ++j) {
    if (!inst.z[j]) continue;
    const double w = model.weights[j];
    n += w;
    num += w * model.features[j].mu_f;
    S += w * w * model.features[j].sigma2_f;
  }
  const double mu = num / n;
  const double root = std::sqrt(S);
  const double sigma = root / n;
  const bool plus = mu_hat >= 0.5;
  const double raw_risk = plus ? 1.0 - mu + model.k * sigma : mu + model.k * sigma;
  const double risk = std::clamp(raw_risk, 0.0, 1.0);
  if (!grad || raw_risk <= 0.0 || raw_risk >= 1.0) return risk;

  const double dmu_sign = plus ? -1.0 : 1.0;
  auto& g = *grad;
  for (std::size_t j = 0; j < m; ++j) {
    if (!inst.z[j]) continue;
    const double w = model.weights[j];
    const double s = model.features[j].sigma2_f;
    const double dmu_dw = (model.features[j].mu_f - mu) / n;
    const double dsig_dw = w * s / (root * n) - sigma / n;
    const double dsig_ds = w * w / (2.0 * root * n);
    const double dw_draw = logistic(softplus_inverse(w));
    g[j] += scale * (dmu_sign * dmu_dw + model.k * dsig_dw) * dw_draw;
    g[m + j] += scale * model.k * dsig_ds * s;
  }
  const double dmu_dwh = (mu_hat - mu) / n;
  const double dsig_dwh = w_hat * s_hat / (root * n) - sigma / n;
  const double du_draw = logistic(softplus_inverse(model.dnn.u));
  g[2 * m] += scale * (dmu_sign * dmu_dwh + model.k * dsig_dwh) * conf * du_draw;
  return risk;
}

}  // namespace

double ranking_objective(const RiskModel& model, std::span<const RiskInstance> instances,
                         std::span<const RankPair> pairs, double margin, std::vector<double>* gradient) {
  if (pairs.empty()) throw PreconditionError("ranking objective over no pairs");
  const std::size_t m = model.features.size();
  if (gradient) gradient->assign(2 * m + 1, 0.0);
  const double scale = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    if (a >= instances.size() || b >= instances.size()) throw PreconditionError("ranking pair index out of range");
    const double ra = risk_with_gradient(model, instances[a], 0.0, nullptr);
    const double rb = risk_with_gradient(model, instances[b], 0.0, nullptr);
    const double h = margin - (ra - rb);
    if (h <= 0.0) continue;
    total += h;
    if (gradient) {
      risk_with_gradient(model, instances[a], -scale, gradient);
      risk_with_gradient(model, instances[b], scale, gradient);
    }
  }
  return total * scale;
}

RankFitResult fit_ranking(const RiskModel& model, std::span<const RiskInstance> validation,
                          std::span<const int> labels, const RankFitConfig& config) {
  config.validate();
  model.validate();
  if (validation.size() != labels.size()) throw PreconditionError("validation instances and labels differ in length");
  std::vector<std::size_t> wrong, right;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    if (validation[i].z.size() != model.features.size())
      throw PreconditionError("activation length does not match the number of rule features");
    ((validation[i].mu_hat >= 0.5 ? 1 : 0) != labels[i] ? wrong : right).push_back(i);
  }
  if (wrong.empty() || right.empty())
    throw PreconditionError("ranking refit needs both mispredicted and correct validation instances; keep the previous risk model");

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_a(0, wrong.size() - 1), pick_b(0, right.size() - 1);
  auto sample = [&](std::size_t count) {
    std::vector<RankPair> pairs(count);
    for (auto& p : pairs) {
      p.first = wrong[pick_a(rng)];
      p.second = right[pick_b(rng)];
    }
    return pairs;
  };
  const auto eval_pairs = sample(1024);

  RankFitResult result{model, 0.0, wrong.size(), right.size()};
  auto raw = pack_parameters(result.model);
  AdamState state(raw.size());
  std::vector<double> grad;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto pairs = sample(config.pair_samples);
    ranking_objective(result.model, validation, pairs, config.margin, &grad);
    adam_step(raw, state, grad, config.learning_rate, AdamSettings{});
    // keep variances in a sane range so sqrt/log stay finite
    for (std::size_t j = 0; j < model.features.size(); ++j)
      raw[model.features.size() + j] = std::clamp(raw[model.features.size() + j], -20.0, 5.0);
    unpack_parameters(result.model, raw);
  }
  result.objective = ranking_objective(result.model, validation, eval_pairs, config.margin);
  return result;
}

std::string write_risk_model(const RiskModel& model, const FeatureSchema& schema) {
  model.validate();
  std::ostringstream out;
  out << "# riskadapt-risk-model 1\n";
  out << "theta\t" << format_double(model.theta) << '\n';
  out << "k\t" << format_double(model.k) << '\n';
  out << "u\t" << format_double(model.dnn.u) << '\n';
  out << "sigma2_hat";
  for (double v : model.dnn.sigma2_hat) out << '\t' << format_double(v);
  out << "\nweights";
  for (double w : model.weights) out << '\t' << format_double(w);
  out << '\n' << write_rules(model.features, schema);
  return out.str();
}

RiskModel parse_risk_model(std::string_view text, const FeatureSchema& schema) {
  const auto rules_at = text.find("# riskadapt-rules ");
  if (text.rfind("# riskadapt-risk-model 1\n", 0) != 0) throw ParseError("not a risk model file (bad header)", 1);
  if (rules_at == std::string_view::npos) throw ParseError("risk model file has no rule section");
  RiskModel m;
  std::istringstream in{std::string(text.substr(0, rules_at))};
  std::string line;
  std::size_t lineno = 0;
  bool have_theta = false, have_k = false, have_u = false, have_bins = false, have_weights = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split(line, '\t');
    try {
      if (f[0] == "theta" && f.size() == 2) {
        m.theta = parse_double(f[1]);
        have_theta = true;
      } else if (f[0] == "k" && f.size() == 2) {
        m.k = parse_double(f[1]);
        have_k = true;
      } else if (f[0] == "u" && f.size() == 2) {
        m.dnn.u = parse_double(f[1]);
        have_u = true;
      } else if (f[0] == "sigma2_hat") {
        for (std::size_t i = 1; i < f.size(); ++i) m.dnn.sigma2_hat.push_back(parse_double(f[i]));
        have_bins = true;
      } else if (f[0] == "weights") {
        for (std::size_t i = 1; i < f.size(); ++i) m.weights.push_back(parse_double(f[i]));
        have_weights = true;
      } else {
        throw ParseError("unexpected entry '" + f[0] + "'");
      }
    } catch (const ParseError& e) {
      if (e.line()) throw;
      throw ParseError(e.what(), lineno);
    }
  }
  if (!(have_theta && have_k && have_u && have_bins && have_weights))
    throw ParseError("risk model file is missing theta, k, u, sigma2_hat or weights");
  m.features = parse_rules(text.substr(rules_at), schema);
  try {
    m.validate();
  } catch (const IntegrityError& e) {
    throw ParseError(e.what());
  }
  return m;
}

}  // namespace riskadapt
