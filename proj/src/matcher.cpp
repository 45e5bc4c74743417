#include "riskadapt/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/metrics.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw PreconditionError("learning_rate must be positive");
  if (pretrain_epochs < 1) throw PreconditionError("pretrain_epochs must be at least 1");
  if (batch_size < 1) throw PreconditionError("batch_size must be at least 1");
  if (hidden < 1) throw PreconditionError("hidden must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw PreconditionError("moment decays must lie in [0,1)");
  if (!(adam.epsilon > 0.0)) throw PreconditionError("optimizer stabilizer must be positive");
  if (!(risk_lr_scale > 0.0)) throw PreconditionError("risk_lr_scale must be positive");
}

MatcherModel::MatcherModel(std::size_t input, std::size_t hidden)
    : input_(input), hidden_(hidden), params_(input * hidden + 2 * hidden + 1, 0.0) {}

MatcherModel MatcherModel::initialized(std::size_t input, std::size_t hidden, std::uint64_t seed) {
  MatcherModel m(input, hidden);
  std::mt19937_64 rng(seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(input));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (std::size_t i = 0; i < hidden * input; ++i) m.params_[m.w1_offset() + i] = u1(rng);
  for (std::size_t h = 0; h < hidden; ++h) m.params_[m.w2_offset() + h] = u2(rng);
  return m;
}

double MatcherModel::logit(const FeatureVector& x) const {
  if (x.size() != input_)
    throw PreconditionError("feature vector has " + std::to_string(x.size()) + " channels, model expects " +
                            std::to_string(input_));
  const double* w1 = params_.data() + w1_offset();
  const double* b1 = params_.data() + b1_offset();
  const double* w2 = params_.data() + w2_offset();
  double z = params_[b2_offset()];
  for (std::size_t h = 0; h < hidden_; ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < input_; ++i) a += w1[h * input_ + i] * x.values[i];
    if (a > 0.0) z += w2[h] * a;
  }
  return z;
}

double MatcherModel::predict_proba(const FeatureVector& x) const {
  const double z = std::clamp(logit(x), -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

std::vector<LogLossWeights> cross_entropy_weights(std::span<const int> labels) {
  std::vector<LogLossWeights> w;
  w.reserve(labels.size());
  for (int y : labels) w.push_back({static_cast<double>(y), 1.0 - static_cast<double>(y)});
  return w;
}

namespace {

double clamp_probability(double g) { return std::clamp(g, kProbabilityClamp, 1.0 - kProbabilityClamp); }

void check_batch(const MatcherModel&, std::span<const FeatureVector> xs, std::span<const LogLossWeights> w) {
  if (xs.empty()) throw PreconditionError("loss over an empty batch");
  if (xs.size() != w.size()) throw PreconditionError("batch and loss weights differ in length");
  for (const auto& lw : w)
    if (!std::isfinite(lw.pos) || !std::isfinite(lw.neg)) throw PreconditionError("loss weights must be finite");
}

}  // namespace

double weighted_log_loss(const MatcherModel& model, std::span<const FeatureVector> xs,
                         std::span<const LogLossWeights> weights) {
  check_batch(model, xs, weights);
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double g = clamp_probability(model.predict_proba(xs[i]));
    total += -weights[i].pos * std::log(g) - weights[i].neg * std::log(1.0 - g);
  }
  return total / static_cast<double>(xs.size());
}

double cross_entropy_loss(const MatcherModel& model, std::span<const Example> batch) {
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  for (const auto& e : batch) {
    xs.push_back(e.x);
    ys.push_back(e.label);
  }
  auto w = cross_entropy_weights(ys);
  return weighted_log_loss(model, xs, w);
}

double log_loss_probability_derivative(double g, LogLossWeights w) {
  if (g < kProbabilityClamp || g > 1.0 - kProbabilityClamp) return 0.0;
  return -w.pos / g + w.neg / (1.0 - g);
}

std::vector<double> backward(const MatcherModel& model, std::span<const FeatureVector> xs,
                             std::span<const LogLossWeights> weights) {
  check_batch(model, xs, weights);
  const std::size_t d = model.input_size(), H = model.hidden_size();
  const auto p = model.parameters();
  std::vector<double> grad(model.parameter_count(), 0.0);
  std::vector<double> act(H);
  const double scale = 1.0 / static_cast<double>(xs.size());

  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto& x = xs[n];
    if (x.size() != d) throw PreconditionError("feature vector length does not match the model");
    double z = p[model.b2_offset()];
    for (std::size_t h = 0; h < H; ++h) {
      double a = p[model.b1_offset() + h];
      for (std::size_t i = 0; i < d; ++i) a += p[model.w1_offset() + h * d + i] * x.values[i];
      act[h] = a;
      if (a > 0.0) z += p[model.w2_offset() + h] * a;
    }
    if (z <= -kLogitClamp || z >= kLogitClamp) continue;  // clamped: flat
    const double g = 1.0 / (1.0 + std::exp(-z));
    const double dz = scale * log_loss_probability_derivative(g, weights[n]) * g * (1.0 - g);
    if (dz == 0.0) continue;
    grad[model.b2_offset()] += dz;
    for (std::size_t h = 0; h < H; ++h) {
      if (act[h] <= 0.0) continue;
      grad[model.w2_offset() + h] += dz * act[h];
      const double da = dz * p[model.w2_offset() + h];
      grad[model.b1_offset() + h] += da;
      for (std::size_t i = 0; i < d; ++i) grad[model.w1_offset() + h * d + i] += da * x.values[i];
    }
  }
  return grad;
}

void adam_step(std::span<double> params, AdamState& state, std::span<const double> gradient, double learning_rate,
               const AdamSettings& s) {
  if (params.size() != gradient.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw PreconditionError("optimizer state, parameters and gradient differ in shape");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * g;
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

std::vector<int> predict_all(const MatcherModel& model, std::span<const FeatureVector> xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(model.predict(x));
  return out;
}

double f1_on(const MatcherModel& model, std::span<const Example> examples) {
  std::vector<int> pred, truth;
  for (const auto& e : examples) {
    pred.push_back(model.predict(e.x));
    truth.push_back(e.label);
  }
  return f1_score(pred, truth).f1;
}

std::string format_metrics_log(std::span<const EpochRecord> log) {
  std::ostringstream out;
  out << "phase\tindex\tloss\trank_loss\tval_f1\ttest_f1\n";
  for (const auto& r : log) {
    out << r.phase << '\t' << r.index << '\t' << format_double(r.loss) << '\t' << format_double(r.rank_loss) << '\t'
        << format_double(r.val_f1) << '\t' << (r.test_f1 ? format_double(*r.test_f1) : std::string("NA")) << '\n';
  }
  return out.str();
}

PretrainResult pretrain(const MatcherModel& initial, std::span<const Example> train,
                        std::span<const Example> validation, const TrainConfig& config,
                        std::span<const Example> scoring) {
  config.validate();
  if (train.empty() || validation.empty()) throw PreconditionError("pretraining needs non-empty train and validation");

  MatcherModel model = initial;
  AdamState state(model.parameter_count());
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  PretrainResult result;
  result.best_val_f1 = -1.0;
  std::vector<FeatureVector> xs;
  std::vector<LogLossWeights> ws;
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      xs.clear();
      ws.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
        const auto& e = train[order[k]];
        xs.push_back(e.x);
        ws.push_back({static_cast<double>(e.label), 1.0 - static_cast<double>(e.label)});
      }
      loss_sum += weighted_log_loss(model, xs, ws);
      ++batches;
      auto grad = backward(model, xs, ws);
      adam_step(model.parameters(), state, grad, config.learning_rate, config.adam);
    }
    EpochRecord rec;
    rec.phase = "pretrain";
    rec.index = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.val_f1 = f1_on(model, validation);
    if (!scoring.empty()) rec.test_f1 = f1_on(model, scoring);
    if (rec.val_f1 > result.best_val_f1) {
      result.best_val_f1 = rec.val_f1;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.log.push_back(rec);
  }
  result.final_model = model;
  return result;
}

std::string write_checkpoint(const MatcherModel& model) {
  std::ostringstream out;
  out << "riskadapt-matcher 1\n";
  out << "input " << model.input_size() << '\n';
  out << "hidden " << model.hidden_size() << '\n';
  out << "parameters " << model.parameter_count() << '\n';
  for (double v : model.parameters()) out << format_double(v) << '\n';
  return out.str();
}

MatcherModel parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tag;
  std::size_t version = 0, input = 0, hidden = 0, count = 0;
  std::string k1, k2, k3;
  if (!(in >> tag >> version) || tag != "riskadapt-matcher" || version != 1)
    throw ParseError("not a matcher checkpoint (bad magic or version)", 1);
  if (!(in >> k1 >> input >> k2 >> hidden >> k3 >> count) || k1 != "input" || k2 != "hidden" || k3 != "parameters")
    throw ParseError("malformed checkpoint header");
  MatcherModel model(input, hidden);
  if (count != model.parameter_count()) throw ParseError("parameter count does not match layer sizes");
  auto p = model.parameters();
  for (std::size_t i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token)) throw ParseError("checkpoint truncated", 5 + i);
    p[i] = parse_double(token);
  }
  return model;
}

}  // namespace riskadapt
