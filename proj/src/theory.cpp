#include "riskadapt/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

void BoundQuery::validate() const {
  if (n < 1) throw PreconditionError("bound needs at least one supporter");
  if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
  if (!(std::isfinite(epsilon) && epsilon >= 0.0)) throw PreconditionError("epsilon must be finite and non-negative");
}

long double bound_radical(const BoundQuery& q) {
  q.validate();
  const long double one_minus_root = -std::expm1(std::log(static_cast<long double>(q.delta)) / static_cast<long double>(q.n));
  const long double s = std::sqrt(one_minus_root);
  if (!(s > 0.0L && s < 1.0L)) throw PreconditionError("bound outside its domain");
  const long double log_term = -std::log1p(-s);
  return std::sqrt((static_cast<long double>(q.m) + 1.0L) / 2.0L * log_term);
}

double theorem_bound(const BoundQuery& q) {
  const long double r = bound_radical(q);
  const long double half_eps = static_cast<long double>(q.epsilon) / 2.0L;
  if (q.direction == ErrorDirection::false_negative) return static_cast<double>(0.5L + half_eps - r);
  return static_cast<double>(0.5L - half_eps + r);
}

std::string format_bound_table(std::span<const BoundQuery> queries) {
  std::ostringstream out;
  out << "direction\tm\tn\tdelta\tepsilon\tbound\n";
  for (const auto& q : queries) {
    out << (q.direction == ErrorDirection::false_negative ? "FN" : "FP") << '\t' << q.m << '\t' << q.n << '\t'
        << format_double(q.delta) << '\t' << format_double(q.epsilon) << '\t' << format_double(theorem_bound(q))
        << '\n';
  }
  return out.str();
}

double delta_c_simple(std::span<const PairAnalysis> support) {
  if (support.empty()) return 0.0;
  double s = 0.0;
  for (const auto& a : support) s += a.w_hat_share;
  return s / static_cast<double>(support.size());
}

double delta_c_lemma(ErrorDirection direction, std::span<const PairAnalysis> support,
                     std::span<const PairAnalysis> own, double k) {
  if (support.empty() || own.empty()) throw PreconditionError("lemma estimate needs both populations");
  const double sign = direction == ErrorDirection::false_negative ? -1.0 : 1.0;
  auto means = [&](std::span<const PairAnalysis> group) {
    double shifted = 0.0, plain = 0.0;
    for (const auto& a : group) {
      shifted += a.w_hat_share * std::clamp(a.mu_hat + sign * k * a.sigma_hat, 0.0, 1.0);
      plain += a.w_hat_share * a.mu_hat;
    }
    const double n = static_cast<double>(group.size());
    return std::pair{shifted / n, plain / n};
  };
  const auto [s_shift, s_plain] = means(support);
  const auto [o_shift, o_plain] = means(own);
  if (direction == ErrorDirection::false_negative) return std::max(s_shift - o_shift, s_plain - o_plain);
  return std::max(o_shift - s_shift, o_plain - s_plain);
}

DeltaEstimate estimate_deltas(std::span<const PairAnalysis> analysis, std::span<const int> predicted,
                              std::span<const int> truth, std::size_t index, double k) {
  if (analysis.size() != predicted.size() || predicted.size() != truth.size())
    throw PreconditionError("analysis, predictions and labels differ in length");
  if (index >= analysis.size()) throw PreconditionError("pair index out of range");
  const auto own_outcome = outcome_of(predicted[index], truth[index]);
  if (own_outcome != Outcome::fn && own_outcome != Outcome::fp)
    throw PreconditionError("pair " + std::to_string(index) + " is predicted correctly");
  const bool fn = own_outcome == Outcome::fn;
  const Outcome support_outcome = fn ? Outcome::tp : Outcome::tn;

  std::vector<PairAnalysis> support;
  for (std::size_t i = 0; i < analysis.size(); ++i)
    if (outcome_of(predicted[i], truth[i]) == support_outcome) support.push_back(analysis[i]);

  DeltaEstimate d;
  d.delta_c_simple = delta_c_simple(support);
  if (!support.empty()) {
    const PairAnalysis own[1] = {analysis[index]};
    d.delta_c_lemma =
        delta_c_lemma(fn ? ErrorDirection::false_negative : ErrorDirection::false_positive, support, own, k);
  }
  const double own_var = fn ? analysis[index].var_minus : analysis[index].var_plus;
  for (const auto& s : support) {
    const double gap = own_var - (fn ? s.var_plus : s.var_minus);
    if (gap > d.delta_c_simple) d.supporter_gaps.push_back(gap);
  }
  d.supporters = d.supporter_gaps.size();
  if (d.supporters) {
    double sum = 0.0;
    for (double g : d.supporter_gaps) sum += g;
    d.delta_var = sum / static_cast<double>(d.supporters);
  }
  return d;
}

void ConcentrationTrial::validate() const {
  const auto n = activation_probability.size();
  if (weights.size() != n || mu_f.size() != n || sigma2_f.size() != n)
    throw PreconditionError("trial vectors differ in length");
  for (double p : activation_probability)
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("activation probabilities must lie in [0, 1]");
  for (std::size_t j = 0; j < n; ++j)
    if (!(weights[j] >= 0.0) || !(mu_f[j] >= 0.0 && mu_f[j] <= 1.0) || !(sigma2_f[j] >= 0.0))
      throw PreconditionError("trial feature parameters out of range");
  if (!(w_hat > 0.0)) throw PreconditionError("classifier weight must be positive");
  if (!(mu_hat_low >= 0.0 && mu_hat_low <= mu_hat_high && mu_hat_high <= 1.0))
    throw PreconditionError("classifier output range must lie in [0, 1]");
  if (samples < 1000) throw PreconditionError("a concentration trial needs at least 1000 samples");
}

std::vector<TailRow> mcdiarmid_trial(const ConcentrationTrial& t, std::span<const double> eps_grid) {
  t.validate();
  constexpr std::size_t kBlock = 10000;
  std::vector<double> f(t.samples);
  std::vector<std::uint8_t> z(t.m());
  for (std::size_t start = 0, block = 0; start < t.samples; start += kBlock, ++block) {
    std::seed_seq seq{t.seed, static_cast<std::uint64_t>(block)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = start; s < std::min(t.samples, start + kBlock); ++s) {
      for (std::size_t j = 0; j < t.m(); ++j) z[j] = unit(rng) < t.activation_probability[j] ? 1 : 0;
      const double mu_hat =
          t.mu_hat_low == t.mu_hat_high ? t.mu_hat_low : t.mu_hat_low + (t.mu_hat_high - t.mu_hat_low) * unit(rng);
      const auto d = combine(z, t.weights, t.mu_f, t.sigma2_f, t.w_hat, mu_hat, t.sigma2_hat);
      f[s] = d.mu - t.k * d.sigma();
    }
  }
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());

  std::vector<TailRow> rows;
  for (double eps : eps_grid) {
    std::size_t count = 0;
    for (double v : f)
      if (v - mean >= eps) ++count;
    rows.push_back({eps, static_cast<double>(count) / static_cast<double>(f.size()),
                    std::exp(-2.0 * eps * eps / (static_cast<double>(t.m()) + 1.0))});
  }
  return rows;
}

std::string format_tail_table(std::span<const TailRow> rows, std::size_t m, std::size_t samples) {
  std::ostringstream out;
  out << "# m " << m << ", samples " << samples << '\n';
  out << "epsilon\tempirical_tail\tbound\n";
  for (const auto& r : rows)
    out << format_double(r.epsilon) << '\t' << format_double(r.empirical) << '\t' << format_double(r.bound) << '\n';
  return out.str();
}

GroupDivergence activation_divergence(std::string a_name, std::span<const std::vector<std::uint8_t>> a,
                                      std::string b_name, std::span<const std::vector<std::uint8_t>> b,
                                      std::span<const std::string> feature_ids) {
  if (a.empty() || b.empty()) throw PreconditionError("divergence needs two non-empty groups");
  GroupDivergence g{std::move(a_name), std::move(b_name), {}, 0.0, 0.0};
  const std::size_t m = feature_ids.size();
  std::vector<double> fa(m, 0.0), fb(m, 0.0);
  for (const auto& z : a) {
    if (z.size() != m) throw PreconditionError("activation length does not match the feature list");
    for (std::size_t j = 0; j < m; ++j) fa[j] += z[j];
  }
  for (const auto& z : b) {
    if (z.size() != m) throw PreconditionError("activation length does not match the feature list");
    for (std::size_t j = 0; j < m; ++j) fb[j] += z[j];
  }
  for (std::size_t j = 0; j < m; ++j) {
    FeatureDivergence d{feature_ids[j], fa[j] / static_cast<double>(a.size()), fb[j] / static_cast<double>(b.size()), 0.0};
    d.abs_diff = std::abs(d.freq_a - d.freq_b);
    g.mean_abs_diff += d.abs_diff;
    g.max_abs_diff = std::max(g.max_abs_diff, d.abs_diff);
    g.features.push_back(std::move(d));
  }
  if (m) g.mean_abs_diff /= static_cast<double>(m);
  return g;
}

Assumption1Report assumption1_diagnostic(std::span<const std::vector<std::uint8_t>> activations,
                                         std::span<const int> predicted, std::span<const int> truth,
                                         std::span<const std::string> feature_ids) {
  if (activations.size() != predicted.size() || predicted.size() != truth.size())
    throw PreconditionError("activations, predictions and labels differ in length");
  std::vector<std::vector<std::uint8_t>> groups[4];
  for (std::size_t i = 0; i < activations.size(); ++i)
    groups[static_cast<std::size_t>(outcome_of(predicted[i], truth[i]))].push_back(activations[i]);
  for (auto o : {Outcome::tp, Outcome::tn, Outcome::fp, Outcome::fn})
    if (groups[static_cast<std::size_t>(o)].empty())
      throw PreconditionError(std::string("no ") + outcome_name(o) + " pairs for the diagnostic");
  return {activation_divergence("TP", groups[0], "FN", groups[3], feature_ids),
          activation_divergence("TN", groups[1], "FP", groups[2], feature_ids)};
}

std::string format_assumption1(const Assumption1Report& report) {
  std::ostringstream out;
  for (const auto* g : {&report.tp_fn, &report.tn_fp}) {
    out << "# " << g->group_a << " vs " << g->group_b << ": mean_abs_diff " << format_double(g->mean_abs_diff)
        << ", max_abs_diff " << format_double(g->max_abs_diff) << '\n';
    out << "feature\tfreq_" << g->group_a << "\tfreq_" << g->group_b << "\tabs_diff\n";
    for (const auto& f : g->features)
      out << f.feature << '\t' << format_double(f.freq_a) << '\t' << format_double(f.freq_b) << '\t'
          << format_double(f.abs_diff) << '\n';
  }
  return out.str();
}

}  // namespace riskadapt
