#include "riskadapt/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

bool RiskFeature::matches(const FeatureVector& x) const {
  for (const auto& p : conjunction)
    if (!p.holds(x)) return false;
  return true;
}

void RuleParams::validate() const {
  if (trees < 1) throw PreconditionError("rule induction needs at least one tree");
  if (depth < 1) throw PreconditionError("tree depth must be at least 1");
  if (!(purity > 0.5 && purity <= 1.0)) throw PreconditionError("purity threshold must lie in (0.5, 1]");
  if (!(min_coverage >= 0.0 && min_coverage <= 1.0)) throw PreconditionError("coverage threshold must lie in [0, 1]");
  if (!(feature_subsample > 0.0 && feature_subsample <= 1.0))
    throw PreconditionError("feature subsample must lie in (0, 1]");
}

namespace {

double entropy(std::size_t pos, std::size_t n) {
  if (n == 0 || pos == 0 || pos == n) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(n);
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

struct Split {
  std::size_t channel = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(std::span<const Example> train, const RuleParams& params, std::mt19937_64& rng,
             std::vector<std::vector<Predicate>>& leaves)
      : train_(train), params_(params), rng_(rng), leaves_(leaves), dim_(train.front().x.size()) {}

  void grow(const std::vector<std::size_t>& rows, std::vector<Predicate> path, std::size_t depth) {
    std::size_t pos = 0;
    for (auto r : rows) pos += static_cast<std::size_t>(train_[r].label);
    if (depth == params_.depth || pos == 0 || pos == rows.size() || rows.size() < 2) {
      leaves_.push_back(std::move(path));
      return;
    }
    auto split = best_split(rows, pos);
    if (split.gain <= 0.0) {
      leaves_.push_back(std::move(path));
      return;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows) (train_[r].x[split.channel] <= split.threshold ? left : right).push_back(r);
    auto lpath = path;
    lpath.push_back({split.channel, Comparator::le, split.threshold});
    path.push_back({split.channel, Comparator::gt, split.threshold});
    grow(left, std::move(lpath), depth + 1);
    grow(right, std::move(path), depth + 1);
  }

 private:
  std::vector<std::size_t> sample_channels() {
    std::size_t k = static_cast<std::size_t>(std::lround(params_.feature_subsample * static_cast<double>(dim_)));
    k = std::clamp<std::size_t>(k, 1, dim_);
    std::vector<std::size_t> all(dim_);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, dim_ - 1);
      std::swap(all[i], all[pick(rng_)]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }

  Split best_split(const std::vector<std::size_t>& rows, std::size_t pos) {
    const std::size_t n = rows.size();
    const double parent = entropy(pos, n);
    Split best;
    std::vector<std::pair<double, int>> vals(n);
    for (auto c : sample_channels()) {
      for (std::size_t i = 0; i < n; ++i) vals[i] = {train_[rows[i]].x[c], train_[rows[i]].label};
      std::sort(vals.begin(), vals.end());
      std::size_t left_n = 0, left_pos = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left_n;
        left_pos += static_cast<std::size_t>(vals[i].second);
        if (vals[i].first == vals[i + 1].first) continue;
        const double t = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
        const double wl = static_cast<double>(left_n) / static_cast<double>(n);
        const double gain = parent - wl * entropy(left_pos, left_n) - (1.0 - wl) * entropy(pos - left_pos, n - left_n);
        if (gain > best.gain) best = {c, t, gain};
      }
    }
    return best;
  }

  std::span<const Example> train_;
  const RuleParams& params_;
  std::mt19937_64& rng_;
  std::vector<std::vector<Predicate>>& leaves_;
  std::size_t dim_;
};

// Keeps the tightest threshold per (channel, comparator) and sorts.
std::vector<Predicate> simplify(const std::vector<Predicate>& path) {
  std::vector<Predicate> out;
  for (const auto& p : path) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Predicate& q) { return q.channel == p.channel && q.comparator == p.comparator; });
    if (it == out.end()) {
      out.push_back(p);
    } else if (p.comparator == Comparator::le) {
      it->threshold = std::min(it->threshold, p.threshold);
    } else {
      it->threshold = std::max(it->threshold, p.threshold);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<RiskFeature> induce_rules(std::span<const Example> train, const RuleParams& params) {
  params.validate();
  if (train.empty()) throw PreconditionError("rule induction needs training data");
  std::size_t pos = 0;
  for (const auto& e : train) pos += static_cast<std::size_t>(e.label);
  if (pos == 0 || pos == train.size()) throw PreconditionError("rule induction needs both classes in training data");
  const std::size_t dim = train.front().x.size();
  if (dim == 0) throw PreconditionError("training examples have no feature channels");

  std::mt19937_64 rng(params.seed);
  std::vector<std::vector<Predicate>> leaves;
  std::uniform_int_distribution<std::size_t> draw(0, train.size() - 1);
  for (std::size_t t = 0; t < params.trees; ++t) {
    std::vector<std::size_t> rows(train.size());
    for (auto& r : rows) r = draw(rng);
    TreeGrower(train, params, rng, leaves).grow(rows, {}, 0);
  }

  const double min_support = params.min_coverage * static_cast<double>(train.size());
  std::set<std::vector<Predicate>> seen;
  std::vector<RiskFeature> rules;
  for (const auto& leaf : leaves) {
    if (leaf.empty()) continue;
    auto conj = simplify(leaf);
    if (!seen.insert(conj).second) continue;
    RiskFeature rule;
    rule.conjunction = std::move(conj);
    std::size_t n = 0, np = 0;
    for (const auto& e : train)
      if (rule.matches(e.x)) {
        ++n;
        np += static_cast<std::size_t>(e.label);
      }
    if (n == 0 || static_cast<double>(n) < min_support) continue;
    const std::size_t majority = std::max(np, n - np);
    if (static_cast<double>(majority) < params.purity * static_cast<double>(n)) continue;
    rule.asserted_class = np > n - np ? 1 : 0;
    rule.coverage = n;
    rule.mu_f = (static_cast<double>(np) + 1.0) / (static_cast<double>(n) + 2.0);
    rule.sigma2_f = kInitialRuleVariance;
    rule.id = "r" + std::to_string(rules.size());
    rules.push_back(std::move(rule));
  }
  return rules;
}

double estimate_prior(const RiskFeature& rule, std::span<const Example> train) {
  std::size_t n = 0, np = 0;
  for (const auto& e : train)
    if (rule.matches(e.x)) {
      ++n;
      np += static_cast<std::size_t>(e.label);
    }
  if (n == 0) throw PreconditionError("rule " + rule.id + " covers no training example");
  return (static_cast<double>(np) + 1.0) / (static_cast<double>(n) + 2.0);
}

std::vector<std::uint8_t> activate(std::span<const RiskFeature> features, const FeatureVector& x) {
  std::vector<std::uint8_t> bits(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) bits[j] = features[j].matches(x) ? 1 : 0;
  return bits;
}

namespace {

const char* class_name(int c) { return c == 1 ? "equivalent" : "inequivalent"; }

int class_from_name(std::string_view s, std::size_t line) {
  if (s == "equivalent") return 1;
  if (s == "inequivalent") return 0;
  throw ParseError("unknown class '" + std::string(s) + "'", line);
}

std::string join_conjunction(const RiskFeature& rule, const FeatureSchema& schema, const char* le, const char* gt,
                             const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < rule.conjunction.size(); ++i) {
    const auto& p = rule.conjunction[i];
    if (p.channel >= schema.size()) throw PreconditionError("predicate channel outside the feature schema");
    if (i) out += sep;
    out += schema[p.channel].name;
    out += p.comparator == Comparator::le ? le : gt;
    out += format_double(p.threshold);
  }
  return out;
}

}  // namespace

std::string render_rule(const RiskFeature& rule, const FeatureSchema& schema) {
  return join_conjunction(rule, schema, " ≤ ", " > ", " ∧ ") + " → " + class_name(rule.asserted_class);
}

std::string write_rules(std::span<const RiskFeature> rules, const FeatureSchema& schema) {
  std::ostringstream out;
  out << "# riskadapt-rules 1\n# channels";
  for (const auto& c : schema.channels()) out << ' ' << c.name;
  out << '\n';
  for (const auto& r : rules) {
    out << r.id << '\t' << join_conjunction(r, schema, " <= ", " > ", " & ") << '\t' << class_name(r.asserted_class)
        << '\t' << r.coverage << '\t' << format_double(r.mu_f) << '\t' << format_double(r.sigma2_f) << '\n';
  }
  return out.str();
}

RiskFeature parse_rule_line(std::string_view text, const FeatureSchema& schema, std::size_t line) {
  auto f = split(text, '\t');
  if (f.size() != 6) throw ParseError("rule line needs 6 tab-separated fields", line);
  RiskFeature r;
  r.id = f[0];
  if (r.id.empty()) throw ParseError("empty rule id", line);
  try {
    std::string_view conj = f[1];
    while (!conj.empty()) {
      auto amp = conj.find(" & ");
      std::string term = trim(conj.substr(0, amp));
      conj = amp == std::string_view::npos ? std::string_view{} : conj.substr(amp + 3);
      auto parts = split(term, ' ');
      if (parts.size() != 3) throw ParseError("malformed predicate '" + term + "'", line);
      Predicate p;
      p.channel = schema.index_of(parts[0]);
      if (parts[1] == "<=") p.comparator = Comparator::le;
      else if (parts[1] == ">") p.comparator = Comparator::gt;
      else throw ParseError("unknown comparator '" + parts[1] + "'", line);
      p.threshold = parse_double(parts[2]);
      if (!(p.threshold >= 0.0 && p.threshold <= 1.0)) throw ParseError("threshold outside [0,1]", line);
      r.conjunction.push_back(p);
    }
    r.asserted_class = class_from_name(f[2], line);
    r.coverage = static_cast<std::size_t>(parse_int(f[3]));
    r.mu_f = parse_double(f[4]);
    r.sigma2_f = parse_double(f[5]);
  } catch (const ParseError& e) {
    if (e.line()) throw;
    throw ParseError(e.what(), line);
  } catch (const IntegrityError& e) {
    throw ParseError(e.what(), line);
  }
  if (r.conjunction.empty()) throw ParseError("rule has an empty conjunction", line);
  if (!(r.mu_f >= 0.0 && r.mu_f <= 1.0)) throw ParseError("mu_f outside [0,1]", line);
  if (!(r.sigma2_f > 0.0)) throw ParseError("sigma2_f must be positive", line);
  return r;
}

std::vector<RiskFeature> parse_rules(std::string_view text, const FeatureSchema& schema) {
  std::vector<RiskFeature> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool saw_magic = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# riskadapt-rules ", 0) == 0) {
        if (trim(line.substr(18)) != "1") throw ParseError("unsupported rule file version", lineno);
        saw_magic = true;
      }
      continue;
    }
    if (!saw_magic) throw ParseError("missing rule file header", lineno);
    rules.push_back(parse_rule_line(line, schema, lineno));
  }
  return rules;
}

}  // namespace riskadapt
