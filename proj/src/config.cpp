#include "riskadapt/config.hpp"

#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "riskadapt/text_io.hpp"

namespace riskadapt {

namespace pt = boost::property_tree;

namespace {

// One INI section as a flat key -> value map with use tracking.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)) {
    if (!tree) return;
    for (const auto& [key, child] : *tree) {
      if (!child.empty()) throw ConfigError("[" + name_ + "] " + key + ": nested keys are not supported");
      values_[key] = trim(child.data());
    }
  }

  bool present() const { return !values_.empty(); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, std::string fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return parse_double(it->second);
    } catch (const ParseError&) {
      throw ConfigError(where(key) + "expected a number, found '" + it->second + "'");
    }
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    try {
      v = parse_int(it->second);
    } catch (const ParseError&) {
      throw ConfigError(where(key) + "expected an integer, found '" + it->second + "'");
    }
    if (v < 0) throw ConfigError(where(key) + "must not be negative");
    return static_cast<std::uint64_t>(v);
  }

  bool flag(const std::string& key, bool fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
    if (it->second == "0" || it->second == "false" || it->second == "no") return false;
    throw ConfigError(where(key) + "expected true or false, found '" + it->second + "'");
  }

  template <typename T, typename F>
  std::vector<T> list(const std::string& key, std::vector<T> fallback, F convert) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<T> out;
    for (const auto& part : split(it->second, ',')) {
      const auto p = trim(part);
      try {
        out.push_back(convert(p));
      } catch (const ParseError&) {
        throw ConfigError(where(key) + "bad list element '" + p + "'");
      }
    }
    return out;
  }

  void reject_unused() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
  }

 private:
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key + ": "; }

  std::string name_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

pt::ptree read_tree(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

void check_sections(const pt::ptree& tree, const std::set<std::string>& allowed) {
  for (const auto& [name, child] : tree) {
    if (child.empty() && !child.data().empty())
      throw ConfigError("key '" + name + "' appears outside any section");
    if (!allowed.count(name)) throw ConfigError("unknown section [" + name + "]");
  }
}

Section section(const pt::ptree& tree, const std::string& name) {
  auto child = tree.get_child_optional(pt::ptree::path_type(name, '\0'));
  return Section(name, child ? &*child : nullptr);
}

Corruption read_corruption(Section& s, const std::string& side, const Corruption& fallback) {
  return {s.real(side + "_typo_rate", fallback.typo_rate), s.real(side + "_token_drop_rate", fallback.token_drop_rate),
          s.real(side + "_numeric_jitter", fallback.numeric_jitter)};
}

SyntheticSpec read_synthetic(Section& s, const SyntheticSpec& fallback) {
  SyntheticSpec spec = fallback;
  spec.n_entities = s.count("entities", spec.n_entities);
  spec.duplicates_per_entity = s.count("duplicates_per_entity", spec.duplicates_per_entity);
  spec.sibling_rate = s.real("sibling_rate", spec.sibling_rate);
  spec.seed = s.count("seed", spec.seed);
  // shared rates first, per-side rates override
  Corruption both{s.real("typo_rate", spec.sources[0].typo_rate), s.real("token_drop_rate", spec.sources[0].token_drop_rate),
                  s.real("numeric_jitter", spec.sources[0].numeric_jitter)};
  const bool shared = s.has("typo_rate") || s.has("token_drop_rate") || s.has("numeric_jitter");
  spec.sources[0] = read_corruption(s, "left", shared ? both : spec.sources[0]);
  spec.sources[1] = read_corruption(s, "right", shared ? both : spec.sources[1]);
  return spec;
}

Schema parse_schema(const std::string& text) {
  Schema schema;
  for (const auto& item : split(text, ',')) {
    auto parts = split(trim(item), ':');
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("schema entry '" + item + "' must be name:kind[:range]");
    AttributeSpec a;
    a.name = trim(parts[0]);
    const auto kind = trim(parts[1]);
    if (kind == "text") a.kind = AttributeKind::text;
    else if (kind == "numeric") a.kind = AttributeKind::numeric;
    else throw ConfigError("attribute kind must be text or numeric, found '" + kind + "'");
    if (parts.size() == 3) {
      try {
        a.range = parse_double(trim(parts[2]));
      } catch (const ParseError&) {
        throw ConfigError("bad range in schema entry '" + item + "'");
      }
    }
    schema.push_back(a);
  }
  if (schema.empty()) throw ConfigError("schema lists no attributes");
  return schema;
}

DataSource read_source(Section& s, const std::filesystem::path& base) {
  DataSource d;
  const auto kind = s.str("kind", "synthetic");
  if (kind == "synthetic") {
    d.synthetic = read_synthetic(s, SyntheticSpec{});
  } else if (kind == "files") {
    FileDataset f;
    f.schema = parse_schema(s.str("schema", "title:text,authors:text,venue:text,year:numeric:10"));
    auto path = [&](const char* key) {
      const auto v = s.str(key, "");
      if (v.empty()) throw ConfigError(std::string("file source needs '") + key + "'");
      std::filesystem::path p(v);
      return p.is_absolute() ? p : base / p;
    };
    f.left = path("left");
    f.right = path("right");
    f.pairs = path("pairs");
    d.files = std::move(f);
  } else {
    throw ConfigError("source kind must be synthetic or files, found '" + kind + "'");
  }
  return d;
}

void read_model_sections(const pt::ptree& tree, AdaptConfig& a) {
  auto t = section(tree, "train");
  a.train.learning_rate = t.real("learning_rate", a.train.learning_rate);
  a.train.pretrain_epochs = t.count("pretrain_epochs", a.train.pretrain_epochs);
  a.train.risk_epochs = t.count("risk_iterations", a.train.risk_epochs);
  a.train.batch_size = t.count("batch_size", a.train.batch_size);
  a.train.hidden = t.count("hidden", a.train.hidden);
  a.train.risk_lr_scale = t.real("risk_lr_scale", a.train.risk_lr_scale);
  t.reject_unused();

  auto r = section(tree, "rules");
  a.rules.trees = r.count("trees", a.rules.trees);
  a.rules.depth = r.count("depth", a.rules.depth);
  a.rules.purity = r.real("purity", a.rules.purity);
  a.rules.min_coverage = r.real("min_coverage", a.rules.min_coverage);
  a.rules.feature_subsample = r.real("feature_subsample", a.rules.feature_subsample);
  r.reject_unused();

  auto k = section(tree, "risk");
  a.theta = k.real("theta", a.theta);
  a.bins = k.count("bins", a.bins);
  a.rank.margin = k.real("margin", a.rank.margin);
  a.rank.pair_samples = k.count("pair_samples", a.rank.pair_samples);
  a.rank.steps = k.count("steps", a.rank.steps);
  a.rank.learning_rate = k.real("learning_rate", a.rank.learning_rate);
  k.reject_unused();
}

template <typename F>
auto rethrow_as_config(F&& f) {
  try {
    return f();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  auto check = [](const DataSource& d, const char* what) {
    if (d.synthetic.has_value() == d.files.has_value())
      throw ConfigError(std::string(what) + " must be exactly one of a synthetic spec or dataset files");
  };
  check(source, "source");
  if (target) check(*target, "target");
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0))
    throw ConfigError("split ratios must be positive");
  if (min_shared_tokens < 1) throw ConfigError("min_shared_tokens must be at least 1");
  rethrow_as_config([&] {
    adapt.validate();
    return 0;
  });
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  const auto tree = read_tree(text);
  check_sections(tree, {"run", "source", "target", "split", "train", "rules", "risk"});
  RunConfig c;

  auto run = section(tree, "run");
  c.seed = run.count("seed", c.seed);
  if (run.has("output")) {
    std::filesystem::path out(run.str("output", ""));
    c.output = out.is_absolute() ? out : base_dir / out;
  }
  run.reject_unused();

  auto src = section(tree, "source");
  c.source = read_source(src, base_dir);
  src.reject_unused();
  auto tgt = section(tree, "target");
  if (tgt.present()) {
    c.target = read_source(tgt, base_dir);
    tgt.reject_unused();
  }

  auto sp = section(tree, "split");
  c.ratios.train = sp.real("train", c.ratios.train);
  c.ratios.validation = sp.real("validation", c.ratios.validation);
  c.ratios.test = sp.real("test", c.ratios.test);
  c.min_shared_tokens = sp.count("min_shared_tokens", c.min_shared_tokens);
  sp.reject_unused();

  read_model_sections(tree, c.adapt);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_run_config(read_file(path), path.parent_path());
}

ExperimentPlan parse_plan(std::string_view text) {
  const auto tree = read_tree(text);
  check_sections(tree, {"plan", "source", "target", "split", "train", "rules", "risk"});
  ExperimentPlan p;

  auto plan = section(tree, "plan");
  p.scenario = rethrow_as_config([&] { return scenario_from_name(plan.str("scenario", "same_source")); });
  p.fractions = plan.list<double>("fractions", p.fractions, [](const std::string& s) { return parse_double(s); });
  p.validation_sizes = plan.list<std::size_t>("validation_sizes", p.validation_sizes, [](const std::string& s) {
    const auto v = parse_int(s);
    if (v < 1) throw ParseError("validation size must be positive");
    return static_cast<std::size_t>(v);
  });
  p.seeds = plan.list<std::uint64_t>("seeds", p.seeds, [](const std::string& s) {
    const auto v = parse_int(s);
    if (v < 0) throw ParseError("seed must not be negative");
    return static_cast<std::uint64_t>(v);
  });
  p.robustness_misaligned = plan.flag("robustness_misaligned", p.robustness_misaligned);
  plan.reject_unused();

  auto src = section(tree, "source");
  if (src.str("kind", "synthetic") != "synthetic") throw ConfigError("experiment plans use synthetic workloads");
  p.source = read_synthetic(src, p.source);
  src.reject_unused();
  auto tgt = section(tree, "target");
  if (tgt.present()) {
    if (tgt.str("kind", "synthetic") != "synthetic") throw ConfigError("experiment plans use synthetic workloads");
    p.target = read_synthetic(tgt, p.source);
    tgt.reject_unused();
  } else if (p.scenario == Scenario::misaligned || (p.scenario == Scenario::robustness && p.robustness_misaligned)) {
    throw ConfigError("a misaligned plan needs a [target] section");
  }

  auto sp = section(tree, "split");
  p.ratios.train = sp.real("train", p.ratios.train);
  p.ratios.validation = sp.real("validation", p.ratios.validation);
  p.ratios.test = sp.real("test", p.ratios.test);
  p.min_shared_tokens = sp.count("min_shared_tokens", p.min_shared_tokens);
  sp.reject_unused();

  read_model_sections(tree, p.adapt);
  rethrow_as_config([&] {
    p.validate();
    return 0;
  });
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("plan file not found: " + path.string());
  return parse_plan(read_file(path));
}

}  // namespace riskadapt
