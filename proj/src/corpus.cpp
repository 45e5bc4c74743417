#include "riskadapt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "riskadapt/error.hpp"
#include "riskadapt/similarity.hpp"
#include "riskadapt/text_io.hpp"

namespace riskadapt {

RecordTable::RecordTable(Schema schema, std::vector<Record> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].values.size() != schema_.size())
      throw IntegrityError("record '" + records_[i].id + "' does not match the schema");
    if (!index_.emplace(records_[i].id, i).second)
      throw IntegrityError("duplicate record id '" + records_[i].id + "'");
  }
}

const Record& RecordTable::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw IntegrityError("unknown record id '" + id + "'");
  return records_[it->second];
}

// ---- record files --------------------------------------------------------

std::vector<Record> parse_records(std::string_view text, const Schema& schema) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ParseError("missing header row", 1);
  const auto& header = rows.front();
  if (header.fields.size() != schema.size() + 1 || trim(header.fields[0]) != "id")
    throw ParseError("header must be 'id' followed by the schema attributes", header.line);
  for (std::size_t a = 0; a < schema.size(); ++a)
    if (trim(header.fields[a + 1]) != schema[a].name)
      throw ParseError("header column '" + header.fields[a + 1] + "' does not match schema attribute '" +
                           schema[a].name + "'",
                       header.line);

  std::vector<Record> records;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != schema.size() + 1)
      throw ParseError("expected " + std::to_string(schema.size() + 1) + " fields, found " +
                           std::to_string(row.fields.size()),
                       row.line);
    Record rec;
    rec.id = trim(row.fields[0]);
    if (rec.id.empty()) throw ParseError("empty record id", row.line);
    if (!seen.insert(rec.id).second)
      throw IntegrityError("duplicate record id '" + rec.id + "' on line " + std::to_string(row.line));
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const std::string cell = trim(row.fields[a + 1]);
      if (cell.empty()) {
        rec.values.emplace_back(std::monostate{});
      } else if (schema[a].kind == AttributeKind::numeric) {
        try {
          rec.values.emplace_back(parse_double(cell));
        } catch (const ParseError&) {
          throw ParseError("attribute '" + schema[a].name + "' is not numeric: '" + cell + "'", row.line);
        }
      } else {
        rec.values.emplace_back(row.fields[a + 1]);
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Record> load_records(const std::filesystem::path& path, const Schema& schema) {
  if (!std::filesystem::exists(path)) throw Error("input file not found: " + path.string());
  return parse_records(read_file(path), schema);
}

std::string write_records(std::span<const Record> records, const Schema& schema) {
  std::ostringstream out;
  out << "id";
  for (const auto& a : schema) out << ',' << csv_escape(a.name);
  out << '\n';
  for (const auto& r : records) {
    out << csv_escape(r.id);
    for (const auto& v : r.values) {
      out << ',';
      if (const auto* s = std::get_if<std::string>(&v)) out << csv_escape(*s);
      else if (const auto* d = std::get_if<double>(&v)) out << format_double(*d);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<RecordPair> parse_pairs(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ParseError("missing header row", 1);
  const auto& h = rows.front().fields;
  if (h.size() != 3 || trim(h[0]) != "left_id" || trim(h[1]) != "right_id" || trim(h[2]) != "label")
    throw ParseError("pairs header must be 'left_id,right_id,label'", rows.front().line);
  std::vector<RecordPair> pairs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 3) throw ParseError("expected 3 fields", row.line);
    RecordPair p{trim(row.fields[0]), trim(row.fields[1]), PairLabel::unknown};
    const std::string label = trim(row.fields[2]);
    if (label == "1") p.label = PairLabel::equivalent;
    else if (label == "0") p.label = PairLabel::inequivalent;
    else throw ParseError("label must be 1 or 0, found '" + label + "'", row.line);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<RecordPair> load_pairs(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("input file not found: " + path.string());
  return parse_pairs(read_file(path));
}

std::string write_pairs(std::span<const RecordPair> pairs) {
  std::ostringstream out;
  out << "left_id,right_id,label\n";
  for (const auto& p : pairs) {
    if (p.label == PairLabel::unknown) throw PreconditionError("cannot write an unlabeled pair");
    out << csv_escape(p.left_id) << ',' << csv_escape(p.right_id) << ','
        << (p.label == PairLabel::equivalent ? 1 : 0) << '\n';
  }
  return out.str();
}

// ---- blocking ------------------------------------------------------------

namespace {

std::vector<std::string> record_tokens(const Record& r) {
  std::vector<std::string> tokens;
  for (const auto& v : r.values)
    if (const auto* s = std::get_if<std::string>(&v)) {
      auto t = tokenize(*s);
      tokens.insert(tokens.end(), t.begin(), t.end());
    }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

}  // namespace

std::vector<RecordPair> block_candidates(std::span<const Record> left, std::span<const Record> right,
                                         std::size_t min_shared_tokens) {
  if (min_shared_tokens < 1) throw PreconditionError("min_shared_tokens must be at least 1");

  std::unordered_map<std::string, std::vector<std::size_t>> postings;
  for (std::size_t j = 0; j < right.size(); ++j)
    for (auto& t : record_tokens(right[j])) postings[t].push_back(j);

  std::vector<RecordPair> out;
  std::vector<std::size_t> shared(right.size(), 0);
  std::vector<std::size_t> touched;
  for (const auto& l : left) {
    touched.clear();
    for (const auto& t : record_tokens(l)) {
      auto it = postings.find(t);
      if (it == postings.end()) continue;
      for (std::size_t j : it->second) {
        if (shared[j]++ == 0) touched.push_back(j);
      }
    }
    for (std::size_t j : touched) {
      if (shared[j] >= min_shared_tokens) out.push_back({l.id, right[j].id, PairLabel::unknown});
      shared[j] = 0;
    }
  }
  std::sort(out.begin(), out.end(), [](const RecordPair& a, const RecordPair& b) {
    return std::tie(a.left_id, a.right_id) < std::tie(b.left_id, b.right_id);
  });
  return out;
}

// ---- featurization -------------------------------------------------------

FeatureSchema::FeatureSchema(const Schema& schema) {
  for (const auto& a : schema) {
    if (a.kind == AttributeKind::text) {
      channels_.push_back({a.name + "_edit", a.name, SimilarityKind::edit});
      channels_.push_back({a.name + "_jaccard", a.name, SimilarityKind::jaccard});
    } else {
      channels_.push_back({a.name + "_eq", a.name, SimilarityKind::equal});
      channels_.push_back({a.name + "_diff", a.name, SimilarityKind::difference});
    }
  }
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < channels_.size(); ++i)
    if (channels_[i].name == name) return i;
  throw IntegrityError("unknown feature channel '" + std::string(name) + "'");
}

FeatureVector featurize_pair(const Record& left, const Record& right, const Schema& schema) {
  if (left.values.size() != schema.size() || right.values.size() != schema.size())
    throw IntegrityError("record pair '" + left.id + "', '" + right.id + "' does not match the schema");
  FeatureVector fv;
  fv.values.reserve(2 * schema.size());
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const auto& lv = left.values[a];
    const auto& rv = right.values[a];
    const bool missing = std::holds_alternative<std::monostate>(lv) || std::holds_alternative<std::monostate>(rv);
    if (missing) {
      fv.values.push_back(kMissingSimilarity);
      fv.values.push_back(kMissingSimilarity);
      continue;
    }
    if (schema[a].kind == AttributeKind::text) {
      const auto* ls = std::get_if<std::string>(&lv);
      const auto* rs = std::get_if<std::string>(&rv);
      if (!ls || !rs) throw IntegrityError("attribute '" + schema[a].name + "' expects text");
      fv.values.push_back(edit_similarity(*ls, *rs));
      fv.values.push_back(token_jaccard(*ls, *rs));
    } else {
      const auto* ld = std::get_if<double>(&lv);
      const auto* rd = std::get_if<double>(&rv);
      if (!ld || !rd) throw IntegrityError("attribute '" + schema[a].name + "' expects a number");
      const double diff = std::abs(*ld - *rd);
      fv.values.push_back(diff == 0.0 ? 1.0 : 0.0);
      const double range = schema[a].range > 0.0 ? schema[a].range : 1.0;
      fv.values.push_back(1.0 - std::min(1.0, diff / range));
    }
  }
  return fv;
}

std::vector<Example> featurize_pairs(std::span<const RecordPair> pairs, const RecordTable& left,
                                     const RecordTable& right) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.label == PairLabel::unknown) throw PreconditionError("pair '" + p.key() + "' has no label");
    out.push_back({p.key(), featurize_pair(left.at(p.left_id), right.at(p.right_id), left.schema()),
                   p.label == PairLabel::equivalent ? 1 : 0});
  }
  return out;
}

// ---- splits --------------------------------------------------------------

std::vector<FeatureVector> DatasetSplit::test_features() const {
  std::vector<FeatureVector> out;
  out.reserve(test.size());
  for (const auto& e : test) out.push_back(e.x);
  return out;
}

std::vector<int> DatasetSplit::test_labels() const {
  std::vector<int> out;
  out.reserve(test.size());
  for (const auto& e : test) out.push_back(e.label);
  return out;
}

namespace {

// Hamilton apportionment of `total` over `weights` (sum 1).
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    double exact = static_cast<double>(total) * weights[k];
    out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += out[k];
    remainders.push_back({exact - static_cast<double>(out[k]), k});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[remainders[i % remainders.size()].second];
  return out;
}

}  // namespace

DatasetSplit split_dataset(std::span<const Example> examples, SplitRatios ratios, std::uint64_t seed) {
  const std::array<double, 3> w{ratios.train, ratios.validation, ratios.test};
  for (double r : w)
    if (!(r > 0.0)) throw PreconditionError("split ratios must all be positive");
  if (std::abs(w[0] + w[1] + w[2] - 1.0) > 1e-9) throw PreconditionError("split ratios must sum to 1");
  if (examples.size() < 3) throw PreconditionError("need at least 3 pairs to form 3 split parts");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < examples.size(); ++i) (examples[i].label ? pos : neg).push_back(i);

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  auto sizes = apportion(examples.size(), w);
  auto pos_sizes = apportion(pos.size(), w);
  // Keep every part non-empty and every part's negatives count non-negative.
  for (std::size_t k = 0; k < 3; ++k) {
    while (pos_sizes[k] > sizes[k]) {
      --pos_sizes[k];
      std::size_t target = (k + 1) % 3;
      while (pos_sizes[target] >= sizes[target]) target = (target + 1) % 3;
      ++pos_sizes[target];
    }
  }

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t pi = 0, ni = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < pos_sizes[k]; ++c) parts[k].push_back(pos[pi++]);
    for (std::size_t c = 0; c < sizes[k] - pos_sizes[k]; ++c) parts[k].push_back(neg[ni++]);
    std::sort(parts[k].begin(), parts[k].end());
  }

  DatasetSplit split;
  split.seed = seed;
  auto fill = [&](std::vector<Example>& dst, const std::vector<std::size_t>& idx) {
    dst.reserve(idx.size());
    for (std::size_t i : idx) dst.push_back(examples[i]);
  };
  fill(split.train, parts[0]);
  fill(split.validation, parts[1]);
  fill(split.test, parts[2]);
  return split;
}

std::vector<Example> stratified_subsample(std::span<const Example> examples, std::size_t count,
                                          std::uint64_t seed) {
  if (count > examples.size())
    throw PreconditionError("requested " + std::to_string(count) + " examples but only " +
                            std::to_string(examples.size()) + " are available");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < examples.size(); ++i) (examples[i].label ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const double frac = examples.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(examples.size());
  std::size_t npos = std::min(pos.size(), static_cast<std::size_t>(std::llround(frac * static_cast<double>(pos.size()))));
  if (count > 0 && npos == 0 && !pos.empty()) npos = 1;
  npos = std::min(npos, count);
  std::size_t nneg = count - npos;
  if (nneg > neg.size()) {
    npos += nneg - neg.size();
    nneg = neg.size();
  }
  std::vector<std::size_t> idx(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(npos));
  idx.insert(idx.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(nneg));
  std::sort(idx.begin(), idx.end());
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(examples[i]);
  return out;
}

// ---- feature cache -------------------------------------------------------

namespace {

Channel channel_from_name(const std::string& name) {
  static const std::pair<const char*, SimilarityKind> kSuffixes[] = {{"_edit", SimilarityKind::edit},
                                                                    {"_jaccard", SimilarityKind::jaccard},
                                                                    {"_eq", SimilarityKind::equal},
                                                                    {"_diff", SimilarityKind::difference}};
  for (const auto& [suffix, kind] : kSuffixes) {
    std::string_view sv(suffix);
    if (name.size() > sv.size() && name.compare(name.size() - sv.size(), sv.size(), sv) == 0)
      return {name, name.substr(0, name.size() - sv.size()), kind};
  }
  throw ParseError("unrecognized feature channel '" + name + "'");
}

}  // namespace

std::string write_examples(std::span<const Example> examples, const FeatureSchema& schema) {
  std::ostringstream out;
  out << "id\tlabel";
  for (const auto& c : schema.channels()) out << '\t' << c.name;
  out << '\n';
  for (const auto& e : examples) {
    if (e.x.size() != schema.size()) throw IntegrityError("feature vector length does not match schema");
    out << e.id << '\t' << e.label;
    for (double v : e.x.values) out << '\t' << format_double(v);
    out << '\n';
  }
  return out.str();
}

std::vector<Example> parse_examples(std::string_view text, FeatureSchema* schema_out) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++lineno;
  auto header = split(line, '\t');
  if (header.size() < 2 || header[0] != "id" || header[1] != "label")
    throw ParseError("feature cache header must start with 'id<TAB>label'", 1);
  std::vector<Channel> channels;
  for (std::size_t i = 2; i < header.size(); ++i) channels.push_back(channel_from_name(header[i]));
  std::vector<Example> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != header.size()) throw ParseError("wrong number of columns", lineno);
    Example e;
    e.id = f[0];
    e.label = static_cast<int>(parse_int(f[1]));
    if (e.label != 0 && e.label != 1) throw ParseError("label must be 0 or 1", lineno);
    for (std::size_t i = 2; i < f.size(); ++i) e.x.values.push_back(parse_double(f[i]));
    out.push_back(std::move(e));
  }
  if (schema_out) *schema_out = FeatureSchema(std::move(channels));
  return out;
}

}  // namespace riskadapt
