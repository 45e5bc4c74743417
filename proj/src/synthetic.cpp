#include "riskadapt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "riskadapt/error.hpp"

namespace riskadapt {

namespace {

constexpr std::size_t kVocabularySize = 2500;
constexpr std::size_t kSurnames = 900;
constexpr std::size_t kFirstNames = 300;
constexpr std::size_t kVenues = 40;
constexpr double kYearLow = 1985;
constexpr double kYearRange = 30;

struct Entity {
  std::vector<std::string> title;
  std::vector<std::string> authors;  // "first last"
  std::string venue;
  double year = 0;
};

class WordFactory {
 public:
  explicit WordFactory(std::mt19937_64& rng) : rng_(rng) {}

  std::vector<std::string> make(std::size_t count, std::size_t min_syllables, std::size_t max_syllables) {
    static constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p",
                                              "r", "s", "t", "v", "w", "z", "br", "st", "tr", "ch", "sh", "gr"};
    static constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
    std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnsets) - 1);
    std::uniform_int_distribution<std::size_t> nucleus(0, std::size(kNuclei) - 1);
    std::uniform_int_distribution<std::size_t> syllables(min_syllables, max_syllables);
    std::set<std::string> seen(used_.begin(), used_.end());
    std::vector<std::string> words;
    while (words.size() < count) {
      std::string w;
      for (std::size_t s = syllables(rng_); s > 0; --s) {
        w += kOnsets[onset(rng_)];
        w += kNuclei[nucleus(rng_)];
      }
      if (seen.insert(w).second) {
        words.push_back(w);
        used_.push_back(w);
      }
    }
    return words;
  }

 private:
  std::mt19937_64& rng_;
  std::vector<std::string> used_;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string typo(std::string word, std::mt19937_64& rng) {
  if (word.size() < 2) return word;
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<std::size_t> pos(0, word.size() - 1);
  std::uniform_int_distribution<int> letter('a', 'z');
  std::size_t p = pos(rng);
  switch (kind(rng)) {
    case 0: word[p] = static_cast<char>(letter(rng)); break;
    case 1: word.erase(p, 1); break;
    case 2: word.insert(word.begin() + static_cast<std::ptrdiff_t>(p), static_cast<char>(letter(rng))); break;
    default:
      if (p + 1 < word.size()) std::swap(word[p], word[p + 1]);
      else std::swap(word[p - 1], word[p]);
  }
  return word;
}

std::vector<std::string> corrupt_tokens(const std::vector<std::string>& tokens, const Corruption& c,
                                        std::mt19937_64& rng) {
  std::bernoulli_distribution drop(c.token_drop_rate), err(c.typo_rate);
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (drop(rng)) continue;
    out.push_back(err(rng) ? typo(t, rng) : t);
  }
  if (out.empty() && !tokens.empty()) out.push_back(tokens.front());
  return out;
}

Record materialize(const Entity& e, const Corruption& c, std::mt19937_64& rng) {
  Record r;
  r.values.emplace_back(join(corrupt_tokens(e.title, c, rng), " "));
  std::vector<std::string> authors;
  for (const auto& a : e.authors) {
    // each author name is a two-token unit; corrupt its tokens but keep the slot
    std::vector<std::string> tokens{a.substr(0, a.find(' ')), a.substr(a.find(' ') + 1)};
    auto kept = corrupt_tokens(tokens, c, rng);
    authors.push_back(join(kept, " "));
  }
  r.values.emplace_back(join(authors, ", "));
  std::vector<std::string> venue{e.venue};
  r.values.emplace_back(join(corrupt_tokens(venue, Corruption{c.typo_rate, 0.0, 0.0}, rng), " "));
  double year = e.year;
  std::bernoulli_distribution jitter(c.numeric_jitter);
  if (jitter(rng)) {
    std::uniform_int_distribution<int> shift(0, 3);
    static constexpr double kShifts[] = {-2, -1, 1, 2};
    year += kShifts[shift(rng)];
  }
  r.values.emplace_back(year);
  return r;
}

void check_rate(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError(std::string(what) + " must lie in [0,1]");
}

}  // namespace

Schema bibliographic_schema() {
  return {{"title", AttributeKind::text, 1.0},
          {"authors", AttributeKind::text, 1.0},
          {"venue", AttributeKind::text, 1.0},
          {"year", AttributeKind::numeric, 10.0}};
}

Workload generate_workload(const SyntheticSpec& spec) {
  for (const auto& c : spec.sources) {
    check_rate(c.typo_rate, "typo_rate");
    check_rate(c.token_drop_rate, "token_drop_rate");
    check_rate(c.numeric_jitter, "numeric_jitter");
  }
  check_rate(spec.sibling_rate, "sibling_rate");
  if (spec.duplicates_per_entity < 2)
    throw PreconditionError("duplicates_per_entity must be at least 2 (one copy per source)");

  std::mt19937_64 rng(spec.seed);
  WordFactory words(rng);
  const auto vocabulary = words.make(kVocabularySize, 2, 3);
  const auto surnames = words.make(kSurnames, 2, 3);
  const auto first_names = words.make(kFirstNames, 2, 2);
  const auto venues = words.make(kVenues, 2, 2);

  // Mildly skewed word frequencies so unrelated titles occasionally share words.
  std::vector<double> weights(vocabulary.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = 1.0 / std::sqrt(static_cast<double>(i + 1));
  std::discrete_distribution<std::size_t> pick_word(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> title_len(5, 9), n_authors(1, 3);
  std::uniform_int_distribution<std::size_t> pick_surname(0, surnames.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_first(0, first_names.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_venue(0, venues.size() - 1);
  std::uniform_int_distribution<int> pick_year(0, static_cast<int>(kYearRange) - 1);
  std::bernoulli_distribution sibling(spec.sibling_rate);

  std::vector<Entity> entities;
  entities.reserve(spec.n_entities);
  for (std::size_t e = 0; e < spec.n_entities; ++e) {
    Entity ent;
    if (!entities.empty() && sibling(rng)) {
      std::uniform_int_distribution<std::size_t> parent(0, entities.size() - 1);
      ent = entities[parent(rng)];
      std::uniform_int_distribution<std::size_t> slot(0, ent.title.size() - 1);
      std::uniform_int_distribution<int> changes(1, 2), shift(1, 3);
      for (int k = changes(rng); k > 0; --k) ent.title[slot(rng)] = vocabulary[pick_word(rng)];
      ent.year += (std::bernoulli_distribution(0.5)(rng) ? 1 : -1) * shift(rng);
    } else {
      for (std::size_t k = title_len(rng); k > 0; --k) ent.title.push_back(vocabulary[pick_word(rng)]);
      for (std::size_t k = n_authors(rng); k > 0; --k)
        ent.authors.push_back(first_names[pick_first(rng)] + " " + surnames[pick_surname(rng)]);
      ent.venue = venues[pick_venue(rng)];
      ent.year = kYearLow + pick_year(rng);
    }
    entities.push_back(std::move(ent));
  }

  Workload w;
  w.schema = bibliographic_schema();
  std::array<std::vector<std::pair<Record, std::size_t>>, 2> copies;
  for (std::size_t e = 0; e < entities.size(); ++e)
    for (std::size_t d = 0; d < spec.duplicates_per_entity; ++d) {
      const std::size_t s = d % 2;
      copies[s].push_back({materialize(entities[e], spec.sources[s], rng), e});
    }
  static constexpr const char* kPrefix[] = {"a", "b"};
  for (std::size_t s = 0; s < 2; ++s) {
    std::shuffle(copies[s].begin(), copies[s].end(), rng);
    std::vector<Record> records;
    for (std::size_t i = 0; i < copies[s].size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s%05zu", kPrefix[s], i);
      copies[s][i].first.id = id;
      w.entity_of.emplace(id, copies[s][i].second);
      records.push_back(std::move(copies[s][i].first));
    }
    w.sources[s] = RecordTable(w.schema, std::move(records));
  }
  return w;
}

std::vector<RecordPair> Workload::equivalent_pairs() const {
  std::unordered_map<std::size_t, std::vector<std::string>> right_by_entity;
  for (const auto& r : sources[1].records()) right_by_entity[entity_of.at(r.id)].push_back(r.id);
  std::vector<RecordPair> out;
  for (const auto& l : sources[0].records()) {
    auto it = right_by_entity.find(entity_of.at(l.id));
    if (it == right_by_entity.end()) continue;
    for (const auto& rid : it->second) out.push_back({l.id, rid, PairLabel::equivalent});
  }
  std::sort(out.begin(), out.end(), [](const RecordPair& a, const RecordPair& b) {
    return std::tie(a.left_id, a.right_id) < std::tie(b.left_id, b.right_id);
  });
  return out;
}

std::vector<RecordPair> Workload::label(std::vector<RecordPair> pairs) const {
  for (auto& p : pairs)
    p.label = entity_of.at(p.left_id) == entity_of.at(p.right_id) ? PairLabel::equivalent : PairLabel::inequivalent;
  return pairs;
}

std::vector<Example> workload_examples(const Workload& workload, std::size_t min_shared_tokens) {
  auto candidates = block_candidates(workload.sources[0].records(), workload.sources[1].records(), min_shared_tokens);
  auto labeled = workload.label(std::move(candidates));
  return featurize_pairs(labeled, workload.sources[0], workload.sources[1]);
}

}  // namespace riskadapt
