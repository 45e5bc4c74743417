#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace riskadapt {

enum class AttributeKind { text, numeric };

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::text;
  // numeric only: an absolute difference of `range` or more scores 0
  double range = 1.0;
};

using Schema = std::vector<AttributeSpec>;

// missing | text | number
using AttributeValue = std::variant<std::monostate, std::string, double>;

struct Record {
  std::string id;
  std::vector<AttributeValue> values;  // parallel to the schema
};

enum class PairLabel : int { inequivalent = 0, equivalent = 1, unknown = 2 };

struct RecordPair {
  std::string left_id;
  std::string right_id;
  PairLabel label = PairLabel::unknown;

  std::string key() const { return left_id + "|" + right_id; }
  friend bool operator==(const RecordPair&, const RecordPair&) = default;
};

// Records of one source indexed by id.
class RecordTable {
 public:
  RecordTable() = default;
  RecordTable(Schema schema, std::vector<Record> records);

  const Schema& schema() const { return schema_; }
  const std::vector<Record>& records() const { return records_; }
  const Record& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

 private:
  Schema schema_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Loads a comma separated file whose header is `id` followed by the schema's
// attribute names. Blank cells become missing values.
std::vector<Record> load_records(const std::filesystem::path& path, const Schema& schema);
std::vector<Record> parse_records(std::string_view text, const Schema& schema);
std::string write_records(std::span<const Record> records, const Schema& schema);

// Pairs file: header `left_id,right_id,label`, label in {1,0}.
std::vector<RecordPair> load_pairs(const std::filesystem::path& path);
std::vector<RecordPair> parse_pairs(std::string_view text);
std::string write_pairs(std::span<const RecordPair> pairs);

// Cross pairs whose lowercased token sets (union over text attributes) share at
// least `min_shared_tokens` tokens, ordered by left id then right id.
std::vector<RecordPair> block_candidates(std::span<const Record> left, std::span<const Record> right,
                                         std::size_t min_shared_tokens = 1);

// ---- featurization -------------------------------------------------------

enum class SimilarityKind { edit, jaccard, equal, difference };

struct Channel {
  std::string name;  // e.g. "title_edit", "year_eq"
  std::string attribute;
  SimilarityKind kind;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(const Schema& schema);
  explicit FeatureSchema(std::vector<Channel> channels) : channels_(std::move(channels)) {}

  std::size_t size() const { return channels_.size(); }
  const Channel& operator[](std::size_t i) const { return channels_[i]; }
  const std::vector<Channel>& channels() const { return channels_; }
  // Throws IntegrityError for unknown names.
  std::size_t index_of(std::string_view name) const;

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].name != b[i].name) return false;
    return true;
  }

 private:
  std::vector<Channel> channels_;
};

struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Missing on either side scores every channel of that attribute 0.5.
inline constexpr double kMissingSimilarity = 0.5;

FeatureVector featurize_pair(const Record& left, const Record& right, const Schema& schema);

// ---- labeled instances and splits ---------------------------------------

struct Example {
  std::string id;  // "<left>|<right>"
  FeatureVector x;
  int label = 0;  // 1 equivalent, 0 inequivalent
};

struct SplitRatios {
  double train = 0.2;
  double validation = 0.2;
  double test = 0.6;
};

// D^s / D^v / D^t. Test labels are carried for scoring only; training code
// receives the features through `test_features()`.
struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
  std::uint64_t seed = 0;

  std::vector<FeatureVector> test_features() const;
  std::vector<int> test_labels() const;
};

// Stratified by label; same seed, same split. Parts keep input order.
DatasetSplit split_dataset(std::span<const Example> examples, SplitRatios ratios, std::uint64_t seed);

// Stratified random subset of `count` examples (input order preserved).
std::vector<Example> stratified_subsample(std::span<const Example> examples, std::size_t count,
                                          std::uint64_t seed);

// Featurizes every pair; labels must be known.
std::vector<Example> featurize_pairs(std::span<const RecordPair> pairs, const RecordTable& left,
                                     const RecordTable& right);

// Tab separated feature cache with a channel-name header; round-trip exact.
std::string write_examples(std::span<const Example> examples, const FeatureSchema& schema);
std::vector<Example> parse_examples(std::string_view text, FeatureSchema* schema_out = nullptr);

}  // namespace riskadapt
