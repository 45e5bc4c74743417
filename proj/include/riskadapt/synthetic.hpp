#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "riskadapt/corpus.hpp"

namespace riskadapt {

// Noise applied independently to every materialized copy of an entity.
struct Corruption {
  double typo_rate = 0.0;        // per token: one character edit
  double token_drop_rate = 0.0;  // per token: dropped (at least one kept)
  double numeric_jitter = 0.0;   // per numeric value: shifted by +-1 or +-2

  static Corruption uniform(double level) { return {level, level, level}; }
};

struct SyntheticSpec {
  std::size_t n_entities = 300;
  // Copies per entity, dealt round-robin over the two sources.
  std::size_t duplicates_per_entity = 2;
  std::array<Corruption, 2> sources{};
  // Fraction of entities that are near-variants of an earlier entity (same
  // authors and venue, one or two title words changed, different year).
  double sibling_rate = 0.25;
  std::uint64_t seed = 1;
};

struct Workload {
  Schema schema;
  std::array<RecordTable, 2> sources;
  std::unordered_map<std::string, std::size_t> entity_of;  // record id -> entity

  // Cross-source pairs referring to the same entity, sorted.
  std::vector<RecordPair> equivalent_pairs() const;
  // Sets the label of each pair from the entity map.
  std::vector<RecordPair> label(std::vector<RecordPair> pairs) const;
};

// Bibliographic-style schema: title, authors, venue (text), year (numeric).
Schema bibliographic_schema();

Workload generate_workload(const SyntheticSpec& spec);

// generate -> block -> label -> featurize.
std::vector<Example> workload_examples(const Workload& workload, std::size_t min_shared_tokens = 1);

}  // namespace riskadapt
