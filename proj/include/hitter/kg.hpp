#pragma once

// Knowledge-graph storage: triple ingestion, entity/relation vocabularies
// with reciprocal relation ids, neighborhood and filter indices, hop
// distances, and dataset statistics.

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hitter/common.hpp"

namespace hitter {

struct Triple {
  EntityId subject = 0;
  RelationId predicate = 0;
  EntityId object = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class VocabMode { Build, Frozen };

// Entity and relation name<->id bijections. Base relations occupy ids
// [0, R); ids [R, 2R) are their reciprocals, materialized only as an id
// arithmetic rule: reciprocal(r) = (r + R) mod 2R.
class Vocab {
 public:
  EntityId intern_entity(const std::string& name);
  RelationId intern_relation(const std::string& name);

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  bool has_entity(const std::string& name) const { return entity_ids_.count(name) > 0; }
  bool has_relation(const std::string& name) const { return relation_ids_.count(name) > 0; }
  EntityId entity_id(const std::string& name) const;
  RelationId relation_id(const std::string& name) const;

  const std::string& entity_name(EntityId id) const;
  // Reciprocal ids render as the base name with an "inv:" prefix.
  std::string relation_name(RelationId id) const;

  int64_t num_entities() const { return static_cast<int64_t>(entity_names_.size()); }
  int64_t num_base_relations() const { return static_cast<int64_t>(relation_names_.size()); }
  // Full relation-id space including reciprocals.
  int64_t num_relations() const { return 2 * num_base_relations(); }

  RelationId reciprocal(RelationId r) const;
  bool is_reciprocal_id(RelationId r) const;
  // Base relation a (possibly reciprocal) id folds onto.
  RelationId base_relation(RelationId r) const;

 private:
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  bool frozen_ = false;
};

// Parse one TSV triple file (subject TAB relation TAB object per nonempty
// line). Build mode interns unseen names; frozen mode rejects them.
// Duplicate triples within the file are dropped with a warning.
std::vector<Triple> load_triples(const std::string& path, Vocab& vocab, VocabMode mode);

struct NeighborPair {
  RelationId relation = 0;
  EntityId entity = 0;

  friend bool operator==(const NeighborPair&, const NeighborPair&) = default;
};

// Adjacency over the training split: outgoing edges keep their relation id,
// incoming edges appear under the reciprocal id, so every adjacent vertex is
// reachable from one uniform list.
class NeighborIndex {
 public:
  static constexpr int64_t kUnreachable = -1;

  NeighborIndex(const std::vector<Triple>& train, const Vocab& vocab);

  std::span<const NeighborPair> neighbors_of(EntityId e) const;
  int64_t num_entities() const { return static_cast<int64_t>(offsets_.size()) - 1; }
  int64_t total_pairs() const { return static_cast<int64_t>(flat_.size()); }

  // Shortest undirected path length (relation types ignored); kUnreachable
  // when no path exists.
  int64_t hop_distance(EntityId a, EntityId b) const;
  // Single-source BFS giving the hop distance to every entity.
  std::vector<int32_t> hops_from(EntityId a) const;

 private:
  std::vector<int64_t> offsets_;  // size num_entities + 1
  std::vector<NeighborPair> flat_;
};

// Known true targets per (source, relation) over every split, for filtered
// ranking. Incoming edges are indexed under the reciprocal relation so both
// query directions share one lookup.
class FilterIndex {
 public:
  FilterIndex(const Vocab& vocab, const std::vector<const std::vector<Triple>*>& splits);

  std::span<const EntityId> known_targets(EntityId src, RelationId rel) const;
  bool contains(EntityId src, RelationId rel, EntityId target) const;

  // Mask over all entities: true = eligible to be ranked against the gold
  // target. Known true targets are excluded, then the gold is re-included.
  std::vector<uint8_t> filtered_candidates(EntityId src, RelationId rel, EntityId gold) const;

  int64_t num_entities() const { return num_entities_; }

 private:
  int64_t num_entities_ = 0;
  std::unordered_map<uint64_t, std::vector<EntityId>> targets_;
};

struct DatasetStats {
  int64_t entities = 0;
  int64_t relations = 0;  // pre-reciprocal
  int64_t triples = 0;    // across all splits
  double avg_degree = 0.0;

  std::string to_json() const;
};

DatasetStats dataset_stats(const Vocab& vocab, const std::vector<Triple>& train,
                           const std::vector<Triple>& valid, const std::vector<Triple>& test);

struct Dataset {
  Vocab vocab;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

// Load <dir>/train.txt, valid.txt, test.txt with a shared vocabulary.
// All three files intern symbols (some benchmark splits mention entities
// absent from train); the vocabulary is frozen afterwards.
Dataset load_dataset(const std::string& dir);

}  // namespace hitter
