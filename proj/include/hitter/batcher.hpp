#pragma once

// Batch construction: query examples from triples, neighborhood sampling
// under a cap, masked-source perturbations, and padded collation.

#include <cstdint>
#include <vector>

#include "hitter/common.hpp"
#include "hitter/kg.hpp"
#include "hitter/rng.hpp"

namespace hitter {

struct Perturbation {
  enum class Kind : uint8_t { NotSelected = 0, Mask = 1, RandomReplace = 2, Keep = 3 };
  Kind kind = Kind::NotSelected;
  EntityId replace_id = -1;  // set only for RandomReplace

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

// One link-prediction query: predict `target` from (src, predicate) plus the
// source's neighborhood. Reverse queries use reciprocal predicate ids.
struct QueryExample {
  EntityId src = 0;
  RelationId predicate = 0;
  EntityId target = 0;
  std::vector<NeighborPair> neighbors;
  Perturbation perturbation;

  friend bool operator==(const QueryExample&, const QueryExample&) = default;
};

// Masked-source perturbation policy. Fractions are conditional on selection
// and must sum to 1; overall rates are select_prob times each fraction.
struct MepConfig {
  double select_prob = 0.0;
  double mask_frac = 0.0;
  double replace_frac = 0.0;
  double keep_frac = 0.0;
  bool use_aux_loss = false;

  void validate() const;
};

// Fixed-shape batch: all per-neighbor arrays are batch_size x cap with a
// validity mask that is false exactly at padding slots. The input source id
// equals mask_token where the source was masked; original ids survive only
// in src_original (the masked-prediction labels).
struct Batch {
  int64_t batch_size = 0;
  int64_t cap = 0;
  EntityId mask_token = -1;
  static constexpr EntityId kPad = -1;

  std::vector<EntityId> src_input;
  std::vector<EntityId> src_original;
  std::vector<RelationId> predicate;
  std::vector<EntityId> target;
  std::vector<uint8_t> perturb_code;  // Perturbation::Kind values
  std::vector<RelationId> nbr_relation;  // B*cap, kPad at padding
  std::vector<EntityId> nbr_entity;      // B*cap, kPad at padding
  std::vector<uint8_t> nbr_valid;        // B*cap
};

// Expand triples into query examples, two per triple (forward and
// reciprocal). In train mode the edge the query was derived from is removed
// from the neighborhood; remove_all_gold_pairs additionally removes every
// neighbor pair whose entity is the query target.
std::vector<QueryExample> build_query_examples(const std::vector<Triple>& triples,
                                               const Vocab& vocab, const NeighborIndex& index,
                                               Mode mode, bool remove_all_gold_pairs = false);

// Uniformly truncate to at most `cap` pairs (original order preserved); in
// train mode further keep ceil(train_keep_frac * k) of the k retained pairs.
std::vector<NeighborPair> sample_neighborhood(const std::vector<NeighborPair>& full, int64_t cap,
                                              double train_keep_frac, Mode mode, Rng& rng);

// Draw the perturbation for one example.
void apply_mep(QueryExample& example, const MepConfig& cfg, int64_t num_entities, Rng& rng);

// Pack examples into a fixed-shape batch. mask_token is the id the model
// reserves for the masked-source input (one past the last entity id).
Batch collate(const std::vector<QueryExample>& examples, int64_t cap, EntityId mask_token);

// Inverse of collate, for round-trip testing.
std::vector<QueryExample> decollate(const Batch& batch);

// True when no example's neighborhood still contains the pair its own query
// edge would form — the train-mode no-leakage guarantee.
bool batch_has_no_gold_leak(const Batch& batch);

}  // namespace hitter
