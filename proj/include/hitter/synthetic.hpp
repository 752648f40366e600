#pragma once

// Synthetic knowledge-graph generators with verifiable structure. Each
// pattern plants a deterministic rule connecting held-out triples to the
// training graph, so desk-scale experiments can measure whether a model
// exploits neighborhood context:
//
//   composition: sources point at bridge entities (r0), bridges point at
//     target entities (r1), and r2(a, c) holds exactly when some bridge b has
//     r0(a, b) and r1(b, c) in train. Strata (the sources of one bridge) are
//     held out whole: demonstration strata put every r2 fact in train, while
//     evaluation strata put theirs only in valid/test. No evaluated source's
//     answer, nor any interchangeable same-stratum source's, is ever trained,
//     so per-source recall scores nothing; the held-out queries are answered
//     only by reading the bridge from the query's neighborhood and chaining
//     through that bridge's trained target edge. Relations beyond the first
//     three add distractor edges (each source points at a uniformly chosen
//     *other* bridge) as neighborhood clutter.
//   chain: a line under r0; r1 connects entities two steps apart.
//   star: a hub points at every spoke under r0; r1 forms a ring over spokes,
//     so every spoke pair is two hops apart through the hub.

#include <hitter/common.hpp>
#include <hitter/rng.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hitter {

struct SyntheticSpec {
  int64_t num_entities = 200;
  int64_t num_relations = 3;
  std::string pattern = "composition";  // composition | chain | star
  uint64_t seed = 0;

  // Rejects unknown patterns and sizes too small for the pattern's shape
  // (composition: >= 10 entities, >= 3 relations; chain: >= 4 entities,
  // exactly 2 relations; star: >= 4 entities, exactly 2 relations).
  void validate() const;
};

// Symbolic triples: (head, relation, tail) names, ready for TSV emission.
using NameTriple = std::array<std::string, 3>;

struct SyntheticDataset {
  std::vector<std::string> entities;   // e0 .. e{N-1}
  std::vector<std::string> relations;  // r0 .. r{K-1}
  std::vector<NameTriple> train;
  std::vector<NameTriple> valid;
  std::vector<NameTriple> test;
};

// Generates the dataset for `spec` (deterministic in spec.seed) and runs
// verify_synthetic on it before returning.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

// Re-derives the pattern's rule from the train split alone and checks it
// against every held-out triple (and, for composition, checks the converse:
// no rule-satisfying pair is missing). Throws Error on any violation.
void verify_synthetic(const SyntheticDataset& data, const SyntheticSpec& spec);

// Writes <dir>/train.txt, valid.txt, test.txt as tab-separated name triples,
// creating the directory if needed.
void write_synthetic_dir(const SyntheticDataset& data, const std::string& dir);

}  // namespace hitter
