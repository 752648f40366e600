#include "hitter/batcher.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hitter {

void MepConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(select_prob) || !in_unit(mask_frac) || !in_unit(replace_frac) || !in_unit(keep_frac))
    throw ConfigError("mep: probabilities must lie in [0,1]");
  const double sum = mask_frac + replace_frac + keep_frac;
  if (std::abs(sum - 1.0) > 1e-9 && !(select_prob == 0.0 && sum == 0.0))
    throw ConfigError("mep: mask/replace/keep fractions sum to " + std::to_string(sum) +
                      ", expected 1");
}

std::vector<QueryExample> build_query_examples(const std::vector<Triple>& triples,
                                               const Vocab& vocab, const NeighborIndex& index,
                                               Mode mode, bool remove_all_gold_pairs) {
  std::vector<QueryExample> out;
  out.reserve(2 * triples.size());
  auto make = [&](EntityId src, RelationId pred, EntityId tgt) {
    QueryExample ex;
    ex.src = src;
    ex.predicate = pred;
    ex.target = tgt;
    const auto full = index.neighbors_of(src);
    ex.neighbors.reserve(full.size());
    bool removed_query_edge = false;
    for (const NeighborPair& p : full) {
      if (mode == Mode::Train) {
        if (remove_all_gold_pairs && p.entity == tgt) continue;
        if (!removed_query_edge && p == NeighborPair{pred, tgt}) {
          removed_query_edge = true;  // drop exactly the edge this query came from
          continue;
        }
      }
      ex.neighbors.push_back(p);
    }
    out.push_back(std::move(ex));
  };
  for (const Triple& t : triples) {
    make(t.subject, t.predicate, t.object);
    make(t.object, vocab.reciprocal(t.predicate), t.subject);
  }
  return out;
}

std::vector<NeighborPair> sample_neighborhood(const std::vector<NeighborPair>& full, int64_t cap,
                                              double train_keep_frac, Mode mode, Rng& rng) {
  if (cap < 0) throw ConfigError("sample_neighborhood: cap must be non-negative");
  if (train_keep_frac <= 0.0 || train_keep_frac > 1.0)
    throw ConfigError("sample_neighborhood: keep fraction must be in (0,1]");

  std::vector<NeighborPair> kept;
  const int64_t n = static_cast<int64_t>(full.size());
  if (n <= cap) {
    kept = full;
  } else {
    // sample_indices returns ascending ids, so relative order is preserved
    for (const int64_t i : rng.sample_indices(n, cap))
      kept.push_back(full[static_cast<size_t>(i)]);
  }
  if (mode == Mode::Eval) return kept;

  const int64_t k = static_cast<int64_t>(kept.size());
  const int64_t target = static_cast<int64_t>(
      std::ceil(train_keep_frac * static_cast<double>(k)));
  if (target >= k) return kept;
  std::vector<NeighborPair> thinned;
  thinned.reserve(static_cast<size_t>(target));
  for (const int64_t i : rng.sample_indices(k, target))
    thinned.push_back(kept[static_cast<size_t>(i)]);
  return thinned;
}

void apply_mep(QueryExample& example, const MepConfig& cfg, int64_t num_entities, Rng& rng) {
  cfg.validate();
  if (num_entities <= 0) throw ConfigError("apply_mep: empty entity vocabulary");
  example.perturbation = Perturbation{};
  if (!rng.bernoulli(cfg.select_prob)) return;
  const double u = rng.uniform01();
  if (u < cfg.mask_frac) {
    example.perturbation.kind = Perturbation::Kind::Mask;
  } else if (u < cfg.mask_frac + cfg.replace_frac) {
    example.perturbation.kind = Perturbation::Kind::RandomReplace;
    example.perturbation.replace_id = static_cast<EntityId>(rng.uniform_int(num_entities));
  } else {
    example.perturbation.kind = Perturbation::Kind::Keep;
  }
}

Batch collate(const std::vector<QueryExample>& examples, int64_t cap, EntityId mask_token) {
  Batch b;
  b.batch_size = static_cast<int64_t>(examples.size());
  b.cap = cap;
  b.mask_token = mask_token;
  b.src_input.resize(static_cast<size_t>(b.batch_size));
  b.src_original.resize(static_cast<size_t>(b.batch_size));
  b.predicate.resize(static_cast<size_t>(b.batch_size));
  b.target.resize(static_cast<size_t>(b.batch_size));
  b.perturb_code.resize(static_cast<size_t>(b.batch_size));
  b.nbr_relation.assign(static_cast<size_t>(b.batch_size * cap), Batch::kPad);
  b.nbr_entity.assign(static_cast<size_t>(b.batch_size * cap), Batch::kPad);
  b.nbr_valid.assign(static_cast<size_t>(b.batch_size * cap), 0);

  for (int64_t i = 0; i < b.batch_size; ++i) {
    const QueryExample& ex = examples[static_cast<size_t>(i)];
    if (static_cast<int64_t>(ex.neighbors.size()) > cap)
      throw ShapeError("collate: example has " + std::to_string(ex.neighbors.size()) +
                       " neighbors, cap is " + std::to_string(cap));
    b.src_original[static_cast<size_t>(i)] = ex.src;
    switch (ex.perturbation.kind) {
      case Perturbation::Kind::Mask:
        b.src_input[static_cast<size_t>(i)] = mask_token;
        break;
      case Perturbation::Kind::RandomReplace:
        b.src_input[static_cast<size_t>(i)] = ex.perturbation.replace_id;
        break;
      default:
        b.src_input[static_cast<size_t>(i)] = ex.src;
    }
    b.predicate[static_cast<size_t>(i)] = ex.predicate;
    b.target[static_cast<size_t>(i)] = ex.target;
    b.perturb_code[static_cast<size_t>(i)] = static_cast<uint8_t>(ex.perturbation.kind);
    for (size_t j = 0; j < ex.neighbors.size(); ++j) {
      const size_t slot = static_cast<size_t>(i * cap) + j;
      b.nbr_relation[slot] = ex.neighbors[j].relation;
      b.nbr_entity[slot] = ex.neighbors[j].entity;
      b.nbr_valid[slot] = 1;
    }
  }
  return b;
}

std::vector<QueryExample> decollate(const Batch& batch) {
  std::vector<QueryExample> out(static_cast<size_t>(batch.batch_size));
  for (int64_t i = 0; i < batch.batch_size; ++i) {
    QueryExample& ex = out[static_cast<size_t>(i)];
    ex.src = batch.src_original[static_cast<size_t>(i)];
    ex.predicate = batch.predicate[static_cast<size_t>(i)];
    ex.target = batch.target[static_cast<size_t>(i)];
    ex.perturbation.kind = static_cast<Perturbation::Kind>(batch.perturb_code[static_cast<size_t>(i)]);
    if (ex.perturbation.kind == Perturbation::Kind::RandomReplace)
      ex.perturbation.replace_id = batch.src_input[static_cast<size_t>(i)];
    for (int64_t j = 0; j < batch.cap; ++j) {
      const size_t slot = static_cast<size_t>(i * batch.cap + j);
      if (!batch.nbr_valid[slot]) continue;
      ex.neighbors.push_back({batch.nbr_relation[slot], batch.nbr_entity[slot]});
    }
  }
  return out;
}

bool batch_has_no_gold_leak(const Batch& batch) {
  for (int64_t i = 0; i < batch.batch_size; ++i) {
    for (int64_t j = 0; j < batch.cap; ++j) {
      const size_t slot = static_cast<size_t>(i * batch.cap + j);
      if (!batch.nbr_valid[slot]) continue;
      if (batch.nbr_relation[slot] == batch.predicate[static_cast<size_t>(i)] &&
          batch.nbr_entity[slot] == batch.target[static_cast<size_t>(i)])
        return false;
    }
  }
  return true;
}

}  // namespace hitter
