#pragma once

// Filtered entity-ranking evaluation plus the analysis views built on it:
// aggregate metrics, per-relation breakdown, hop-bucketed MRR, and
// nearest-neighbor lookups over the learned entity table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hitter/batcher.hpp"
#include "hitter/common.hpp"
#include "hitter/kg.hpp"
#include "hitter/model.hpp"
#include "hitter/rng.hpp"

namespace hitter {

// How ranks are assigned when other candidates score exactly equal to the
// gold target. Average is the default: a constant-score model then lands at
// mid-rank instead of rank 1, so degenerate models cannot look good.
enum class TiePolicy { Average, Pessimistic, Optimistic };

struct RankingReport {
  double mrr = 0.0;
  double mr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  int64_t queries = 0;

  std::string to_json() const;
};

// One ranked query; predicate is the relation as queried (reciprocal ids for
// subject-side queries), ranks may be half-integers under the average policy.
struct QueryRecord {
  EntityId src = 0;
  RelationId predicate = 0;
  EntityId gold = 0;
  double filtered_rank = 0.0;
  double raw_rank = 0.0;
};

struct EvalResult {
  RankingReport filtered;
  RankingReport raw;
  std::vector<QueryRecord> records;
};

// One group of an evaluation breakdown (a relation, or a hop bucket).
struct BreakdownRow {
  std::string key;
  int64_t count = 0;
  double mrr = 0.0;
};

struct EvalConfig {
  int64_t batch_size = 256;
  int64_t neighbor_cap = 50;
  uint64_t seed = 0;
  TiePolicy ties = TiePolicy::Average;

  void validate() const {
    if (batch_size < 1) throw ConfigError("eval: batch_size must be >= 1");
    if (neighbor_cap < 0) throw ConfigError("eval: neighbor_cap must be >= 0");
  }
};

// Rank of the gold entity among the eligible candidates (eligible[i] != 0).
// Rank 1 is best. Ties at the gold score resolve per policy; the average
// policy returns better + 1 + ties/2, which may be a half-integer.
template <typename T>
double rank_query(std::span<const T> scores, EntityId gold, std::span<const uint8_t> eligible,
                  TiePolicy ties = TiePolicy::Average) {
  if (scores.size() != eligible.size())
    throw ShapeError("rank_query: scores and eligibility mask differ in length");
  if (gold < 0 || static_cast<size_t>(gold) >= scores.size())
    throw IndexError("rank_query: gold id " + std::to_string(gold) + " out of range");
  if (!eligible[static_cast<size_t>(gold)])
    throw IndexError("rank_query: gold entity is excluded by the candidate mask");
  const T gold_score = scores[static_cast<size_t>(gold)];
  int64_t better = 0, tied = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!eligible[i] || i == static_cast<size_t>(gold)) continue;
    if (scores[i] > gold_score)
      ++better;
    else if (scores[i] == gold_score)
      ++tied;
  }
  switch (ties) {
    case TiePolicy::Average: return static_cast<double>(better) + 1.0 + static_cast<double>(tied) / 2.0;
    case TiePolicy::Pessimistic: return static_cast<double>(better + tied + 1);
    case TiePolicy::Optimistic: return static_cast<double>(better + 1);
  }
  throw ConfigError("rank_query: unknown tie policy");
}

// Aggregate a set of ranks into MRR / MR / hits@{1,3,10}.
RankingReport summarize_ranks(const std::vector<double>& ranks);

// Per-relation MRR over filtered ranks, reciprocal ids folded onto their base
// relation, rows sorted by count descending (name ascending on equal counts).
std::vector<BreakdownRow> breakdown_by_relation(const std::vector<QueryRecord>& records,
                                                const Vocab& vocab);

// Filtered MRR bucketed by the train-graph hop distance between the query
// source and the gold target: buckets 1..4, "5+", and "unreachable" (plus
// "0" if a self-loop query occurs). Bucket counts partition the query set.
std::vector<BreakdownRow> mrr_by_hops(const std::vector<QueryRecord>& records,
                                      const NeighborIndex& train_index);

std::string breakdown_csv(const std::vector<BreakdownRow>& rows);
std::string query_records_csv(const std::vector<QueryRecord>& records);

// Filtered + raw ranking over both query directions of every triple in the
// split. Query 2i is the object query of triple i, query 2i+1 the subject
// query under the reciprocal relation. Neighbor downsampling draws from a
// per-query fork of cfg.seed, so results do not depend on batch boundaries.
template <typename T>
EvalResult evaluate_split(HitterModelT<T>& model, const std::vector<Triple>& split,
                          const Vocab& vocab, const NeighborIndex& train_index,
                          const FilterIndex& filter, const EvalConfig& cfg) {
  cfg.validate();
  if (split.empty()) throw ConfigError("evaluate_split: empty split");

  std::vector<QueryExample> queries = build_query_examples(split, vocab, train_index, Mode::Eval);
  const Rng base(cfg.seed);
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    Rng q_rng = base.fork(static_cast<uint64_t>(qi));
    queries[qi].neighbors =
        sample_neighborhood(queries[qi].neighbors, cfg.neighbor_cap, 1.0, Mode::Eval, q_rng);
  }

  EvalResult out;
  out.records.reserve(queries.size());
  const std::vector<uint8_t> all_eligible(static_cast<size_t>(vocab.num_entities()), 1);
  Rng fwd_rng(cfg.seed);  // eval-mode forward draws nothing; kept for the signature
  const int64_t n = vocab.num_entities();

  for (size_t start = 0; start < queries.size(); start += static_cast<size_t>(cfg.batch_size)) {
    const size_t stop = std::min(queries.size(), start + static_cast<size_t>(cfg.batch_size));
    std::vector<QueryExample> chunk(queries.begin() + static_cast<int64_t>(start),
                                    queries.begin() + static_cast<int64_t>(stop));
    Batch batch = collate(chunk, cfg.neighbor_cap, model.mask_token());
    auto f = model.forward(nullptr, batch, Mode::Eval, fwd_rng);
    for (int64_t i = 0; i < batch.batch_size; ++i) {
      const QueryExample& q = chunk[static_cast<size_t>(i)];
      std::span<const T> row(f.logits.data() + i * n, static_cast<size_t>(n));
      const std::vector<uint8_t> mask = filter.filtered_candidates(q.src, q.predicate, q.target);
      QueryRecord rec;
      rec.src = q.src;
      rec.predicate = q.predicate;
      rec.gold = q.target;
      rec.filtered_rank = rank_query<T>(row, q.target, mask, cfg.ties);
      rec.raw_rank = rank_query<T>(row, q.target, all_eligible, cfg.ties);
      out.records.push_back(rec);
    }
  }

  std::vector<double> filtered, raw;
  filtered.reserve(out.records.size());
  raw.reserve(out.records.size());
  for (const QueryRecord& r : out.records) {
    filtered.push_back(r.filtered_rank);
    raw.push_back(r.raw_rank);
  }
  out.filtered = summarize_ranks(filtered);
  out.raw = summarize_ranks(raw);
  return out;
}

// Top-k entities by cosine similarity to the query entity's embedding, the
// query itself excluded. Zero-norm rows are excluded with a warning (the
// query having zero norm makes every similarity 0). Ties break by id.
template <typename T>
std::vector<std::pair<EntityId, double>> nearest_entities(const TensorT<T>& table, EntityId query,
                                                          int64_t k) {
  if (table.rank() != 2) throw ShapeError("nearest_entities: table must be 2-D");
  const int64_t n = table.dim(0), d = table.dim(1);
  if (query < 0 || query >= n)
    throw IndexError("nearest_entities: entity id " + std::to_string(query) + " out of range");
  if (k < 0 || k >= n) throw ConfigError("nearest_entities: need 0 <= k < number of entities");

  std::vector<double> norms(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double v = static_cast<double>(table.values()[static_cast<size_t>(i * d + j)]);
      s += v * v;
    }
    norms[static_cast<size_t>(i)] = std::sqrt(s);
  }
  int64_t zero_dropped = 0;
  const double qn = norms[static_cast<size_t>(query)];
  if (qn == 0.0)
    std::fprintf(stderr, "nearest_entities: query entity %d has a zero-norm embedding\n", query);

  std::vector<std::pair<EntityId, double>> sims;
  sims.reserve(static_cast<size_t>(n - 1));
  for (int64_t i = 0; i < n; ++i) {
    if (i == query) continue;
    if (norms[static_cast<size_t>(i)] == 0.0) {
      ++zero_dropped;
      continue;
    }
    double dot = 0.0;
    for (int64_t j = 0; j < d; ++j)
      dot += static_cast<double>(table.values()[static_cast<size_t>(query * d + j)]) *
             static_cast<double>(table.values()[static_cast<size_t>(i * d + j)]);
    const double sim = qn == 0.0 ? 0.0 : dot / (qn * norms[static_cast<size_t>(i)]);
    sims.emplace_back(static_cast<EntityId>(i), sim);
  }
  if (zero_dropped > 0)
    std::fprintf(stderr, "nearest_entities: excluded %lld zero-norm embeddings\n",
                 static_cast<long long>(zero_dropped));
  std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int64_t>(sims.size()) > k) sims.resize(static_cast<size_t>(k));
  return sims;
}

}  // namespace hitter
