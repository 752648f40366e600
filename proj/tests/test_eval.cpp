// Tests for filtered ranking and the analysis views. Reference behavior
// comes from independent oracles written against the definitions: a
// sort-and-scan ranker, a full pairwise cosine scan, and a test-local BFS.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitter/eval.hpp"

using namespace hitter;

namespace {

// Independent ranking oracle: sort eligible candidates by score descending,
// locate the gold's tied block, average its 1-based positions.
double rank_oracle(const std::vector<double>& scores, EntityId gold,
                   const std::vector<uint8_t>& eligible) {
  std::vector<double> sorted;
  for (size_t i = 0; i < scores.size(); ++i)
    if (eligible[i]) sorted.push_back(scores[i]);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const double gs = scores[static_cast<size_t>(gold)];
  size_t first = 0;
  while (sorted[first] > gs) ++first;
  size_t last = first;
  while (last + 1 < sorted.size() && sorted[last + 1] == gs) ++last;
  // positions are 1-based; the tied block spans [first+1, last+1]
  return (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
}

std::string data_root() {
  const char* env = std::getenv("HITTER_DATA_DIR");
  return env ? env : "data";
}

// Small random graph shared by the end-to-end tests.
struct Graph {
  Vocab vocab;
  std::vector<Triple> train, test;

  Graph(int64_t entities, int64_t relations, int64_t train_edges, int64_t test_edges,
        uint64_t seed) {
    for (int64_t e = 0; e < entities; ++e) vocab.intern_entity("e" + std::to_string(e));
    for (int64_t r = 0; r < relations; ++r) vocab.intern_relation("r" + std::to_string(r));
    vocab.freeze();
    Rng rng(seed);
    auto draw = [&](std::vector<Triple>& into, int64_t count) {
      while (static_cast<int64_t>(into.size()) < count) {
        Triple t{static_cast<EntityId>(rng.uniform_int(entities)),
                 static_cast<RelationId>(rng.uniform_int(relations)),
                 static_cast<EntityId>(rng.uniform_int(entities))};
        bool dup = false;
        for (const Triple& u : train) dup = dup || u == t;
        for (const Triple& u : test) dup = dup || u == t;
        if (!dup) into.push_back(t);
      }
    };
    draw(train, train_edges);
    draw(test, test_edges);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// rank_query

TEST_CASE("rank: unique maximum is rank 1") {
  std::vector<double> scores{0.1, 0.9, 0.3};
  std::vector<uint8_t> all(3, 1);
  CHECK(rank_query<double>(scores, 1, all) == 1.0);
}

TEST_CASE("rank: a full tie averages to (n+1)/2") {
  std::vector<double> scores(7, 0.42);
  std::vector<uint8_t> all(7, 1);
  CHECK(rank_query<double>(scores, 3, all) == doctest::Approx(4.0));
  // with two candidates filtered out the eligible pool shrinks to 5
  std::vector<uint8_t> mask{1, 0, 1, 1, 1, 0, 1};
  CHECK(rank_query<double>(scores, 3, mask) == doctest::Approx(3.0));
}

TEST_CASE("rank: pessimistic and optimistic policies bracket the average") {
  std::vector<double> scores{1.0, 2.0, 2.0, 2.0, 3.0};
  std::vector<uint8_t> all(5, 1);
  CHECK(rank_query<double>(scores, 1, all, TiePolicy::Optimistic) == 2.0);
  CHECK(rank_query<double>(scores, 1, all, TiePolicy::Average) == 3.0);
  CHECK(rank_query<double>(scores, 1, all, TiePolicy::Pessimistic) == 4.0);
}

TEST_CASE("rank: filtered-out gold is rejected") {
  std::vector<double> scores{1.0, 2.0};
  std::vector<uint8_t> mask{1, 0};
  CHECK_THROWS_AS(rank_query<double>(scores, 1, mask), IndexError);
  std::vector<uint8_t> short_mask{1};
  CHECK_THROWS_AS(rank_query<double>(scores, 0, short_mask), ShapeError);
  std::vector<uint8_t> all{1, 1};
  CHECK_THROWS_AS(rank_query<double>(scores, 5, all), IndexError);
}

TEST_CASE("rank: matches the sort-and-scan oracle on random cases") {
  Rng rng(31);
  for (int trial = 0; trial < 10000; ++trial) {
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(40));
    std::vector<double> scores(static_cast<size_t>(n));
    // quantized scores so ties actually occur
    for (double& s : scores) s = static_cast<double>(rng.uniform_int(6)) / 3.0;
    std::vector<uint8_t> mask(static_cast<size_t>(n));
    for (auto& m : mask) m = rng.bernoulli(0.7) ? 1 : 0;
    const EntityId gold = static_cast<EntityId>(rng.uniform_int(n));
    mask[static_cast<size_t>(gold)] = 1;
    const double got = rank_query<double>(scores, gold, mask);
    const double want = rank_oracle(scores, gold, mask);
    REQUIRE(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("rank: invariant under strictly monotone score transforms") {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t n = 3 + static_cast<int64_t>(rng.uniform_int(30));
    std::vector<double> scores(static_cast<size_t>(n));
    for (double& s : scores)
      s = static_cast<double>(rng.uniform_int(9)) / 4.0 - 1.0;  // in [-1, 1], with ties
    std::vector<uint8_t> mask(static_cast<size_t>(n), 1);
    const EntityId gold = static_cast<EntityId>(rng.uniform_int(n));
    const double base = rank_query<double>(scores, gold, mask);

    std::vector<double> affine(scores), squashed(scores);
    for (double& s : affine) s = 2.0 * s + 1.0;
    for (double& s : squashed) s = std::tanh(s);
    CHECK(rank_query<double>(affine, gold, mask) == base);
    CHECK(rank_query<double>(squashed, gold, mask) == base);
  }
}

// ---------------------------------------------------------------------------
// summarize_ranks

TEST_CASE("summary: hand-computed aggregate") {
  RankingReport rep = summarize_ranks({1.0, 2.0, 4.0});
  CHECK(rep.queries == 3);
  CHECK(rep.mrr == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0));
  CHECK(rep.mr == doctest::Approx(7.0 / 3.0));
  CHECK(rep.hits1 == doctest::Approx(1.0 / 3.0));
  CHECK(rep.hits3 == doctest::Approx(2.0 / 3.0));
  CHECK(rep.hits10 == doctest::Approx(1.0));
}

TEST_CASE("summary: hits are monotone and bounded") {
  Rng rng(33);
  std::vector<double> ranks;
  for (int i = 0; i < 500; ++i) ranks.push_back(1.0 + static_cast<double>(rng.uniform_int(40)));
  RankingReport rep = summarize_ranks(ranks);
  CHECK(rep.hits1 <= rep.hits3);
  CHECK(rep.hits3 <= rep.hits10);
  CHECK(rep.hits10 <= 1.0);
  CHECK(rep.mrr > 0.0);
  CHECK(rep.mrr <= 1.0);
  CHECK(rep.mr >= 1.0);
}

TEST_CASE("summary: json emission carries every field") {
  RankingReport rep = summarize_ranks({1.0, 2.0});
  auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["mrr"].get<double>() == doctest::Approx(0.75));
  CHECK(j["mr"].get<double>() == doctest::Approx(1.5));
  CHECK(j["queries"].get<int64_t>() == 2);
  CHECK(j.contains("hits1"));
  CHECK(j.contains("hits3"));
  CHECK(j.contains("hits10"));
}

// ---------------------------------------------------------------------------
// evaluate_split

TEST_CASE("evaluate: one triple yields two queries in fixed order") {
  Graph g(6, 2, 8, 0, 40);
  std::vector<Triple> test{{0, 1, 3}};
  NeighborIndex index(g.train, g.vocab);
  FilterIndex filter(g.vocab, {&g.train, &test});
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.ffn_dim = 16;
  cfg.heads = 2;
  cfg.entity_layers = 1;
  cfg.context_layers = 1;
  cfg.dropout = 0.0;
  cfg.embedding_dropout = 0.0;
  HitterModelT<float> model(cfg, g.vocab.num_entities(), g.vocab.num_relations(), 3);
  EvalConfig ecfg;
  ecfg.neighbor_cap = 4;
  auto res = evaluate_split(model, test, g.vocab, index, filter, ecfg);
  REQUIRE(res.records.size() == 2);
  CHECK(res.filtered.queries == 2);
  CHECK(res.raw.queries == 2);
  // query 0: object side; query 1: subject side under the reciprocal id
  CHECK(res.records[0].src == 0);
  CHECK(res.records[0].predicate == 1);
  CHECK(res.records[0].gold == 3);
  CHECK(res.records[1].src == 3);
  CHECK(res.records[1].predicate == g.vocab.reciprocal(1));
  CHECK(res.records[1].gold == 0);
}

TEST_CASE("evaluate: single eligible candidate makes every metric 1") {
  // self-loops put every non-gold candidate into the filter, so each query
  // ranks a single entity regardless of what the model scores
  Vocab vocab;
  vocab.intern_entity("a");
  vocab.intern_entity("b");
  vocab.intern_relation("r");
  vocab.freeze();
  std::vector<Triple> train{{0, 0, 0}, {1, 0, 1}};
  std::vector<Triple> test{{0, 0, 1}, {1, 0, 0}};
  NeighborIndex index(train, vocab);
  FilterIndex filter(vocab, {&train, &test});
  ModelConfig mcfg;
  mcfg.d_model = 8;
  mcfg.ffn_dim = 16;
  mcfg.heads = 2;
  mcfg.entity_layers = 1;
  mcfg.context_layers = 1;
  mcfg.dropout = 0.0;
  mcfg.embedding_dropout = 0.0;
  HitterModelT<float> model(mcfg, 2, 2, 5);
  EvalConfig ecfg;
  ecfg.neighbor_cap = 4;
  auto res = evaluate_split(model, test, vocab, index, filter, ecfg);
  CHECK(res.filtered.mrr == doctest::Approx(1.0));
  CHECK(res.filtered.mr == doctest::Approx(1.0));
  CHECK(res.filtered.hits1 == doctest::Approx(1.0));
  CHECK(res.filtered.hits10 == doctest::Approx(1.0));
}

TEST_CASE("evaluate: matches a per-query straight-line reimplementation") {
  Graph g(12, 3, 24, 6, 41);
  NeighborIndex index(g.train, g.vocab);
  FilterIndex filter(g.vocab, {&g.train, &g.test});
  ModelConfig mcfg;
  mcfg.d_model = 16;
  mcfg.ffn_dim = 32;
  mcfg.heads = 4;
  mcfg.entity_layers = 1;
  mcfg.context_layers = 2;
  mcfg.dropout = 0.0;
  mcfg.embedding_dropout = 0.0;
  HitterModelT<float> model(mcfg, g.vocab.num_entities(), g.vocab.num_relations(), 7);

  EvalConfig ecfg;
  ecfg.batch_size = 5;  // deliberately misaligned with the query count
  ecfg.neighbor_cap = 3;
  ecfg.seed = 123;
  auto res = evaluate_split(model, g.test, g.vocab, index, filter, ecfg);
  REQUIRE(res.records.size() == 2 * g.test.size());

  // oracle: one query at a time, neighbors drawn from the same per-query fork
  const Rng base(ecfg.seed);
  const int64_t n = g.vocab.num_entities();
  std::vector<double> filtered_ranks;
  for (size_t ti = 0; ti < g.test.size(); ++ti) {
    const Triple& t = g.test[ti];
    for (int dir = 0; dir < 2; ++dir) {
      QueryExample ex;
      ex.src = dir == 0 ? t.subject : t.object;
      ex.predicate = dir == 0 ? t.predicate : g.vocab.reciprocal(t.predicate);
      ex.target = dir == 0 ? t.object : t.subject;
      auto span = index.neighbors_of(ex.src);
      ex.neighbors.assign(span.begin(), span.end());
      Rng q_rng = base.fork(2 * ti + static_cast<size_t>(dir));
      ex.neighbors = sample_neighborhood(ex.neighbors, ecfg.neighbor_cap, 1.0, Mode::Eval, q_rng);

      Batch batch = collate({ex}, ecfg.neighbor_cap, model.mask_token());
      Rng fwd(0);
      auto f = model.forward(nullptr, batch, Mode::Eval, fwd);
      std::span<const float> row(f.logits.data(), static_cast<size_t>(n));
      auto mask = filter.filtered_candidates(ex.src, ex.predicate, ex.target);
      const double frank = rank_query<float>(row, ex.target, mask);
      const std::vector<uint8_t> all(static_cast<size_t>(n), 1);
      const double rrank = rank_query<float>(row, ex.target, all);

      const QueryRecord& rec = res.records[2 * ti + static_cast<size_t>(dir)];
      CHECK(rec.filtered_rank == frank);
      CHECK(rec.raw_rank == rrank);
      filtered_ranks.push_back(frank);
    }
  }
  RankingReport oracle_rep = summarize_ranks(filtered_ranks);
  CHECK(res.filtered.mrr == doctest::Approx(oracle_rep.mrr).epsilon(1e-12));
  CHECK(res.filtered.mr == doctest::Approx(oracle_rep.mr).epsilon(1e-12));
}

TEST_CASE("evaluate: filtered rank never exceeds raw rank") {
  Graph g(15, 3, 40, 10, 42);
  NeighborIndex index(g.train, g.vocab);
  FilterIndex filter(g.vocab, {&g.train, &g.test});
  ModelConfig mcfg;
  mcfg.d_model = 8;
  mcfg.ffn_dim = 16;
  mcfg.heads = 2;
  mcfg.entity_layers = 1;
  mcfg.context_layers = 1;
  mcfg.dropout = 0.0;
  mcfg.embedding_dropout = 0.0;
  HitterModelT<float> model(mcfg, g.vocab.num_entities(), g.vocab.num_relations(), 11);
  EvalConfig ecfg;
  ecfg.neighbor_cap = 5;
  auto res = evaluate_split(model, g.test, g.vocab, index, filter, ecfg);
  for (const QueryRecord& r : res.records) CHECK(r.filtered_rank <= r.raw_rank);
  CHECK(res.filtered.mrr >= res.raw.mrr);
}

TEST_CASE("evaluate: reports are identical across repeat runs and batch sizes") {
  Graph g(12, 2, 30, 8, 43);
  NeighborIndex index(g.train, g.vocab);
  FilterIndex filter(g.vocab, {&g.train, &g.test});
  ModelConfig mcfg;
  mcfg.d_model = 8;
  mcfg.ffn_dim = 16;
  mcfg.heads = 2;
  mcfg.entity_layers = 1;
  mcfg.context_layers = 1;
  mcfg.dropout = 0.3;            // must not leak into eval mode
  mcfg.embedding_dropout = 0.4;  // likewise
  HitterModelT<float> model(mcfg, g.vocab.num_entities(), g.vocab.num_relations(), 17);

  EvalConfig a;
  a.batch_size = 64;
  a.neighbor_cap = 4;
  a.seed = 9;
  EvalConfig b = a;
  b.batch_size = 3;  // different chunking must not change anything

  auto r1 = evaluate_split(model, g.test, g.vocab, index, filter, a);
  auto r2 = evaluate_split(model, g.test, g.vocab, index, filter, a);
  auto r3 = evaluate_split(model, g.test, g.vocab, index, filter, b);
  REQUIRE(r1.records.size() == r2.records.size());
  REQUIRE(r1.records.size() == r3.records.size());
  for (size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].filtered_rank == r2.records[i].filtered_rank);
    CHECK(r1.records[i].filtered_rank == r3.records[i].filtered_rank);
    CHECK(r1.records[i].raw_rank == r3.records[i].raw_rank);
  }
  CHECK(r1.filtered.mrr == r3.filtered.mrr);
}

TEST_CASE("evaluate: empty split is rejected") {
  Graph g(6, 2, 8, 0, 44);
  NeighborIndex index(g.train, g.vocab);
  FilterIndex filter(g.vocab, {&g.train});
  ModelConfig mcfg;
  mcfg.d_model = 8;
  mcfg.ffn_dim = 16;
  mcfg.heads = 2;
  mcfg.entity_layers = 1;
  mcfg.context_layers = 1;
  HitterModelT<float> model(mcfg, g.vocab.num_entities(), g.vocab.num_relations(), 3);
  std::vector<Triple> empty;
  CHECK_THROWS_AS(evaluate_split(model, empty, g.vocab, index, filter, EvalConfig{}), ConfigError);
}

// ---------------------------------------------------------------------------
// breakdowns

TEST_CASE("breakdown: single relation collapses to the global MRR") {
  std::vector<QueryRecord> records;
  Vocab vocab;
  vocab.intern_entity("a");
  vocab.intern_entity("b");
  vocab.intern_relation("only");
  vocab.freeze();
  records.push_back({0, 0, 1, 1.0, 1.0});
  records.push_back({1, vocab.reciprocal(0), 0, 4.0, 5.0});
  auto rows = breakdown_by_relation(records, vocab);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].key == "only");
  CHECK(rows[0].count == 2);
  CHECK(rows[0].mrr == doctest::Approx((1.0 + 0.25) / 2.0));
}

TEST_CASE("breakdown: counts partition the query set and sort descending") {
  Vocab vocab;
  vocab.intern_entity("a");
  for (int r = 0; r < 3; ++r) vocab.intern_relation("rel" + std::to_string(r));
  vocab.freeze();
  Rng rng(50);
  std::vector<QueryRecord> records;
  for (int i = 0; i < 300; ++i) {
    QueryRecord rec;
    // weighted so group sizes differ
    const RelationId base = rng.bernoulli(0.5) ? 0 : (rng.bernoulli(0.5) ? 1 : 2);
    rec.predicate = rng.bernoulli(0.5) ? base : vocab.reciprocal(base);
    rec.filtered_rank = 1.0 + static_cast<double>(rng.uniform_int(9));
    records.push_back(rec);
  }
  auto rows = breakdown_by_relation(records, vocab);
  int64_t total = 0;
  for (const auto& row : rows) total += row.count;
  CHECK(total == 300);
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].count >= rows[i].count);
  // keys are base relation names, never reciprocal ones
  for (const auto& row : rows) CHECK(row.key.rfind("inv:", 0) == std::string::npos);
}

TEST_CASE("breakdown: hop buckets match a test-local BFS count") {
  Graph g(14, 2, 26, 8, 51);
  NeighborIndex index(g.train, g.vocab);
  std::vector<QueryRecord> records;
  for (const Triple& t : g.test) {
    records.push_back({t.subject, t.predicate, t.object, 2.0, 2.0});
    records.push_back({t.object, g.vocab.reciprocal(t.predicate), t.subject, 2.0, 2.0});
  }
  auto rows = mrr_by_hops(records, index);

  // oracle: BFS per query over an undirected adjacency rebuilt from scratch
  std::vector<std::vector<EntityId>> adj(static_cast<size_t>(g.vocab.num_entities()));
  for (const Triple& t : g.train) {
    adj[static_cast<size_t>(t.subject)].push_back(t.object);
    adj[static_cast<size_t>(t.object)].push_back(t.subject);
  }
  auto bfs = [&](EntityId from, EntityId to) -> int64_t {
    if (from == to) return 0;
    std::vector<int64_t> dist(adj.size(), -1);
    std::vector<EntityId> frontier{from};
    dist[static_cast<size_t>(from)] = 0;
    while (!frontier.empty()) {
      std::vector<EntityId> next;
      for (EntityId u : frontier)
        for (EntityId v : adj[static_cast<size_t>(u)])
          if (dist[static_cast<size_t>(v)] < 0) {
            dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
            next.push_back(v);
          }
      frontier = std::move(next);
    }
    return dist[static_cast<size_t>(to)];
  };
  std::map<std::string, int64_t> expected;
  for (const QueryRecord& r : records) {
    const int64_t h = bfs(r.src, r.gold);
    std::string key = h < 0 ? "unreachable" : (h >= 5 ? "5+" : std::to_string(h));
    ++expected[key];
  }
  int64_t total = 0;
  for (const auto& row : rows) {
    CHECK(expected.count(row.key) == 1);
    CHECK(expected[row.key] == row.count);
    total += row.count;
  }
  CHECK(total == static_cast<int64_t>(records.size()));
}

TEST_CASE("breakdown: adjacent pairs land in bucket 1, distant in their hop") {
  // chain 0-1-2-3 with train edges; test pair (0,3) is 3 hops away
  Vocab vocab;
  for (int i = 0; i < 5; ++i) vocab.intern_entity("n" + std::to_string(i));
  vocab.intern_relation("r");
  vocab.freeze();
  std::vector<Triple> train{{0, 0, 1}, {1, 0, 2}, {2, 0, 3}};
  NeighborIndex index(train, vocab);

  std::vector<QueryRecord> adjacent;
  for (const Triple& t : train) adjacent.push_back({t.subject, t.predicate, t.object, 1.0, 1.0});
  auto rows = mrr_by_hops(adjacent, index);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].key == "1");
  CHECK(rows[0].count == 3);

  std::vector<QueryRecord> far{{0, 0, 3, 1.0, 1.0}, {0, 0, 4, 1.0, 1.0}};
  rows = mrr_by_hops(far, index);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].key == "3");
  CHECK(rows[0].count == 1);
  CHECK(rows[1].key == "unreachable");  // entity 4 has no train edges
  CHECK(rows[1].count == 1);
}

TEST_CASE("breakdown: csv emission has one line per row plus header") {
  std::vector<BreakdownRow> rows{{"alpha", 10, 0.5}, {"beta", 3, 0.25}};
  const std::string csv = breakdown_csv(rows);
  CHECK(csv.find("group,count,mrr\n") == 0);
  CHECK(csv.find("alpha,10,0.5\n") != std::string::npos);
  CHECK(csv.find("beta,3,0.25\n") != std::string::npos);

  std::vector<QueryRecord> records{{4, 1, 2, 1.5, 3.0}};
  const std::string qcsv = query_records_csv(records);
  CHECK(qcsv.find("query,src,predicate,gold,filtered_rank,raw_rank\n") == 0);
  CHECK(qcsv.find("0,4,1,2,1.5,3\n") != std::string::npos);
}

// ---------------------------------------------------------------------------
// nearest entities

TEST_CASE("nearest: a duplicated embedding ranks first with similarity 1") {
  TensorT<float> table = TensorT<float>::zeros({5, 3});
  Rng rng(60);
  for (float& v : table.values()) v = static_cast<float>(rng.uniform01() - 0.5);
  for (int64_t j = 0; j < 3; ++j) table.data()[2 * 3 + j] = table.data()[0 * 3 + j];
  auto top = nearest_entities(table, 0, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].first == 2);
  CHECK(top[0].second == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("nearest: orthogonal one-hot table ties at zero, ids ascending") {
  TensorT<float> table = TensorT<float>::zeros({6, 6});
  for (int64_t i = 0; i < 6; ++i) table.data()[i * 6 + i] = 1.0f;
  auto top = nearest_entities(table, 3, 4);
  REQUIRE(top.size() == 4);
  CHECK(top[0].first == 0);
  CHECK(top[1].first == 1);
  CHECK(top[2].first == 2);
  CHECK(top[3].first == 4);
  for (const auto& [id, sim] : top) CHECK(sim == doctest::Approx(0.0));
}

TEST_CASE("nearest: matches a full pairwise-cosine scan on a random table") {
  TensorT<double> table = TensorT<double>::zeros({40, 7});
  Rng rng(61);
  for (double& v : table.values()) v = rng.normal(0.0, 1.0);
  const EntityId query = 13;
  auto top = nearest_entities(table, query, 10);

  // oracle: full scan
  std::vector<std::pair<EntityId, double>> all;
  auto norm = [&](EntityId i) {
    double s = 0.0;
    for (int64_t j = 0; j < 7; ++j) {
      const double v = table.values()[static_cast<size_t>(i * 7 + j)];
      s += v * v;
    }
    return std::sqrt(s);
  };
  for (EntityId i = 0; i < 40; ++i) {
    if (i == query) continue;
    double dot = 0.0;
    for (int64_t j = 0; j < 7; ++j)
      dot += table.values()[static_cast<size_t>(query * 7 + j)] *
             table.values()[static_cast<size_t>(i * 7 + j)];
    all.emplace_back(i, dot / (norm(query) * norm(i)));
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  REQUIRE(top.size() == 10);
  for (size_t i = 0; i < top.size(); ++i) {
    CHECK(top[i].first == all[i].first);
    CHECK(top[i].second == doctest::Approx(all[i].second).epsilon(1e-12));
  }
}

TEST_CASE("nearest: zero-norm rows are excluded; bad arguments rejected") {
  TensorT<float> table = TensorT<float>::zeros({4, 2});
  table.data()[0] = 1.0f;              // entity 0: (1, 0)
  table.data()[2 * 2 + 1] = 1.0f;      // entity 2: (0, 1)
  table.data()[3 * 2 + 0] = -1.0f;     // entity 3: (-1, 0); entity 1 stays zero
  auto top = nearest_entities(table, 0, 3);
  REQUIRE(top.size() == 2);  // entity 1 dropped despite k=3
  CHECK(top[0].first == 2);
  CHECK(top[1].first == 3);
  CHECK(top[1].second == doctest::Approx(-1.0));

  CHECK_THROWS_AS(nearest_entities(table, 9, 2), IndexError);
  CHECK_THROWS_AS(nearest_entities(table, 0, 4), ConfigError);
}

// ---------------------------------------------------------------------------
// dataset-scale breakdown counts (skipped when the corpus is absent)

TEST_CASE("breakdown: benchmark dev-set relation counts") {
  const std::string root = data_root() + "/wn18rr";
  if (!std::filesystem::exists(root + "/valid.txt")) {
    MESSAGE("dataset not present under ", root, "; skipping");
    return;
  }
  Vocab vocab;
  auto train = load_triples(root + "/train.txt", vocab, VocabMode::Build);
  auto valid = load_triples(root + "/valid.txt", vocab, VocabMode::Build);
  vocab.freeze();
  std::vector<QueryRecord> records;
  for (const Triple& t : valid) {
    records.push_back({t.subject, t.predicate, t.object, 1.0, 1.0});
    records.push_back({t.object, vocab.reciprocal(t.predicate), t.subject, 1.0, 1.0});
  }
  auto rows = breakdown_by_relation(records, vocab);
  auto count_of = [&](const std::string& name) -> int64_t {
    for (const auto& row : rows)
      if (row.key == name) return row.count;
    return -1;
  };
  // both query directions fold onto the base relation, so each dev triple
  // contributes 2 to its relation's count
  CHECK(count_of("_hypernym") == 2 * 1174);
  CHECK(count_of("_derivationally_related_form") == 2 * 1078);
  CHECK(count_of("_member_meronym") == 2 * 273);
}
