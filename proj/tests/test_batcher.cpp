// Tests for batch construction: query expansion with gold-edge removal,
// capped uniform neighborhood sampling, masked-source perturbation rates,
// and collation round-trips.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <vector>

#include "hitter/batcher.hpp"

using namespace hitter;

namespace {

// Small fixture graph: a -r-> b, a -s-> c, b -r-> c, c -s-> a.
struct ToyGraph {
  Vocab vocab;
  std::vector<Triple> triples;
  EntityId a, b, c;
  RelationId r, s;

  ToyGraph() {
    a = vocab.intern_entity("a");
    b = vocab.intern_entity("b");
    c = vocab.intern_entity("c");
    r = vocab.intern_relation("r");
    s = vocab.intern_relation("s");
    vocab.freeze();
    triples = {{a, r, b}, {a, s, c}, {b, r, c}, {c, s, a}};
  }
};

std::vector<NeighborPair> make_pairs(int64_t n) {
  std::vector<NeighborPair> out;
  for (int64_t i = 0; i < n; ++i) out.push_back({static_cast<RelationId>(i % 3), static_cast<EntityId>(i)});
  return out;
}

MepConfig wn18rr_style_mep() {
  MepConfig cfg;
  cfg.select_prob = 0.8;
  cfg.mask_frac = 0.6;
  cfg.replace_frac = 0.12;
  cfg.keep_frac = 0.28;
  cfg.use_aux_loss = true;
  return cfg;
}

MepConfig fb15k237_style_mep() {
  MepConfig cfg;
  cfg.select_prob = 1.0;
  cfg.mask_frac = 0.5;
  cfg.replace_frac = 0.0;
  cfg.keep_frac = 0.5;
  cfg.use_aux_loss = false;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// build_query_examples

TEST_CASE("query examples: one triple expands to a forward and a reverse query") {
  Vocab vocab;
  const EntityId a = vocab.intern_entity("a");
  const EntityId b = vocab.intern_entity("b");
  const RelationId r = vocab.intern_relation("r");
  vocab.freeze();
  std::vector<Triple> train{{a, r, b}};
  NeighborIndex index(train, vocab);
  auto examples = build_query_examples(train, vocab, index, Mode::Eval);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].src == a);
  CHECK(examples[0].predicate == r);
  CHECK(examples[0].target == b);
  CHECK(examples[1].src == b);
  CHECK(examples[1].predicate == vocab.reciprocal(r));
  CHECK(examples[1].target == a);
}

TEST_CASE("query examples: count is twice the triple count") {
  ToyGraph g;
  NeighborIndex index(g.triples, g.vocab);
  auto examples = build_query_examples(g.triples, g.vocab, index, Mode::Train);
  CHECK(examples.size() == 2 * g.triples.size());
}

TEST_CASE("query examples: train mode removes exactly the query's own edge") {
  ToyGraph g;
  NeighborIndex index(g.triples, g.vocab);
  auto examples = build_query_examples(g.triples, g.vocab, index, Mode::Train);
  // forward example for (a,r,b): neighbors(a) = [(r,b),(s,c),(s~,c)] minus (r,b)
  const QueryExample& fwd = examples[0];
  REQUIRE(fwd.src == g.a);
  for (const auto& p : fwd.neighbors) CHECK_FALSE(p == NeighborPair{g.r, g.b});
  // everything else about a's neighborhood is retained
  CHECK(fwd.neighbors.size() == index.neighbors_of(g.a).size() - 1);
  // reverse example for (a,r,b): neighbors(b) lose (r~, a)
  const QueryExample& rev = examples[1];
  REQUIRE(rev.src == g.b);
  for (const auto& p : rev.neighbors)
    CHECK_FALSE(p == NeighborPair{g.vocab.reciprocal(g.r), g.a});
  CHECK(rev.neighbors.size() == index.neighbors_of(g.b).size() - 1);
}

TEST_CASE("query examples: eval mode keeps the full neighborhood") {
  ToyGraph g;
  NeighborIndex index(g.triples, g.vocab);
  auto examples = build_query_examples(g.triples, g.vocab, index, Mode::Eval);
  CHECK(examples[0].neighbors.size() == index.neighbors_of(g.a).size());
}

TEST_CASE("query examples: strict removal drops every pair touching the target") {
  Vocab vocab;
  const EntityId a = vocab.intern_entity("a");
  const EntityId b = vocab.intern_entity("b");
  const RelationId r = vocab.intern_relation("r");
  const RelationId s = vocab.intern_relation("s");
  vocab.freeze();
  // two distinct edges a->b; the default rule keeps one, strict keeps none
  std::vector<Triple> train{{a, r, b}, {a, s, b}};
  NeighborIndex index(train, vocab);

  auto loose = build_query_examples(train, vocab, index, Mode::Train, false);
  REQUIRE(loose[0].src == a);
  CHECK(loose[0].neighbors.size() == 1);
  CHECK(loose[0].neighbors[0] == NeighborPair{s, b});

  auto strict = build_query_examples(train, vocab, index, Mode::Train, true);
  CHECK(strict[0].neighbors.empty());
}

// ---------------------------------------------------------------------------
// sample_neighborhood

TEST_CASE("sampling: under the cap in eval mode nothing changes") {
  auto full = make_pairs(7);
  Rng rng(1);
  auto out = sample_neighborhood(full, 10, 0.7, Mode::Eval, rng);
  CHECK(out == full);
}

TEST_CASE("sampling: cap then keep-fraction gives ceil(frac*cap) pairs") {
  auto full = make_pairs(100);
  Rng rng(2);
  auto out = sample_neighborhood(full, 50, 0.7, Mode::Train, rng);
  CHECK(out.size() == 35);
}

TEST_CASE("sampling: keep fraction rounds up") {
  auto full = make_pairs(5);
  Rng rng(3);
  auto out = sample_neighborhood(full, 10, 0.5, Mode::Train, rng);
  CHECK(out.size() == 3);  // ceil(0.5 * 5)
}

TEST_CASE("sampling: relative order of survivors is preserved") {
  auto full = make_pairs(30);
  Rng rng(4);
  auto out = sample_neighborhood(full, 10, 0.5, Mode::Train, rng);
  for (size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].entity < out[i].entity);
}

TEST_CASE("sampling: cap zero empties the list") {
  auto full = make_pairs(4);
  Rng rng(5);
  CHECK(sample_neighborhood(full, 0, 1.0, Mode::Eval, rng).empty());
}

TEST_CASE("sampling: inclusion is uniform across neighbors") {
  auto full = make_pairs(10);
  const int64_t trials = 100000;
  const int64_t cap = 5;
  std::vector<int64_t> count(10, 0);
  Rng rng(6);
  for (int64_t t = 0; t < trials; ++t) {
    for (const auto& p : sample_neighborhood(full, cap, 1.0, Mode::Eval, rng))
      ++count[static_cast<size_t>(p.entity)];
  }
  const double expected = static_cast<double>(trials) * 0.5;
  double chi2 = 0.0;
  for (int64_t c : count) {
    const double f = static_cast<double>(c) / static_cast<double>(trials);
    CHECK(f > 0.49);
    CHECK(f < 0.51);
    chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  }
  // chi-square critical value, 9 degrees of freedom, alpha = 0.01
  CHECK(chi2 < 21.666);
}

// ---------------------------------------------------------------------------
// apply_mep

TEST_CASE("mep: zero select probability leaves everything untouched") {
  MepConfig cfg;
  cfg.select_prob = 0.0;
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    QueryExample ex;
    ex.src = 3;
    apply_mep(ex, cfg, 10, rng);
    CHECK(ex.perturbation.kind == Perturbation::Kind::NotSelected);
  }
}

TEST_CASE("mep: long-run category rates match the heavier preset") {
  const MepConfig cfg = wn18rr_style_mep();
  cfg.validate();
  const int64_t n = 100000;
  std::map<Perturbation::Kind, int64_t> counts;
  Rng rng(8);
  for (int64_t i = 0; i < n; ++i) {
    QueryExample ex;
    apply_mep(ex, cfg, 50, rng);
    ++counts[ex.perturbation.kind];
  }
  auto rate = [&](Perturbation::Kind k) {
    return static_cast<double>(counts[k]) / static_cast<double>(n);
  };
  CHECK(std::abs(rate(Perturbation::Kind::Mask) - 0.48) < 0.01);
  CHECK(std::abs(rate(Perturbation::Kind::RandomReplace) - 0.096) < 0.01);
  CHECK(std::abs(rate(Perturbation::Kind::Keep) - 0.224) < 0.01);
  CHECK(std::abs(rate(Perturbation::Kind::NotSelected) - 0.20) < 0.01);
}

TEST_CASE("mep: always-select preset masks half and never replaces") {
  const MepConfig cfg = fb15k237_style_mep();
  cfg.validate();
  CHECK_FALSE(cfg.use_aux_loss);
  const int64_t n = 100000;
  int64_t masked = 0, replaced = 0, unselected = 0;
  Rng rng(9);
  for (int64_t i = 0; i < n; ++i) {
    QueryExample ex;
    apply_mep(ex, cfg, 50, rng);
    if (ex.perturbation.kind == Perturbation::Kind::Mask) ++masked;
    if (ex.perturbation.kind == Perturbation::Kind::RandomReplace) ++replaced;
    if (ex.perturbation.kind == Perturbation::Kind::NotSelected) ++unselected;
  }
  CHECK(std::abs(static_cast<double>(masked) / static_cast<double>(n) - 0.5) < 0.01);
  CHECK(replaced == 0);
  CHECK(unselected == 0);
}

TEST_CASE("mep: category counts stay within binomial three sigma") {
  MepConfig cfg;
  cfg.select_prob = 0.6;
  cfg.mask_frac = 0.3;
  cfg.replace_frac = 0.2;
  cfg.keep_frac = 0.5;
  cfg.validate();
  const int64_t n = 50000;
  std::map<Perturbation::Kind, int64_t> counts;
  Rng rng(10);
  for (int64_t i = 0; i < n; ++i) {
    QueryExample ex;
    apply_mep(ex, cfg, 50, rng);
    ++counts[ex.perturbation.kind];
  }
  auto check_band = [&](Perturbation::Kind k, double p) {
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    const double delta =
        std::abs(static_cast<double>(counts[k]) - static_cast<double>(n) * p);
    CHECK(delta < 3.0 * sigma);
  };
  check_band(Perturbation::Kind::Mask, 0.6 * 0.3);
  check_band(Perturbation::Kind::RandomReplace, 0.6 * 0.2);
  check_band(Perturbation::Kind::Keep, 0.6 * 0.5);
  check_band(Perturbation::Kind::NotSelected, 0.4);
}

TEST_CASE("mep: replacement ids cover the entity vocabulary") {
  MepConfig cfg;
  cfg.select_prob = 1.0;
  cfg.mask_frac = 0.0;
  cfg.replace_frac = 1.0;
  cfg.keep_frac = 0.0;
  const int64_t vocab_size = 8;
  std::vector<int64_t> hist(static_cast<size_t>(vocab_size), 0);
  Rng rng(11);
  for (int i = 0; i < 8000; ++i) {
    QueryExample ex;
    apply_mep(ex, cfg, vocab_size, rng);
    REQUIRE(ex.perturbation.kind == Perturbation::Kind::RandomReplace);
    REQUIRE(ex.perturbation.replace_id >= 0);
    REQUIRE(ex.perturbation.replace_id < vocab_size);
    ++hist[static_cast<size_t>(ex.perturbation.replace_id)];
  }
  for (int64_t h : hist) CHECK(h > 800);  // expected 1000 each
}

TEST_CASE("mep: fractions that do not sum to one are rejected") {
  MepConfig cfg;
  cfg.select_prob = 0.5;
  cfg.mask_frac = 0.5;
  cfg.replace_frac = 0.2;
  cfg.keep_frac = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// collate / decollate

TEST_CASE("collate: zero neighbors means an all-false validity mask") {
  QueryExample ex;
  ex.src = 1;
  ex.predicate = 0;
  ex.target = 2;
  Batch b = collate({ex}, 4, 100);
  CHECK(b.batch_size == 1);
  CHECK(b.nbr_valid == std::vector<uint8_t>{0, 0, 0, 0});
  for (auto id : b.nbr_entity) CHECK(id == Batch::kPad);
}

TEST_CASE("collate: validity marks exactly the filled slots") {
  QueryExample e1;
  e1.neighbors = {{0, 1}, {1, 2}};
  QueryExample e2;
  e2.neighbors = {{0, 1}, {1, 2}, {0, 3}};
  Batch b = collate({e1, e2}, 3, 100);
  CHECK(b.nbr_valid == std::vector<uint8_t>{1, 1, 0, 1, 1, 1});
}

TEST_CASE("collate: over-cap example is a contract violation") {
  QueryExample ex;
  ex.neighbors = {{0, 1}, {1, 2}};
  CHECK_THROWS_AS(collate({ex}, 1, 100), ShapeError);
}

TEST_CASE("collate: masked source shows the mask token, label keeps the original") {
  QueryExample ex;
  ex.src = 7;
  ex.perturbation.kind = Perturbation::Kind::Mask;
  const EntityId mask_token = 55;
  Batch b = collate({ex}, 2, mask_token);
  CHECK(b.src_input[0] == mask_token);
  CHECK(b.src_original[0] == 7);
}

TEST_CASE("collate: replaced source shows the substitute id") {
  QueryExample ex;
  ex.src = 7;
  ex.perturbation.kind = Perturbation::Kind::RandomReplace;
  ex.perturbation.replace_id = 3;
  Batch b = collate({ex}, 2, 55);
  CHECK(b.src_input[0] == 3);
  CHECK(b.src_original[0] == 7);
}

TEST_CASE("collate: shapes depend only on batch size and cap") {
  QueryExample empty;
  QueryExample full;
  full.neighbors = make_pairs(6);
  for (const auto& examples :
       {std::vector<QueryExample>{empty, empty}, std::vector<QueryExample>{full, empty}}) {
    Batch b = collate(examples, 8, 99);
    CHECK(b.nbr_relation.size() == 16);
    CHECK(b.nbr_entity.size() == 16);
    CHECK(b.nbr_valid.size() == 16);
  }
}

TEST_CASE("collate: decollate round-trips random batches") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t cap = 1 + rng.uniform_int(6);
    std::vector<QueryExample> xs;
    const int64_t batch = 1 + rng.uniform_int(5);
    for (int64_t i = 0; i < batch; ++i) {
      QueryExample ex;
      ex.src = static_cast<EntityId>(rng.uniform_int(50));
      ex.predicate = static_cast<RelationId>(rng.uniform_int(6));
      ex.target = static_cast<EntityId>(rng.uniform_int(50));
      const int64_t n = rng.uniform_int(cap + 1);
      for (int64_t j = 0; j < n; ++j)
        ex.neighbors.push_back(
            {static_cast<RelationId>(rng.uniform_int(6)), static_cast<EntityId>(rng.uniform_int(50))});
      switch (rng.uniform_int(4)) {
        case 1:
          ex.perturbation.kind = Perturbation::Kind::Mask;
          break;
        case 2:
          ex.perturbation.kind = Perturbation::Kind::RandomReplace;
          ex.perturbation.replace_id = static_cast<EntityId>(rng.uniform_int(50));
          break;
        case 3:
          ex.perturbation.kind = Perturbation::Kind::Keep;
          break;
        default:
          break;
      }
      xs.push_back(std::move(ex));
    }
    Batch b = collate(xs, cap, 1000);
    CHECK(decollate(b) == xs);
  }
}

// ---------------------------------------------------------------------------
// leakage

TEST_CASE("leakage: training batches never contain their own gold edge") {
  ToyGraph g;
  NeighborIndex index(g.triples, g.vocab);
  auto examples = build_query_examples(g.triples, g.vocab, index, Mode::Train);
  Rng rng(13);
  for (auto& ex : examples) apply_mep(ex, fb15k237_style_mep(), g.vocab.num_entities(), rng);
  Batch b = collate(examples, 8, static_cast<EntityId>(g.vocab.num_entities()));
  CHECK(batch_has_no_gold_leak(b));
}

TEST_CASE("leakage: an eval batch with the gold edge present is flagged") {
  ToyGraph g;
  NeighborIndex index(g.triples, g.vocab);
  auto examples = build_query_examples(g.triples, g.vocab, index, Mode::Eval);
  Batch b = collate(examples, 8, static_cast<EntityId>(g.vocab.num_entities()));
  CHECK_FALSE(batch_has_no_gold_leak(b));
}
