#include <hitter/synthetic.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hitter {

namespace {

std::string ent(int64_t i) { return "e" + std::to_string(i); }
std::string rel(int64_t k) { return "r" + std::to_string(k); }

// Round-robin split position -> destination. Position 0 always lands in
// train so every stratum keeps a demonstrated example; 1 goes to test so the
// smallest datasets still have something to evaluate.
std::vector<NameTriple>* split_for(int64_t position, SyntheticDataset& out) {
  switch (position % 3) {
    case 0: return &out.train;
    case 1: return &out.test;
    default: return &out.valid;
  }
}

void gen_composition(const SyntheticSpec& spec, SyntheticDataset& out, Rng& rng) {
  const int64_t n = spec.num_entities;
  const int64_t nb = std::max<int64_t>(2, n / 5);  // bridges
  const int64_t nc = nb;                           // one target per bridge
  const int64_t na = n - nb - nc;                  // sources; strata of ~3
  const int64_t src0 = 0, bridge0 = na, target0 = na + nb;

  // Bridge j reaches exactly one target; all bridge->target edges train.
  std::vector<int64_t> bridge_target(nb);
  for (int64_t j = 0; j < nb; ++j) {
    bridge_target[j] = target0 + j % nc;
    out.train.push_back({ent(bridge0 + j), rel(1), ent(bridge_target[j])});
  }

  // Sources are shuffled, then dealt to bridges round-robin: every bridge
  // gets a balanced stratum of sources.
  std::vector<int64_t> sources(na);
  for (int64_t i = 0; i < na; ++i) sources[i] = src0 + i;
  rng.shuffle(sources);

  std::vector<std::vector<int64_t>> stratum(nb);
  for (int64_t i = 0; i < na; ++i) {
    const int64_t j = i % nb;
    stratum[j].push_back(sources[i]);
    out.train.push_back({ent(sources[i]), rel(0), ent(bridge0 + j)});
  }

  // Composition edges are held out by whole stratum. Demonstration strata
  // put every composition fact in train: they teach what the composition
  // relation means. Evaluation strata put none there — their facts alternate
  // between valid and test — so no evaluated query's source-to-target mapping
  // was ever trained, directly or through an interchangeable same-stratum
  // source. Answering requires reading the source's bridge edge from its
  // neighborhood and chaining it through the bridge's trained target edge.
  std::vector<int64_t> order(nb);
  for (int64_t j = 0; j < nb; ++j) order[j] = j;
  rng.shuffle(order);
  const int64_t n_eval = std::max<int64_t>(1, 2 * nb / 5);
  for (int64_t p = 0; p < nb; ++p) {
    const int64_t j = order[p];
    const auto& members = stratum[j];
    for (int64_t k = 0; k < static_cast<int64_t>(members.size()); ++k) {
      auto* dest = p >= n_eval ? &out.train : (k % 2 == 0 ? &out.valid : &out.test);
      dest->push_back({ent(members[k]), rel(2), ent(bridge_target[j])});
    }
  }

  // Reinforcement relations: each extra relation repeats every
  // bridge->target link under its own label. The parallel edges couple each
  // bridge's embedding tightly to its target's, which makes the
  // neighbor-bridge -> target step of the rule a near-rigid map that
  // generalizes from the demonstrated strata to the evaluated ones. Sources
  // are untouched, so these edges give a context-free model nothing.
  for (int64_t k = 3; k < spec.num_relations; ++k)
    for (int64_t j = 0; j < nb; ++j)
      out.train.push_back({ent(bridge0 + j), rel(k), ent(bridge_target[j])});
}

void gen_chain(const SyntheticSpec& spec, SyntheticDataset& out, Rng& /*rng*/) {
  const int64_t n = spec.num_entities;
  for (int64_t i = 0; i + 1 < n; ++i) out.train.push_back({ent(i), rel(0), ent(i + 1)});
  for (int64_t i = 0; i + 2 < n; ++i)
    split_for(i, out)->push_back({ent(i), rel(1), ent(i + 2)});
}

void gen_star(const SyntheticSpec& spec, SyntheticDataset& out, Rng& /*rng*/) {
  const int64_t n = spec.num_entities;
  const int64_t spokes = n - 1;
  for (int64_t s = 1; s < n; ++s) out.train.push_back({ent(0), rel(0), ent(s)});
  for (int64_t i = 0; i < spokes; ++i)
    split_for(i, out)->push_back({ent(1 + i), rel(1), ent(1 + (i + 1) % spokes)});
}

using PairSet = std::set<std::pair<std::string, std::string>>;

// head -> tails reachable under `relation` in `triples`.
std::map<std::string, std::set<std::string>> project(const std::vector<NameTriple>& triples,
                                                     const std::string& relation) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& t : triples)
    if (t[1] == relation) out[t[0]].insert(t[2]);
  return out;
}

// Undirected hop distance over the train split, ignoring relation labels.
int64_t train_hops(const SyntheticDataset& data, const std::string& from,
                   const std::string& to) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& t : data.train) {
    adj[t[0]].push_back(t[2]);
    adj[t[2]].push_back(t[0]);
  }
  std::map<std::string, int64_t> dist{{from, 0}};
  std::queue<std::string> q;
  q.push(from);
  while (!q.empty()) {
    std::string u = q.front();
    q.pop();
    if (u == to) return dist[u];
    for (const auto& v : adj[u])
      if (!dist.count(v)) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return -1;
}

void verify_composition(const SyntheticDataset& data) {
  const auto r0 = project(data.train, "r0");
  const auto r1 = project(data.train, "r1");

  // Every r2 pair the rule implies, derived from train r0/r1 alone.
  PairSet implied;
  for (const auto& [a, bs] : r0)
    for (const auto& b : bs) {
      auto it = r1.find(b);
      if (it == r1.end()) continue;
      for (const auto& c : it->second) implied.emplace(a, c);
    }

  PairSet actual;
  std::set<std::string> demonstrated;  // bridges appearing in a train r2 example
  for (const auto* split : {&data.train, &data.valid, &data.test})
    for (const auto& t : *split) {
      if (t[1] != "r2") continue;
      actual.emplace(t[0], t[2]);
      if (split == &data.train) {
        auto it = r0.find(t[0]);
        if (it != r0.end()) demonstrated.insert(it->second.begin(), it->second.end());
      }
    }

  if (actual != implied)
    throw Error("synthetic: composition rule mismatch (" + std::to_string(actual.size()) +
                " emitted vs " + std::to_string(implied.size()) + " implied pairs)");

  if (demonstrated.empty())
    throw Error("synthetic: no train split example demonstrates the composition relation");

  // Held-out composition facts must be derivable from train edges (the
  // source's bridge edge and the bridge's target edge are both present), yet
  // their bridge must have no train composition example at all — otherwise
  // evaluation would partly measure recall of trained source-target
  // mappings instead of application of the rule to an undemonstrated case.
  for (const auto* split : {&data.valid, &data.test})
    for (const auto& t : *split) {
      if (t[1] != "r2") continue;
      auto it = r0.find(t[0]);
      bool derivable = false;
      if (it != r0.end())
        for (const auto& b : it->second) {
          if (demonstrated.count(b))
            throw Error("synthetic: held-out composition (" + t[0] + ", " + t[2] +
                        ") shares bridge " + b + " with a train composition example");
          auto rt = r1.find(b);
          if (rt != r1.end() && rt->second.count(t[2])) derivable = true;
        }
      if (!derivable)
        throw Error("synthetic: held-out composition (" + t[0] + ", " + t[2] +
                    ") is not derivable from train edges");
    }
}

void verify_two_hop(const SyntheticDataset& data) {
  for (const auto* split : {&data.valid, &data.test})
    for (const auto& t : *split) {
      if (t[1] != "r1") throw Error("synthetic: held-out triple under unexpected relation " + t[1]);
      const int64_t h = train_hops(data, t[0], t[2]);
      if (h != 2)
        throw Error("synthetic: held-out pair (" + t[0] + ", " + t[2] + ") is " +
                    std::to_string(h) + " train hops apart, expected 2");
    }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (pattern == "composition") {
    if (num_entities < 10) throw ConfigError("synthetic: composition needs >= 10 entities");
    if (num_relations < 3) throw ConfigError("synthetic: composition needs >= 3 relations");
  } else if (pattern == "chain" || pattern == "star") {
    if (num_entities < 4) throw ConfigError("synthetic: " + pattern + " needs >= 4 entities");
    if (num_relations != 2)
      throw ConfigError("synthetic: " + pattern + " uses exactly 2 relations");
  } else {
    throw ConfigError("synthetic: unknown pattern '" + pattern + "'");
  }
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  for (int64_t i = 0; i < spec.num_entities; ++i) out.entities.push_back(ent(i));
  for (int64_t k = 0; k < spec.num_relations; ++k) out.relations.push_back(rel(k));

  Rng rng(spec.seed);
  if (spec.pattern == "composition")
    gen_composition(spec, out, rng);
  else if (spec.pattern == "chain")
    gen_chain(spec, out, rng);
  else
    gen_star(spec, out, rng);

  verify_synthetic(out, spec);
  return out;
}

void verify_synthetic(const SyntheticDataset& data, const SyntheticSpec& spec) {
  if (spec.pattern == "composition")
    verify_composition(data);
  else
    verify_two_hop(data);
}

void write_synthetic_dir(const SyntheticDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const std::vector<NameTriple>*> files[] = {
      {"train.txt", &data.train}, {"valid.txt", &data.valid}, {"test.txt", &data.test}};
  for (const auto& [name, triples] : files) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw IoError("synthetic: cannot write " + path);
    for (const auto& t : *triples) outf << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
  }
}

}  // namespace hitter
