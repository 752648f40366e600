#include "hitter/kg.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hitter/rng.hpp"

namespace hitter {

EntityId Vocab::intern_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  if (frozen_) throw VocabError("unknown entity '" + name + "' in frozen vocabulary");
  const EntityId id = static_cast<EntityId>(entity_names_.size());
  entity_ids_.emplace(name, id);
  entity_names_.push_back(name);
  return id;
}

RelationId Vocab::intern_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  if (frozen_) throw VocabError("unknown relation '" + name + "' in frozen vocabulary");
  const RelationId id = static_cast<RelationId>(relation_names_.size());
  relation_ids_.emplace(name, id);
  relation_names_.push_back(name);
  return id;
}

EntityId Vocab::entity_id(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) throw VocabError("unknown entity '" + name + "'");
  return it->second;
}

RelationId Vocab::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) throw VocabError("unknown relation '" + name + "'");
  return it->second;
}

const std::string& Vocab::entity_name(EntityId id) const {
  if (id < 0 || id >= num_entities())
    throw IndexError("entity id " + std::to_string(id) + " out of range");
  return entity_names_[static_cast<size_t>(id)];
}

std::string Vocab::relation_name(RelationId id) const {
  if (id < 0 || id >= num_relations())
    throw IndexError("relation id " + std::to_string(id) + " out of range");
  const int64_t r = num_base_relations();
  if (id < r) return relation_names_[static_cast<size_t>(id)];
  return "inv:" + relation_names_[static_cast<size_t>(id - r)];
}

RelationId Vocab::reciprocal(RelationId r) const {
  const int64_t n = num_relations();
  if (r < 0 || r >= n) throw IndexError("relation id " + std::to_string(r) + " out of range");
  return static_cast<RelationId>((r + num_base_relations()) % n);
}

bool Vocab::is_reciprocal_id(RelationId r) const {
  if (r < 0 || r >= num_relations())
    throw IndexError("relation id " + std::to_string(r) + " out of range");
  return r >= num_base_relations();
}

RelationId Vocab::base_relation(RelationId r) const {
  return is_reciprocal_id(r) ? static_cast<RelationId>(r - num_base_relations()) : r;
}

namespace {

struct TripleKeyHash {
  size_t operator()(const std::array<int32_t, 3>& k) const {
    uint64_t h = splitmix64(static_cast<uint32_t>(k[0]));
    h = splitmix64(h ^ static_cast<uint32_t>(k[1]));
    h = splitmix64(h ^ static_cast<uint32_t>(k[2]));
    return static_cast<size_t>(h);
  }
};

}  // namespace

std::vector<Triple> load_triples(const std::string& path, Vocab& vocab, VocabMode mode) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file '" + path + "'");

  std::vector<Triple> triples;
  std::unordered_set<std::array<int32_t, 3>, TripleKeyHash> seen;
  std::string line;
  int64_t line_no = 0;
  int64_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 3 tab-separated fields");
    const std::string s = line.substr(0, t1);
    const std::string r = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string o = line.substr(t2 + 1);
    if (s.empty() || r.empty() || o.empty())
      throw ParseError(path + ":" + std::to_string(line_no) + ": empty field");

    Triple t;
    try {
      if (mode == VocabMode::Build && !vocab.frozen()) {
        t.subject = vocab.intern_entity(s);
        t.predicate = vocab.intern_relation(r);
        t.object = vocab.intern_entity(o);
      } else {
        t.subject = vocab.entity_id(s);
        t.predicate = vocab.relation_id(r);
        t.object = vocab.entity_id(o);
      }
    } catch (const VocabError& e) {
      throw VocabError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert({t.subject, t.predicate, t.object}).second) {
      ++duplicates;
      continue;
    }
    triples.push_back(t);
  }
  if (duplicates > 0)
    std::cerr << "warning: dropped " << duplicates << " duplicate triple(s) in " << path << "\n";
  return triples;
}

NeighborIndex::NeighborIndex(const std::vector<Triple>& train, const Vocab& vocab) {
  const int64_t n = vocab.num_entities();
  for (const Triple& t : train) {
    if (t.subject < 0 || t.subject >= n || t.object < 0 || t.object >= n)
      throw IndexError("triple entity id out of vocabulary range");
    if (t.predicate < 0 || t.predicate >= vocab.num_base_relations())
      throw IndexError("triple relation id out of base range");
  }
  std::vector<int64_t> counts(static_cast<size_t>(n), 0);
  for (const Triple& t : train) {
    ++counts[static_cast<size_t>(t.subject)];
    ++counts[static_cast<size_t>(t.object)];
  }
  offsets_.assign(static_cast<size_t>(n) + 1, 0);
  for (int64_t e = 0; e < n; ++e)
    offsets_[static_cast<size_t>(e) + 1] = offsets_[static_cast<size_t>(e)] + counts[static_cast<size_t>(e)];
  flat_.resize(static_cast<size_t>(offsets_.back()));
  std::vector<int64_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const Triple& t : train) {
    flat_[static_cast<size_t>(cursor[static_cast<size_t>(t.subject)]++)] = {t.predicate, t.object};
    flat_[static_cast<size_t>(cursor[static_cast<size_t>(t.object)]++)] = {
        vocab.reciprocal(t.predicate), t.subject};
  }
}

std::span<const NeighborPair> NeighborIndex::neighbors_of(EntityId e) const {
  if (e < 0 || e >= num_entities())
    throw IndexError("entity id " + std::to_string(e) + " out of range");
  return {flat_.data() + offsets_[static_cast<size_t>(e)],
          static_cast<size_t>(offsets_[static_cast<size_t>(e) + 1] - offsets_[static_cast<size_t>(e)])};
}

int64_t NeighborIndex::hop_distance(EntityId a, EntityId b) const {
  if (a < 0 || a >= num_entities() || b < 0 || b >= num_entities())
    throw IndexError("entity id out of range");
  if (a == b) return 0;
  std::vector<int32_t> dist(static_cast<size_t>(num_entities()), -1);
  std::deque<EntityId> queue{a};
  dist[static_cast<size_t>(a)] = 0;
  while (!queue.empty()) {
    const EntityId cur = queue.front();
    queue.pop_front();
    const int32_t d = dist[static_cast<size_t>(cur)];
    for (const NeighborPair& p : neighbors_of(cur)) {
      if (dist[static_cast<size_t>(p.entity)] != -1) continue;
      if (p.entity == b) return d + 1;
      dist[static_cast<size_t>(p.entity)] = d + 1;
      queue.push_back(p.entity);
    }
  }
  return kUnreachable;
}

std::vector<int32_t> NeighborIndex::hops_from(EntityId a) const {
  if (a < 0 || a >= num_entities()) throw IndexError("entity id out of range");
  std::vector<int32_t> dist(static_cast<size_t>(num_entities()), -1);
  std::deque<EntityId> queue{a};
  dist[static_cast<size_t>(a)] = 0;
  while (!queue.empty()) {
    const EntityId cur = queue.front();
    queue.pop_front();
    const int32_t d = dist[static_cast<size_t>(cur)];
    for (const NeighborPair& p : neighbors_of(cur)) {
      if (dist[static_cast<size_t>(p.entity)] != -1) continue;
      dist[static_cast<size_t>(p.entity)] = d + 1;
      queue.push_back(p.entity);
    }
  }
  return dist;
}

namespace {

uint64_t filter_key(EntityId src, RelationId rel) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(src)) << 32) |
         static_cast<uint32_t>(rel);
}

}  // namespace

FilterIndex::FilterIndex(const Vocab& vocab, const std::vector<const std::vector<Triple>*>& splits)
    : num_entities_(vocab.num_entities()) {
  for (const auto* split : splits) {
    for (const Triple& t : *split) {
      targets_[filter_key(t.subject, t.predicate)].push_back(t.object);
      targets_[filter_key(t.object, vocab.reciprocal(t.predicate))].push_back(t.subject);
    }
  }
  for (auto& [key, v] : targets_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

std::span<const EntityId> FilterIndex::known_targets(EntityId src, RelationId rel) const {
  auto it = targets_.find(filter_key(src, rel));
  if (it == targets_.end()) return {};
  return {it->second.data(), it->second.size()};
}

bool FilterIndex::contains(EntityId src, RelationId rel, EntityId target) const {
  const auto known = known_targets(src, rel);
  return std::binary_search(known.begin(), known.end(), target);
}

std::vector<uint8_t> FilterIndex::filtered_candidates(EntityId src, RelationId rel,
                                                      EntityId gold) const {
  if (gold < 0 || gold >= num_entities_)
    throw IndexError("gold entity id " + std::to_string(gold) + " out of range");
  std::vector<uint8_t> mask(static_cast<size_t>(num_entities_), 1);
  for (const EntityId t : known_targets(src, rel)) mask[static_cast<size_t>(t)] = 0;
  mask[static_cast<size_t>(gold)] = 1;
  return mask;
}

std::string DatasetStats::to_json() const {
  nlohmann::ordered_json j;
  j["entities"] = entities;
  j["relations"] = relations;
  j["triples"] = triples;
  j["avg_degree"] = avg_degree;
  return j.dump();
}

DatasetStats dataset_stats(const Vocab& vocab, const std::vector<Triple>& train,
                           const std::vector<Triple>& valid, const std::vector<Triple>& test) {
  DatasetStats s;
  s.entities = vocab.num_entities();
  s.relations = vocab.num_base_relations();
  s.triples = static_cast<int64_t>(train.size() + valid.size() + test.size());
  s.avg_degree = s.entities > 0
                     ? 2.0 * static_cast<double>(s.triples) / static_cast<double>(s.entities)
                     : 0.0;
  return s;
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.train = load_triples(dir + "/train.txt", d.vocab, VocabMode::Build);
  d.valid = load_triples(dir + "/valid.txt", d.vocab, VocabMode::Build);
  d.test = load_triples(dir + "/test.txt", d.vocab, VocabMode::Build);
  d.vocab.freeze();
  return d;
}

}  // namespace hitter
