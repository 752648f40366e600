#include "hitter/eval.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hitter {

std::string RankingReport::to_json() const {
  nlohmann::ordered_json j;
  j["mrr"] = mrr;
  j["mr"] = mr;
  j["hits1"] = hits1;
  j["hits3"] = hits3;
  j["hits10"] = hits10;
  j["queries"] = queries;
  return j.dump();
}

RankingReport summarize_ranks(const std::vector<double>& ranks) {
  RankingReport rep;
  rep.queries = static_cast<int64_t>(ranks.size());
  if (ranks.empty()) return rep;
  double mrr = 0.0, mr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  for (double r : ranks) {
    if (r < 1.0) throw ConfigError("summarize_ranks: rank below 1");
    mrr += 1.0 / r;
    mr += r;
    h1 += r <= 1.0 ? 1.0 : 0.0;
    h3 += r <= 3.0 ? 1.0 : 0.0;
    h10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  rep.mrr = mrr / n;
  rep.mr = mr / n;
  rep.hits1 = h1 / n;
  rep.hits3 = h3 / n;
  rep.hits10 = h10 / n;
  return rep;
}

std::vector<BreakdownRow> breakdown_by_relation(const std::vector<QueryRecord>& records,
                                                const Vocab& vocab) {
  struct Agg {
    int64_t count = 0;
    double mrr_sum = 0.0;
  };
  std::map<std::string, Agg> groups;  // ordered for deterministic name ties
  for (const QueryRecord& r : records) {
    const std::string key = vocab.relation_name(vocab.base_relation(r.predicate));
    Agg& g = groups[key];
    ++g.count;
    g.mrr_sum += 1.0 / r.filtered_rank;
  }
  std::vector<BreakdownRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, g] : groups)
    rows.push_back({key, g.count, g.mrr_sum / static_cast<double>(g.count)});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BreakdownRow& a, const BreakdownRow& b) { return a.count > b.count; });
  return rows;
}

std::vector<BreakdownRow> mrr_by_hops(const std::vector<QueryRecord>& records,
                                      const NeighborIndex& train_index) {
  struct Agg {
    int64_t count = 0;
    double mrr_sum = 0.0;
  };
  std::map<std::string, Agg> groups;
  // one BFS per distinct source, shared across its queries
  std::unordered_map<EntityId, std::vector<int32_t>> hops_cache;
  for (const QueryRecord& r : records) {
    auto it = hops_cache.find(r.src);
    if (it == hops_cache.end()) it = hops_cache.emplace(r.src, train_index.hops_from(r.src)).first;
    const int64_t h = it->second[static_cast<size_t>(r.gold)];
    std::string key;
    if (h == NeighborIndex::kUnreachable)
      key = "unreachable";
    else if (h >= 5)
      key = "5+";
    else
      key = std::to_string(h);
    Agg& g = groups[key];
    ++g.count;
    g.mrr_sum += 1.0 / r.filtered_rank;
  }
  // fixed display order: 0,1,...,4,5+,unreachable (0 only for self-loop queries)
  const char* order[] = {"0", "1", "2", "3", "4", "5+", "unreachable"};
  std::vector<BreakdownRow> rows;
  for (const char* key : order) {
    auto it = groups.find(key);
    if (it == groups.end()) continue;
    rows.push_back({key, it->second.count, it->second.mrr_sum / static_cast<double>(it->second.count)});
  }
  return rows;
}

std::string breakdown_csv(const std::vector<BreakdownRow>& rows) {
  std::ostringstream out;
  out << "group,count,mrr\n";
  for (const BreakdownRow& r : rows) out << r.key << "," << r.count << "," << r.mrr << "\n";
  return out.str();
}

std::string query_records_csv(const std::vector<QueryRecord>& records) {
  std::ostringstream out;
  out << "query,src,predicate,gold,filtered_rank,raw_rank\n";
  for (size_t i = 0; i < records.size(); ++i) {
    const QueryRecord& r = records[i];
    out << i << "," << r.src << "," << r.predicate << "," << r.gold << "," << r.filtered_rank
        << "," << r.raw_rank << "\n";
  }
  return out.str();
}

}  // namespace hitter
