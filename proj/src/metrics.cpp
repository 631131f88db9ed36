#include "avs/metrics.hpp"

#include "avs/common.hpp"

#include <algorithm>
#include <unordered_map>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace avs {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RankedList rank_by_scores(std::string query_id, std::span<const std::string> ids,
                          std::span<const double> scores, std::size_t top_n) {
  if (ids.size() != scores.size()) throw DataError("rank_by_scores: ids and scores differ in size");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t keep = top_n == 0 ? order.size() : std::min(top_n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    better);
  RankedList out{std::move(query_id), {}};
  out.items.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.items.push_back({ids[order[i]], scores[order[i]]});
  return out;
}

bool hit_at_k(const RankedList& ranked, const RelevantSet& relevant, std::size_t k) {
  if (k == 0) throw UsageError("recall cutoff k must be at least 1");
  if (relevant.empty()) throw DataError("query '" + ranked.query_id + "' has no relevant items");
  const std::size_t depth = std::min(k, ranked.items.size());
  for (std::size_t i = 0; i < depth; ++i) {
    if (relevant.contains(ranked.items[i].video_id)) return true;
  }
  return false;
}

std::size_t first_relevant_rank(const RankedList& ranked, const RelevantSet& relevant) {
  for (std::size_t i = 0; i < ranked.items.size(); ++i) {
    if (relevant.contains(ranked.items[i].video_id)) return i + 1;
  }
  return ranked.items.size() + 1;
}

std::size_t median_rank(std::vector<std::size_t> ranks) {
  if (ranks.empty()) throw DataError("median rank of an empty list");
  std::sort(ranks.begin(), ranks.end());
  return ranks[(ranks.size() - 1) / 2];
}

double average_precision(const RankedList& ranked, const RelevantSet& relevant) {
  if (relevant.empty()) throw DataError("query '" + ranked.query_id + "' has no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.items.size(); ++i) {
    if (relevant.contains(ranked.items[i].video_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double mean_ap(std::span<const double> per_query) {
  if (per_query.empty()) throw DataError("mean AP over zero queries");
  return std::accumulate(per_query.begin(), per_query.end(), 0.0) /
         static_cast<double>(per_query.size());
}

void JudgmentPool::add(const std::string& query_id, Judgment judgment) {
  if (!(judgment.sampling_rate > 0.0 && judgment.sampling_rate <= 1.0)) {
    throw DataError("sampling rate for query '" + query_id + "' must lie in (0,1]");
  }
  if (judgment.relevance != 0 && judgment.relevance != 1) {
    throw DataError("relevance for query '" + query_id + "' must be 0 or 1");
  }
  if (!seen_[query_id].insert(judgment.video_id).second) {
    throw DataError("video '" + judgment.video_id + "' judged twice for query '" + query_id + "'");
  }
  pools_[query_id].push_back(std::move(judgment));
}

const std::vector<Judgment>& JudgmentPool::judgments(const std::string& query_id) const {
  auto it = pools_.find(query_id);
  if (it == pools_.end()) throw DataError("query '" + query_id + "' is not in the judgment pool");
  return it->second;
}

std::vector<std::string> JudgmentPool::queries() const {
  std::vector<std::string> out;
  for (const auto& [q, _] : pools_) out.push_back(q);
  return out;
}

Qrels JudgmentPool::relevant_sets() const {
  Qrels out;
  for (const auto& [q, records] : pools_) {
    auto& rel = out[q];
    for (const auto& j : records) {
      if (j.relevance == 1) rel.insert(j.video_id);
    }
  }
  return out;
}

JudgmentPool JudgmentPool::read(std::istream& in) {
  JudgmentPool pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      throw DataError("judgment line " + std::to_string(line_no) + ": expected 5 fields");
    }
    Judgment j;
    j.stratum = f[1];
    j.video_id = f[2];
    try {
      j.relevance = std::stoi(f[3]);
      j.sampling_rate = std::stod(f[4]);
    } catch (const std::exception&) {
      throw DataError("judgment line " + std::to_string(line_no) + ": bad number");
    }
    try {
      pool.add(f[0], std::move(j));
    } catch (const DataError& e) {
      throw DataError("judgment line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pool;
}

JudgmentPool JudgmentPool::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open judgments " + path);
  return read(in);
}

void JudgmentPool::write(std::ostream& out) const {
  for (const auto& [q, records] : pools_) {
    for (const auto& j : records) {
      out << q << '\t' << j.stratum << '\t' << j.video_id << '\t' << j.relevance << '\t'
          << j.sampling_rate << '\n';
    }
  }
}

std::optional<double> inferred_ap(const RankedList& ranked, const JudgmentPool& pool,
                                  double epsilon) {
  const auto& records = pool.judgments(ranked.query_id);
  if (records.empty()) throw DataError("query '" + ranked.query_id + "' has an empty pool");
  const double p = records.front().sampling_rate;
  std::unordered_map<std::string, int> judged;
  std::size_t sampled_relevant = 0;
  for (const auto& j : records) {
    if (!(j.sampling_rate > 0.0)) throw DataError("sampling rate must be positive");
    if (j.sampling_rate != p) {
      throw DataError("query '" + ranked.query_id +
                      "' mixes sampling rates; only single-rate pools are supported");
    }
    judged.emplace(j.video_id, j.relevance);
    if (j.relevance == 1) ++sampled_relevant;
  }
  if (sampled_relevant == 0) return std::nullopt;

  double sum = 0.0;
  double rel_above = 0.0;
  double nonrel_above = 0.0;
  for (std::size_t i = 0; i < ranked.items.size(); ++i) {
    const auto it = judged.find(ranked.items[i].video_id);
    if (it == judged.end()) continue;
    if (it->second == 1) {
      const double k = static_cast<double>(i + 1);
      double expected = 1.0;
      if (i > 0) {
        const double judged_above = (rel_above + nonrel_above) / p;
        expected = 1.0 / k + ((k - 1.0) / k) * (judged_above / (k - 1.0)) *
                                 ((rel_above + epsilon) / (rel_above + nonrel_above + 2.0 * epsilon));
      }
      sum += expected;
      rel_above += 1.0;
    } else {
      nonrel_above += 1.0;
    }
  }
  const double estimated_relevant = static_cast<double>(sampled_relevant) / p;
  return (1.0 / estimated_relevant) * (1.0 / p) * sum;
}

EvaluationSummary evaluate(std::span<const RankedList> runs, const Qrels& qrels,
                           const JudgmentPool* pool) {
  EvaluationSummary summary;
  std::vector<double> aps;
  std::vector<double> infaps;
  std::vector<std::size_t> ranks;
  std::size_t h1 = 0, h5 = 0, h10 = 0;
  for (const auto& ranked : runs) {
    auto it = qrels.find(ranked.query_id);
    if (it == qrels.end() || it->second.empty()) {
      ++summary.excluded;
      continue;
    }
    QueryMetrics m;
    m.query_id = ranked.query_id;
    m.ap = average_precision(ranked, it->second);
    m.first_rel_rank = first_relevant_rank(ranked, it->second);
    m.hit1 = hit_at_k(ranked, it->second, 1);
    m.hit5 = hit_at_k(ranked, it->second, 5);
    m.hit10 = hit_at_k(ranked, it->second, 10);
    if (pool != nullptr && pool->contains(ranked.query_id)) {
      m.infap = inferred_ap(ranked, *pool);
      if (m.infap) infaps.push_back(*m.infap);
    }
    aps.push_back(m.ap);
    ranks.push_back(m.first_rel_rank);
    h1 += m.hit1;
    h5 += m.hit5;
    h10 += m.hit10;
    summary.queries.push_back(std::move(m));
  }
  if (summary.excluded > 0) {
    warn(std::to_string(summary.excluded) + " queries without relevant items excluded");
  }
  if (aps.empty()) throw DataError("no query with relevant items to evaluate");
  const double n = static_cast<double>(aps.size());
  summary.r1 = 100.0 * static_cast<double>(h1) / n;
  summary.r5 = 100.0 * static_cast<double>(h5) / n;
  summary.r10 = 100.0 * static_cast<double>(h10) / n;
  summary.median_rank = median_rank(ranks);
  summary.map = mean_ap(aps);
  if (!infaps.empty()) summary.mean_infap = mean_ap(infaps);
  return summary;
}

void write_report(std::ostream& out, const EvaluationSummary& s) {
  for (const auto& q : s.queries) {
    out << "query=" << q.query_id << " ap=" << fmt(q.ap)
        << " infap=" << (q.infap ? fmt(*q.infap) : std::string("na"))
        << " first_rel_rank=" << q.first_rel_rank << '\n';
  }
  out << "all queries=" << s.queries.size() << " excluded=" << s.excluded << " R@1=" << fmt(s.r1)
      << " R@5=" << fmt(s.r5) << " R@10=" << fmt(s.r10) << " MedR=" << s.median_rank
      << " mAP=" << fmt(s.map)
      << " infAP=" << (s.mean_infap ? fmt(*s.mean_infap) : std::string("na")) << '\n';
}

void write_run(std::ostream& out, std::span<const RankedList> runs) {
  char score[32];
  for (const auto& ranked : runs) {
    for (std::size_t i = 0; i < ranked.items.size(); ++i) {
      std::snprintf(score, sizeof score, "%.9g", ranked.items[i].score);
      out << ranked.query_id << '\t' << (i + 1) << '\t' << ranked.items[i].video_id << '\t'
          << score << '\n';
    }
  }
}

std::vector<RankedList> read_run(std::istream& in) {
  std::vector<RankedList> runs;
  std::map<std::string, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 4) throw DataError("run line " + std::to_string(line_no) + ": expected 4 fields");
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(f[1]);
      score = std::stod(f[3]);
    } catch (const std::exception&) {
      throw DataError("run line " + std::to_string(line_no) + ": bad number");
    }
    auto [it, inserted] = slot.try_emplace(f[0], runs.size());
    if (inserted) runs.push_back({f[0], {}});
    auto& items = runs[it->second].items;
    if (rank != items.size() + 1) {
      throw DataError("run line " + std::to_string(line_no) + ": ranks must be consecutive from 1");
    }
    if (!items.empty() && score > items.back().score) {
      throw DataError("run line " + std::to_string(line_no) + ": scores must be non-increasing");
    }
    items.push_back({f[2], score});
  }
  return runs;
}

std::vector<RankedList> load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run file " + path);
  return read_run(in);
}

}  // namespace avs
