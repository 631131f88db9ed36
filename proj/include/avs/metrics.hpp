#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace avs {

struct RankedItem {
  std::string video_id;
  double score = 0.0;
};

/// Videos for one query, best first. Scores are non-increasing.
struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;
};

using RelevantSet = std::unordered_set<std::string>;
using Qrels = std::map<std::string, RelevantSet>;

/// Sorts descending by score, ties by ascending id, and keeps the first
/// `top_n` (0 keeps everything).
RankedList rank_by_scores(std::string query_id, std::span<const std::string> ids,
                          std::span<const double> scores, std::size_t top_n = 0);

/// True iff a relevant item appears in the top k. Throws on k == 0 or an
/// empty relevant set.
bool hit_at_k(const RankedList& ranked, const RelevantSet& relevant, std::size_t k);

/// 1-based rank of the first relevant item; size()+1 when none was retrieved.
std::size_t first_relevant_rank(const RankedList& ranked, const RelevantSet& relevant);

/// Lower middle for even counts.
std::size_t median_rank(std::vector<std::size_t> first_rel_ranks);

/// Non-interpolated AP; relevant items missing from the list contribute 0.
double average_precision(const RankedList& ranked, const RelevantSet& relevant);

double mean_ap(std::span<const double> per_query);

struct Judgment {
  std::string video_id;
  int relevance = 0;
  std::string stratum;
  double sampling_rate = 1.0;
};

/// Sampled relevance judgments per query.
class JudgmentPool {
 public:
  /// Throws DataError on a repeated video, relevance outside {0,1} or a rate outside (0,1].
  void add(const std::string& query_id, Judgment judgment);

  bool contains(const std::string& query_id) const { return pools_.contains(query_id); }
  const std::vector<Judgment>& judgments(const std::string& query_id) const;
  std::vector<std::string> queries() const;
  bool empty() const { return pools_.empty(); }

  /// Relevant (relevance 1) video ids per query.
  Qrels relevant_sets() const;

  /// `query_id<TAB>stratum_id<TAB>video_id<TAB>relevance<TAB>sampling_rate`.
  static JudgmentPool read(std::istream& in);
  static JudgmentPool load(const std::string& path);
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::vector<Judgment>> pools_;
  std::map<std::string, std::unordered_set<std::string>> seen_;
};

inline constexpr double kInfApEpsilon = 1e-5;

/// Inferred AP from a uniformly sampled pool (one sampling rate per query).
/// Returns nullopt when the sample has no relevant item.
std::optional<double> inferred_ap(const RankedList& ranked, const JudgmentPool& pool,
                                  double epsilon = kInfApEpsilon);

struct QueryMetrics {
  std::string query_id;
  double ap = 0.0;
  std::optional<double> infap;
  std::size_t first_rel_rank = 0;
  bool hit1 = false, hit5 = false, hit10 = false;
};

struct EvaluationSummary {
  std::vector<QueryMetrics> queries;
  double r1 = 0, r5 = 0, r10 = 0;  // percentages
  std::size_t median_rank = 0;
  double map = 0;
  std::optional<double> mean_infap;
  std::size_t excluded = 0;  // queries without relevant items
};

/// Queries without relevant items are excluded from every average and counted.
EvaluationSummary evaluate(std::span<const RankedList> runs, const Qrels& qrels,
                           const JudgmentPool* pool = nullptr);

/// `query=<id> ap=... infap=... first_rel_rank=...` per query, then one `all`
/// line with the aggregates.
void write_report(std::ostream& out, const EvaluationSummary& summary);

/// `query_id<TAB>rank<TAB>video_id<TAB>score`, ranks 1-based.
void write_run(std::ostream& out, std::span<const RankedList> runs);
std::vector<RankedList> read_run(std::istream& in);
std::vector<RankedList> load_run(const std::string& path);

}  // namespace avs
