#pragma once

#include "avs/encoders.hpp"
#include "avs/feature_store.hpp"
#include "avs/loss.hpp"
#include "avs/metrics.hpp"
#include "avs/textproc.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace avs {

struct Caption {
  std::string sentence_id;
  std::string video_id;
  std::string text;
  TokenSeq tokens;
};

class CaptionSet {
 public:
  CaptionSet() = default;
  /// Throws DataError on a duplicate sentence id.
  explicit CaptionSet(std::vector<Caption> records);

  std::size_t size() const { return records_.size(); }
  const Caption& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<Caption>& records() const { return records_; }
  /// Sentence indices per video id.
  const std::unordered_map<std::string, std::vector<std::size_t>>& by_video() const { return by_video_; }
  /// Video ids in order of first appearance.
  const std::vector<std::string>& video_ids() const { return video_order_; }

  Sentence sentence(std::size_t i) const;
  std::vector<Sentence> sentences() const;
  std::vector<TokenSeq> corpus() const;
  /// Every caption's relevant set is its own video.
  Qrels qrels() const;

  /// Throws DataError when a caption points at a video without features.
  void check_against(const FeatureStore& features) const;

  /// `sentence_id<TAB>video_id<TAB>text`; CRLF tolerated.
  static CaptionSet read(std::istream& in);
  static CaptionSet load(const std::string& path);
  void write(std::ostream& out) const;

 private:
  std::vector<Caption> records_;
  std::unordered_map<std::string, std::size_t> by_sentence_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_video_;
  std::vector<std::string> video_order_;
};

/// Caption indices of one mini-batch.
struct Batch {
  std::vector<std::size_t> items;
};

/// Shuffle keyed by (seed, epoch), consecutive chunks, a final chunk kept only
/// if it has at least two pairs.
std::vector<Batch> make_batches(const CaptionSet& captions, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch);

template <typename T>
BatchData<T> resolve_batch(const Batch& batch, const CaptionSet& captions,
                           const FeatureStore& features);

/// Submatrix of the given videos, in order.
FeatureStore select_videos(const FeatureStore& features, const std::vector<std::string>& ids);

EmbeddingTable load_embedding_table(const std::string& path);
JudgmentPool load_judgments(const std::string& path);

/// Reads queries: one sentence per line, or `id<TAB>sentence`. Lines without
/// an id are numbered from 1.
std::vector<Sentence> read_queries(std::istream& in);

struct FixtureOptions {
  std::size_t pairs = 32;
  std::size_t video_dim = 64;
  std::size_t w2v_dim = kW2vDim;
  std::size_t bert_dim = kBertDim;
  std::uint64_t seed = 0;
};

/// Synthetic dataset: orthonormal video features, template captions with
/// distinct content words, random word vectors and mean-pooled sentence
/// vectors, and complete judgments.
struct Fixture {
  FeatureStore features;
  CaptionSet captions;
  EmbeddingTable w2v;
  PrecomputedStore precomputed;
  JudgmentPool judgments;
};

Fixture make_fixture(const FixtureOptions& options);

/// Writes features.vfea, captions.tsv, embeddings.txt, precomputed.vfea(.meta),
/// queries.txt and qrels.tsv into `dir`.
void write_fixture(const Fixture& fixture, const std::string& dir);

}  // namespace avs
