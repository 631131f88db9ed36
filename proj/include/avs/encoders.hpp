#pragma once

#include "avs/common.hpp"
#include "avs/feature_store.hpp"
#include "avs/random.hpp"
#include "avs/textproc.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace avs {

inline constexpr std::size_t kW2vDim = 500;
inline constexpr std::size_t kGruHidden = 1024;
inline constexpr std::size_t kBertDim = 768;

/// Frozen word vectors. A lookup miss is reported as nullopt, never as zeros.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> words, Matrix<float> vectors);

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<std::size_t> find(std::string_view word) const;
  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }

  /// Classic text format: `count dim` header, then `word v1 ... v_dim`.
  static EmbeddingTable load(const std::string& path);
  static EmbeddingTable read(std::istream& in);
  void write(std::ostream& out) const;

 private:
  std::vector<std::string> words_;
  Matrix<float> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Mean of the in-table word vectors. Misses are skipped and excluded from the
/// denominator; a sentence with no hits yields zeros and a warning.
RowVector<float> encode_w2v(const TokenSeq& sentence, const EmbeddingTable& table);

/// Offline-pooled sentence vectors (for example transformer token embeddings)
/// keyed by sentence id.
class PrecomputedStore {
 public:
  PrecomputedStore() = default;
  explicit PrecomputedStore(FeatureStore vectors, std::map<std::string, std::string> metadata = {});

  std::size_t dim() const { return vectors_.dim(); }
  const FeatureStore& vectors() const { return vectors_; }
  /// Producer label, pooling label, block index etc. Informational only.
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Reads the feature container at `path` plus an optional `path.meta`
  /// sidecar of `key=value` lines.
  static PrecomputedStore load(const std::string& path);

 private:
  FeatureStore vectors_;
  std::map<std::string, std::string> metadata_;
};

/// Returns the stored vector unmodified; throws DataError naming a missing id.
RowVector<float> encode_precomputed(std::string_view sentence_id, const PrecomputedStore& store);

/// One GRU direction, including its own input embedding. Row-vector
/// convention: gate pre-activations are x*W + h*U + b.
template <typename T>
struct GruParams {
  Matrix<T> embedding;  // vocab x d_emb
  Matrix<T> w_z, w_r, w_h;  // d_emb x H
  Matrix<T> u_z, u_r, u_h;  // H x H
  RowVector<T> b_z, b_r, b_h;

  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.rows()); }
  std::size_t input_size() const { return static_cast<std::size_t>(embedding.cols()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(u_z.rows()); }

  /// Weights and biases except the embedding.
  std::size_t recurrent_parameter_count() const;

  static GruParams zeros(std::size_t vocab, std::size_t input, std::size_t hidden);

  /// Validates mutual consistency and finiteness; throws DataError.
  void check() const;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("embedding", embedding);
    fn("w_z", w_z); fn("w_r", w_r); fn("w_h", w_h);
    fn("u_z", u_z); fn("u_r", u_r); fn("u_h", u_h);
    fn("b_z", b_z); fn("b_r", b_r); fn("b_h", b_h);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn("embedding", embedding);
    fn("w_z", w_z); fn("w_r", w_r); fn("w_h", w_h);
    fn("u_z", u_z); fn("u_r", u_r); fn("u_h", u_h);
    fn("b_z", b_z); fn("b_r", b_r); fn("b_h", b_h);
  }

  template <typename U>
  GruParams<U> cast() const {
    return {embedding.template cast<U>(), w_z.template cast<U>(), w_r.template cast<U>(),
            w_h.template cast<U>(),       u_z.template cast<U>(), u_r.template cast<U>(),
            u_h.template cast<U>(),       b_z.template cast<U>(), b_r.template cast<U>(),
            b_h.template cast<U>()};
  }
};

/// Uniform(-1/sqrt(H), 1/sqrt(H)) gates; embedding rows copied from `table`
/// where the word exists and dimensions agree, uniform(-0.1, 0.1) otherwise.
GruParams<float> init_gru(const Vocabulary& vocab, std::size_t input_size, std::size_t hidden,
                          const EmbeddingTable* table, Rng& rng);

/// h = (1 - z) * h_prev + z * candidate. Throws NumericalError on non-finite output.
template <typename T>
RowVector<T> gru_step(const RowVector<T>& x, const RowVector<T>& h_prev, const GruParams<T>& p);

/// Per-step activations kept for backpropagation.
template <typename T>
struct GruTrace {
  std::vector<std::size_t> token_ids;
  Matrix<T> z, r, candidate;  // l x H
  Matrix<T> hidden;           // (l + 1) x H, row 0 is h_0 = 0
  RowVector<T> output;        // mean of hidden rows 1..l
};

/// Runs the recurrence over token ids and mean-pools the hidden states.
template <typename T>
GruTrace<T> gru_forward(std::span<const std::size_t> token_ids, const GruParams<T>& p);

/// Accumulates gradients of `d_output` (w.r.t. the pooled output) into `grad`.
template <typename T>
void gru_backward(const GruTrace<T>& trace, const RowVector<T>& d_output, const GruParams<T>& p,
                  GruParams<T>& grad);

/// Throws DataError on an empty sentence.
template <typename T>
RowVector<T> encode_gru(const TokenSeq& sentence, const GruParams<T>& p, const Vocabulary& vocab);

/// Forward states over the sentence concatenated with backward states over
/// its reversal, mean-pooled: output size 2H.
template <typename T>
RowVector<T> encode_bigru(const TokenSeq& sentence, const GruParams<T>& forward,
                          const GruParams<T>& backward, const Vocabulary& vocab);

}  // namespace avs
