#pragma once

#include "avs/common.hpp"
#include "avs/encoders.hpp"
#include "avs/feature_store.hpp"
#include "avs/metrics.hpp"
#include "avs/random.hpp"
#include "avs/textproc.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avs {

enum class EncoderKind { kBow, kW2v, kGru, kBiGru, kPrecomputed };

/// kSea: one common space per encoder, similarities averaged.
/// kConcat: one space over the concatenated encoder outputs.
/// kTransformedConcat: each encoder output first goes through its own
///   affine+tanh to `transform_dim`, then as kConcat.
/// kModelAverage: independently trained single-encoder spaces, averaged.
enum class FusionMode { kSea, kConcat, kTransformedConcat, kModelAverage };

std::string_view encoder_name(EncoderKind kind);
EncoderKind parse_encoder(std::string_view name);
/// Comma separated, e.g. "bow,w2v,gru".
std::vector<EncoderKind> parse_encoder_list(std::string_view names);
std::string join_encoders(std::span<const EncoderKind> kinds);
std::string_view fusion_name(FusionMode mode);
FusionMode parse_fusion(std::string_view name);

inline constexpr std::size_t kDefaultSpaceDim = 2048;
inline constexpr std::size_t kTransformDim = 2048;

/// Frozen text-side inputs shared by every copy of a model.
struct TextResources {
  std::shared_ptr<const Vocabulary> bow_vocab;
  std::shared_ptr<const Vocabulary> seq_vocab;
  std::shared_ptr<const EmbeddingTable> w2v;
  std::shared_ptr<const PrecomputedStore> precomputed;
};

/// A query or caption. The id keys precomputed sentence vectors.
struct Sentence {
  std::string id;
  TokenSeq tokens;
};

template <typename T>
struct AffineProjection {
  Matrix<T> weight;  // d_in x d_out
  RowVector<T> bias;

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weight.cols()); }
};

/// tanh(x * W + b). Throws DataError on a dimension mismatch.
template <typename T>
RowVector<T> project(const RowVector<T>& x, const AffineProjection<T>& p);

/// Throws NumericalError on a zero-norm input, DataError on mismatched sizes.
template <typename T>
T cosine_sim(const RowVector<T>& a, const RowVector<T>& b);

/// One common space. The text projection reads the features listed in
/// `inputs`, stacked in that order along the weight rows.
template <typename T>
struct SubNetwork {
  std::vector<std::size_t> inputs;
  AffineProjection<T> text;
  AffineProjection<T> video;
};

struct ModelConfig {
  FusionMode fusion = FusionMode::kSea;
  std::vector<EncoderKind> encoders;
  std::size_t video_dim = 4096;
  std::size_t space_dim = kDefaultSpaceDim;
  std::size_t gru_hidden = kGruHidden;
  std::size_t gru_input = kW2vDim;
  std::size_t transform_dim = kTransformDim;
};

/// Everything trainable. Gradients use the same type.
template <typename T>
struct ModelParams {
  std::vector<std::vector<GruParams<T>>> recurrent;  // per encoder: 0, 1 or 2 directions
  std::vector<AffineProjection<T>> transforms;       // kTransformedConcat only
  std::vector<SubNetwork<T>> spaces;

  /// Visits tensors in the fixed order used by checkpoints and optimizers.
  template <typename Fn>
  void for_each_tensor(Fn&& fn);
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const;

  ModelParams zeros_like() const;
  std::size_t parameter_count() const;

  template <typename U>
  ModelParams<U> cast() const;
};

template <typename T>
class MultiSpaceModel {
 public:
  ModelConfig config;
  TextResources resources;
  ModelParams<T> params;

  /// Random initialization: GRU weights uniform(+-1/sqrt(H)), projections
  /// uniform(+-1/sqrt(d_in)) with zero biases. Draw order is encoders, then
  /// transforms, then spaces, so modes with the same layout draw alike.
  static MultiSpaceModel create(const ModelConfig& config, TextResources resources, Rng& rng);

  std::size_t num_spaces() const { return params.spaces.size(); }
  std::size_t encoder_dim(std::size_t encoder) const;
  /// Dimension of the features consumed by the spaces (after transforms).
  std::size_t feature_dim(std::size_t encoder) const;

  template <typename U>
  MultiSpaceModel<U> cast() const {
    return {config, resources, params.template cast<U>()};
  }
};

/// Per-encoder batch outputs. BoW stays sparse.
template <typename T>
struct EncoderOutput {
  bool sparse = false;
  SparseRows<T> sparse_rows;
  Matrix<T> dense;
  std::vector<std::vector<GruTrace<T>>> traces;  // [sentence][direction]
};

template <typename T>
struct SideActivations {
  std::vector<Matrix<T>> act;   // tanh outputs per space
  std::vector<Matrix<T>> unit;  // row-normalized
  std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> norm;
};

template <typename T>
struct TextForward {
  std::vector<EncoderOutput<T>> encoders;
  std::vector<Matrix<T>> transformed;
  SideActivations<T> side;
};

template <typename T>
struct VideoForward {
  Matrix<T> features;
  SideActivations<T> side;
};

template <typename T>
std::vector<EncoderOutput<T>> encode_sentences(const MultiSpaceModel<T>& model,
                                               std::span<const Sentence> sentences);

template <typename T>
TextForward<T> forward_text(const MultiSpaceModel<T>& model, std::span<const Sentence> sentences);

template <typename T>
VideoForward<T> forward_video(const MultiSpaceModel<T>& model, Matrix<T> features);

/// Cosine similarity matrix sentences x videos, one per space.
template <typename T>
std::vector<Matrix<T>> similarities(const TextForward<T>& text, const VideoForward<T>& video);

/// Equal-weight mean of the per-space matrices.
template <typename T>
Matrix<T> combine_similarities(std::span<const Matrix<T>> per_space);

/// Backpropagates d(loss)/d(similarity) per space into `grad`.
template <typename T>
void backward(const MultiSpaceModel<T>& model, const TextForward<T>& text,
              const VideoForward<T>& video, std::span<const Matrix<T>> d_sim,
              ModelParams<T>& grad);

/// Similarity in one space for one sentence-video pair.
template <typename T>
T cms_space(const MultiSpaceModel<T>& model, std::size_t space, const Sentence& sentence,
            const RowVector<T>& video);

/// Mean over spaces. Valid for kSea and kModelAverage.
template <typename T>
T cms_combined(const MultiSpaceModel<T>& model, const Sentence& sentence, const RowVector<T>& video);

/// Single-space similarity of the concatenation baselines.
template <typename T>
T baseline_forward(const MultiSpaceModel<T>& model, const Sentence& sentence,
                   const RowVector<T>& video);

/// Whatever similarity the model's fusion mode defines.
template <typename T>
T model_similarity(const MultiSpaceModel<T>& model, const Sentence& sentence,
                   const RowVector<T>& video);

/// Unweighted mean of each model's own similarity. Throws on an empty list.
template <typename T>
T model_average_sim(std::span<const MultiSpaceModel<T>> models, const Sentence& sentence,
                    const RowVector<T>& video);

/// Video embeddings of a collection, computed once and reused per query.
class VideoIndex {
 public:
  VideoIndex(const MultiSpaceModel<float>& model, const FeatureStore& collection);
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Matrix<float>>& units() const { return units_; }

 private:
  std::vector<std::string> ids_;
  std::vector<Matrix<float>> units_;
};

/// Scores every video with the model's similarity (or the mean over several
/// models), sorted descending with ties by ascending id.
std::vector<double> score_collection(std::span<const MultiSpaceModel<float>> models,
                                     std::span<const VideoIndex> indexes, const Sentence& sentence);

RankedList rank_collection(const Sentence& sentence, const FeatureStore& collection,
                           const MultiSpaceModel<float>& model, std::size_t top_n = 0);

/// Ranks many queries; `threads` splits queries, result is independent of it.
std::vector<RankedList> rank_queries(std::span<const MultiSpaceModel<float>> models,
                                     const FeatureStore& collection,
                                     std::span<const Sentence> queries, std::size_t top_n,
                                     std::size_t threads = 1);

/// Merges independently trained models into one kModelAverage model.
MultiSpaceModel<float> assemble_average(std::span<const MultiSpaceModel<float>> models);

}  // namespace avs

#include "avs/spaces_impl.hpp"
