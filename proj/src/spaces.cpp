#include "avs/spaces.hpp"

#include <cmath>
#include <thread>

namespace avs {

namespace {

// Row norms below this are clamped so an all-zero embedding scores 0 instead
// of producing NaN inside batched computations.
constexpr double kNormFloor = 1e-12;

template <typename T>
using Column = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Matrix<T> tanh_of(Matrix<T> z) {
  z.array() = z.array().tanh();
  return z;
}

template <typename T>
void normalize_into(const Matrix<T>& act, SideActivations<T>& side) {
  Column<T> norm = act.rowwise().norm().cwiseMax(static_cast<T>(kNormFloor));
  side.unit.push_back(norm.cwiseInverse().asDiagonal() * act);
  side.norm.push_back(std::move(norm));
  side.act.push_back(act);
}

// d(loss)/d(act) from d(loss)/d(unit) through row normalization.
template <typename T>
Matrix<T> normalize_backward(const Matrix<T>& unit, const Column<T>& norm, const Matrix<T>& d_unit) {
  const Column<T> dots = unit.cwiseProduct(d_unit).rowwise().sum();
  Matrix<T> d_act = d_unit - dots.asDiagonal() * unit;
  return norm.cwiseInverse().asDiagonal() * d_act;
}

bool is_recurrent(EncoderKind kind) {
  return kind == EncoderKind::kGru || kind == EncoderKind::kBiGru;
}

template <typename T>
void init_uniform(Matrix<T>& w, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
AffineProjection<T> make_affine(std::size_t in, std::size_t out, Rng& rng) {
  AffineProjection<T> p{Matrix<T>(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)),
                        RowVector<T>::Zero(static_cast<Eigen::Index>(out))};
  init_uniform(p.weight, rng);
  return p;
}

// Product of one feature block (sparse or dense) with a weight row block.
template <typename T, typename Block>
Matrix<T> times(const EncoderOutput<T>& input, const Block& weight) {
  if (input.sparse) return input.sparse_rows * weight;
  return input.dense * weight;
}

template <typename T, typename Target>
void add_transpose_times(const EncoderOutput<T>& input, const Matrix<T>& d_out, Target&& target) {
  if (input.sparse) {
    target += Matrix<T>(input.sparse_rows.transpose() * d_out);
  } else {
    target.noalias() += input.dense.transpose() * d_out;
  }
}

template <typename T>
EncoderOutput<T> as_dense_output(const Matrix<T>& m) {
  EncoderOutput<T> out;
  out.dense = m;
  return out;
}

}  // namespace

std::string_view encoder_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kBow: return "bow";
    case EncoderKind::kW2v: return "w2v";
    case EncoderKind::kGru: return "gru";
    case EncoderKind::kBiGru: return "bigru";
    case EncoderKind::kPrecomputed: return "bert";
  }
  return "unknown";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "bow") return EncoderKind::kBow;
  if (name == "w2v") return EncoderKind::kW2v;
  if (name == "gru") return EncoderKind::kGru;
  if (name == "bigru" || name == "bi-gru") return EncoderKind::kBiGru;
  if (name == "bert" || name == "precomputed") return EncoderKind::kPrecomputed;
  throw UsageError("unknown encoder '" + std::string(name) + "'");
}

std::vector<EncoderKind> parse_encoder_list(std::string_view names) {
  std::vector<EncoderKind> out;
  std::size_t start = 0;
  while (start <= names.size()) {
    const auto comma = names.find(',', start);
    const auto piece = names.substr(start, comma == std::string_view::npos ? names.size() - start
                                                                           : comma - start);
    if (!piece.empty()) out.push_back(parse_encoder(piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw UsageError("encoder list is empty");
  bool gru = false, bigru = false;
  for (auto k : out) {
    gru = gru || k == EncoderKind::kGru;
    bigru = bigru || k == EncoderKind::kBiGru;
  }
  if (gru && bigru) throw UsageError("use either gru or bigru, not both");
  return out;
}

std::string join_encoders(std::span<const EncoderKind> kinds) {
  std::string out;
  for (auto k : kinds) {
    if (!out.empty()) out += ',';
    out += encoder_name(k);
  }
  return out;
}

std::string_view fusion_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kSea: return "sea";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kTransformedConcat: return "transformed";
    case FusionMode::kModelAverage: return "avg";
  }
  return "unknown";
}

FusionMode parse_fusion(std::string_view name) {
  if (name == "sea") return FusionMode::kSea;
  if (name == "concat") return FusionMode::kConcat;
  if (name == "transformed" || name == "transformed_concat") return FusionMode::kTransformedConcat;
  if (name == "avg" || name == "model_average") return FusionMode::kModelAverage;
  throw UsageError("unknown fusion mode '" + std::string(name) + "'");
}

template <typename T>
RowVector<T> project(const RowVector<T>& x, const AffineProjection<T>& p) {
  if (static_cast<std::size_t>(x.cols()) != p.input_dim()) {
    throw DataError("projection expects " + std::to_string(p.input_dim()) + " inputs, got " +
                    std::to_string(x.cols()));
  }
  return (x * p.weight + p.bias).array().tanh().matrix();
}

template <typename T>
T cosine_sim(const RowVector<T>& a, const RowVector<T>& b) {
  if (a.cols() != b.cols()) throw DataError("cosine similarity of vectors with different sizes");
  const T na = a.norm();
  const T nb = b.norm();
  if (na == T(0) || nb == T(0)) throw NumericalError("cosine similarity of a zero-norm embedding");
  return a.dot(b) / (na * nb);
}

template <typename T>
std::size_t MultiSpaceModel<T>::encoder_dim(std::size_t e) const {
  switch (config.encoders.at(e)) {
    case EncoderKind::kBow: return resources.bow_vocab->size();
    case EncoderKind::kW2v: return resources.w2v->dim();
    case EncoderKind::kGru: return config.gru_hidden;
    case EncoderKind::kBiGru: return 2 * config.gru_hidden;
    case EncoderKind::kPrecomputed: return resources.precomputed->dim();
  }
  return 0;
}

template <typename T>
std::size_t MultiSpaceModel<T>::feature_dim(std::size_t e) const {
  return config.fusion == FusionMode::kTransformedConcat ? config.transform_dim : encoder_dim(e);
}

template <typename T>
MultiSpaceModel<T> MultiSpaceModel<T>::create(const ModelConfig& config, TextResources resources,
                                              Rng& rng) {
  if (config.encoders.empty()) throw UsageError("model needs at least one encoder");
  if (config.space_dim == 0 || config.video_dim == 0) throw UsageError("dimensions must be positive");
  MultiSpaceModel model{config, std::move(resources), {}};
  const auto& res = model.resources;
  for (auto kind : config.encoders) {
    auto& dirs = model.params.recurrent.emplace_back();
    switch (kind) {
      case EncoderKind::kBow:
        if (!res.bow_vocab) throw UsageError("bow encoder needs a bag-of-words vocabulary");
        break;
      case EncoderKind::kW2v:
        if (!res.w2v) throw UsageError("w2v encoder needs an embedding table");
        break;
      case EncoderKind::kPrecomputed:
        if (!res.precomputed) throw UsageError("bert encoder needs precomputed sentence vectors");
        break;
      case EncoderKind::kGru:
      case EncoderKind::kBiGru: {
        if (!res.seq_vocab || !res.seq_vocab->is_sequential()) {
          throw UsageError("recurrent encoders need a sequential vocabulary");
        }
        const std::size_t n = kind == EncoderKind::kGru ? 1 : 2;
        for (std::size_t d = 0; d < n; ++d) {
          dirs.push_back(init_gru(*res.seq_vocab, config.gru_input, config.gru_hidden,
                                  res.w2v.get(), rng)
                             .template cast<T>());
        }
        break;
      }
    }
  }

  const std::size_t k = config.encoders.size();
  if (config.fusion == FusionMode::kTransformedConcat) {
    for (std::size_t e = 0; e < k; ++e) {
      model.params.transforms.push_back(make_affine<T>(model.encoder_dim(e), config.transform_dim, rng));
    }
  }

  auto add_space = [&](std::vector<std::size_t> inputs) {
    std::size_t in = 0;
    for (auto j : inputs) in += model.feature_dim(j);
    SubNetwork<T> sub{std::move(inputs), make_affine<T>(in, config.space_dim, rng),
                      make_affine<T>(config.video_dim, config.space_dim, rng)};
    model.params.spaces.push_back(std::move(sub));
  };
  if (config.fusion == FusionMode::kSea || config.fusion == FusionMode::kModelAverage) {
    for (std::size_t e = 0; e < k; ++e) add_space({e});
  } else {
    std::vector<std::size_t> all(k);
    for (std::size_t e = 0; e < k; ++e) all[e] = e;
    add_space(std::move(all));
  }
  return model;
}

template <typename T>
std::vector<EncoderOutput<T>> encode_sentences(const MultiSpaceModel<T>& model,
                                               std::span<const Sentence> sentences) {
  const auto n = static_cast<Eigen::Index>(sentences.size());
  const auto& res = model.resources;
  std::vector<EncoderOutput<T>> outputs;
  for (std::size_t e = 0; e < model.config.encoders.size(); ++e) {
    EncoderOutput<T> out;
    const auto dim = static_cast<Eigen::Index>(model.encoder_dim(e));
    switch (model.config.encoders[e]) {
      case EncoderKind::kBow: {
        out.sparse = true;
        std::vector<Eigen::Triplet<T>> triplets;
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto bow = encode_bow(sentences[static_cast<std::size_t>(i)].tokens, *res.bow_vocab);
          for (const auto& [index, count] : bow.entries) {
            triplets.emplace_back(i, static_cast<Eigen::Index>(index), static_cast<T>(count));
          }
        }
        out.sparse_rows.resize(n, dim);
        out.sparse_rows.setFromTriplets(triplets.begin(), triplets.end());
        break;
      }
      case EncoderKind::kW2v:
        out.dense.resize(n, dim);
        for (Eigen::Index i = 0; i < n; ++i) {
          out.dense.row(i) =
              encode_w2v(sentences[static_cast<std::size_t>(i)].tokens, *res.w2v).template cast<T>();
        }
        break;
      case EncoderKind::kPrecomputed:
        out.dense.resize(n, dim);
        for (Eigen::Index i = 0; i < n; ++i) {
          out.dense.row(i) =
              encode_precomputed(sentences[static_cast<std::size_t>(i)].id, *res.precomputed)
                  .template cast<T>();
        }
        break;
      case EncoderKind::kGru:
      case EncoderKind::kBiGru: {
        const auto& dirs = model.params.recurrent[e];
        const auto h = static_cast<Eigen::Index>(model.config.gru_hidden);
        out.dense.resize(n, dim);
        out.traces.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto& sentence = sentences[static_cast<std::size_t>(i)];
          if (sentence.tokens.empty()) {
            throw DataError("sentence '" + sentence.id + "' is empty; recurrent encoders need a token");
          }
          auto ids = res.seq_vocab->map_sequential(sentence.tokens);
          auto& traces = out.traces[static_cast<std::size_t>(i)];
          traces.push_back(gru_forward<T>(ids, dirs[0]));
          out.dense.row(i).head(h) = traces[0].output;
          if (dirs.size() == 2) {
            std::reverse(ids.begin(), ids.end());
            traces.push_back(gru_forward<T>(ids, dirs[1]));
            out.dense.row(i).tail(h) = traces[1].output;
          }
        }
        break;
      }
    }
    outputs.push_back(std::move(out));
  }
  return outputs;
}

template <typename T>
TextForward<T> forward_text(const MultiSpaceModel<T>& model, std::span<const Sentence> sentences) {
  TextForward<T> fwd;
  fwd.encoders = encode_sentences(model, sentences);
  const auto n = static_cast<Eigen::Index>(sentences.size());

  std::vector<EncoderOutput<T>> transformed_inputs;
  const bool transformed = model.config.fusion == FusionMode::kTransformedConcat;
  if (transformed) {
    for (std::size_t e = 0; e < fwd.encoders.size(); ++e) {
      const auto& tp = model.params.transforms[e];
      Matrix<T> z = times(fwd.encoders[e], tp.weight);
      z.rowwise() += tp.bias;
      fwd.transformed.push_back(tanh_of(std::move(z)));
      transformed_inputs.push_back(as_dense_output(fwd.transformed.back()));
    }
  }
  const auto& features = transformed ? transformed_inputs : fwd.encoders;

  for (const auto& space : model.params.spaces) {
    Matrix<T> z = space.text.bias.replicate(n, 1);
    Eigen::Index offset = 0;
    for (auto j : space.inputs) {
      const auto d = static_cast<Eigen::Index>(model.feature_dim(j));
      z += times(features[j], space.text.weight.middleRows(offset, d));
      offset += d;
    }
    normalize_into(tanh_of(std::move(z)), fwd.side);
  }
  return fwd;
}

template <typename T>
VideoForward<T> forward_video(const MultiSpaceModel<T>& model, Matrix<T> features) {
  if (static_cast<std::size_t>(features.cols()) != model.config.video_dim) {
    throw DataError("video features have dimension " + std::to_string(features.cols()) +
                    ", model expects " + std::to_string(model.config.video_dim));
  }
  VideoForward<T> fwd;
  fwd.features = std::move(features);
  for (const auto& space : model.params.spaces) {
    Matrix<T> z = fwd.features * space.video.weight;
    z.rowwise() += space.video.bias;
    normalize_into(tanh_of(std::move(z)), fwd.side);
  }
  return fwd;
}

template <typename T>
std::vector<Matrix<T>> similarities(const TextForward<T>& text, const VideoForward<T>& video) {
  std::vector<Matrix<T>> out;
  for (std::size_t s = 0; s < text.side.unit.size(); ++s) {
    out.push_back(text.side.unit[s] * video.side.unit[s].transpose());
  }
  return out;
}

template <typename T>
Matrix<T> combine_similarities(std::span<const Matrix<T>> per_space) {
  if (per_space.empty()) throw DataError("no similarity spaces to combine");
  Matrix<T> sum = per_space[0];
  for (std::size_t s = 1; s < per_space.size(); ++s) sum += per_space[s];
  return sum / static_cast<T>(per_space.size());
}

template <typename T>
void backward(const MultiSpaceModel<T>& model, const TextForward<T>& text,
              const VideoForward<T>& video, std::span<const Matrix<T>> d_sim,
              ModelParams<T>& grad) {
  const std::size_t k = model.config.encoders.size();
  const bool transformed = model.config.fusion == FusionMode::kTransformedConcat;
  const auto n = static_cast<Eigen::Index>(text.side.act.empty() ? 0 : text.side.act[0].rows());

  std::vector<Matrix<T>> d_features(k);
  std::vector<bool> wants(k, false);
  for (std::size_t e = 0; e < k; ++e) {
    wants[e] = transformed || is_recurrent(model.config.encoders[e]);
    if (wants[e]) d_features[e] = Matrix<T>::Zero(n, static_cast<Eigen::Index>(model.feature_dim(e)));
  }

  std::vector<EncoderOutput<T>> transformed_inputs;
  if (transformed) {
    for (const auto& t : text.transformed) transformed_inputs.push_back(as_dense_output(t));
  }
  const auto& features = transformed ? transformed_inputs : text.encoders;

  for (std::size_t s = 0; s < model.params.spaces.size(); ++s) {
    const auto& space = model.params.spaces[s];
    auto& g = grad.spaces[s];
    const Matrix<T>& ds = d_sim[s];

    const Matrix<T> d_text_unit = ds * video.side.unit[s];
    const Matrix<T> d_video_unit = ds.transpose() * text.side.unit[s];

    const auto& t_act = text.side.act[s];
    Matrix<T> dz_text = normalize_backward(text.side.unit[s], text.side.norm[s], d_text_unit);
    dz_text.array() *= T(1) - t_act.array().square();
    g.text.bias += dz_text.colwise().sum();
    Eigen::Index offset = 0;
    for (auto j : space.inputs) {
      const auto d = static_cast<Eigen::Index>(model.feature_dim(j));
      add_transpose_times(features[j], dz_text, g.text.weight.middleRows(offset, d));
      if (wants[j]) {
        d_features[j].noalias() += dz_text * space.text.weight.middleRows(offset, d).transpose();
      }
      offset += d;
    }

    const auto& v_act = video.side.act[s];
    Matrix<T> dz_video = normalize_backward(video.side.unit[s], video.side.norm[s], d_video_unit);
    dz_video.array() *= T(1) - v_act.array().square();
    g.video.bias += dz_video.colwise().sum();
    g.video.weight.noalias() += video.features.transpose() * dz_video;
  }

  for (std::size_t e = 0; e < k; ++e) {
    if (!wants[e]) continue;
    Matrix<T> d_encoding;
    if (transformed) {
      Matrix<T> dz = d_features[e];
      dz.array() *= T(1) - text.transformed[e].array().square();
      auto& g = grad.transforms[e];
      g.bias += dz.colwise().sum();
      add_transpose_times(text.encoders[e], dz, g.weight);
      if (!is_recurrent(model.config.encoders[e])) continue;
      d_encoding = dz * model.params.transforms[e].weight.transpose();
    } else {
      d_encoding = std::move(d_features[e]);
    }

    const auto& dirs = model.params.recurrent[e];
    const auto h = static_cast<Eigen::Index>(model.config.gru_hidden);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& traces = text.encoders[e].traces[static_cast<std::size_t>(i)];
      gru_backward<T>(traces[0], d_encoding.row(i).head(h), dirs[0], grad.recurrent[e][0]);
      if (dirs.size() == 2) {
        gru_backward<T>(traces[1], d_encoding.row(i).tail(h), dirs[1], grad.recurrent[e][1]);
      }
    }
  }
}

template <typename T>
T cms_space(const MultiSpaceModel<T>& model, std::size_t space, const Sentence& sentence,
            const RowVector<T>& video) {
  if (space >= model.num_spaces()) throw UsageError("space index out of range");
  const auto text = forward_text(model, std::span(&sentence, 1));
  const auto vid = forward_video(model, Matrix<T>(video));
  return text.side.unit[space].row(0).dot(vid.side.unit[space].row(0));
}

namespace {

template <typename T>
T mean_over_spaces(const MultiSpaceModel<T>& model, const Sentence& sentence,
                   const RowVector<T>& video) {
  const auto text = forward_text(model, std::span(&sentence, 1));
  const auto vid = forward_video(model, Matrix<T>(video));
  const auto sims = similarities(text, vid);
  return combine_similarities<T>(sims)(0, 0);
}

}  // namespace

template <typename T>
T cms_combined(const MultiSpaceModel<T>& model, const Sentence& sentence, const RowVector<T>& video) {
  const auto mode = model.config.fusion;
  if (mode != FusionMode::kSea && mode != FusionMode::kModelAverage) {
    throw UsageError("combined similarity is defined for sea and model-average models");
  }
  return mean_over_spaces(model, sentence, video);
}

template <typename T>
T baseline_forward(const MultiSpaceModel<T>& model, const Sentence& sentence,
                   const RowVector<T>& video) {
  const auto mode = model.config.fusion;
  if (mode != FusionMode::kConcat && mode != FusionMode::kTransformedConcat) {
    throw UsageError("baseline similarity is defined for concat and transformed models");
  }
  return mean_over_spaces(model, sentence, video);
}

template <typename T>
T model_similarity(const MultiSpaceModel<T>& model, const Sentence& sentence,
                   const RowVector<T>& video) {
  return mean_over_spaces(model, sentence, video);
}

template <typename T>
T model_average_sim(std::span<const MultiSpaceModel<T>> models, const Sentence& sentence,
                    const RowVector<T>& video) {
  if (models.empty()) throw UsageError("model averaging needs at least one model");
  T sum = 0;
  for (const auto& m : models) sum += model_similarity(m, sentence, video);
  return sum / static_cast<T>(models.size());
}

VideoIndex::VideoIndex(const MultiSpaceModel<float>& model, const FeatureStore& collection)
    : ids_(collection.ids()) {
  if (collection.size() == 0) throw DataError("video collection is empty");
  auto fwd = forward_video(model, collection.features());
  units_ = std::move(fwd.side.unit);
}

std::vector<double> score_collection(std::span<const MultiSpaceModel<float>> models,
                                     std::span<const VideoIndex> indexes, const Sentence& sentence) {
  if (models.empty() || models.size() != indexes.size()) {
    throw UsageError("scoring needs one video index per model");
  }
  const auto n = static_cast<Eigen::Index>(indexes[0].ids().size());
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto text = forward_text(models[m], std::span(&sentence, 1));
    const auto& units = indexes[m].units();
    Column<float> sum = Column<float>::Zero(n);
    for (std::size_t s = 0; s < units.size(); ++s) {
      sum.noalias() += units[s] * text.side.unit[s].row(0).transpose();
    }
    sum /= static_cast<float>(units.size());
    for (Eigen::Index i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] += sum(i);
  }
  if (models.size() > 1) {
    for (auto& s : scores) s /= static_cast<double>(models.size());
  }
  return scores;
}

RankedList rank_collection(const Sentence& sentence, const FeatureStore& collection,
                           const MultiSpaceModel<float>& model, std::size_t top_n) {
  const VideoIndex index(model, collection);
  const auto scores = score_collection(std::span(&model, 1), std::span(&index, 1), sentence);
  return rank_by_scores(sentence.id, index.ids(), scores, top_n);
}

std::vector<RankedList> rank_queries(std::span<const MultiSpaceModel<float>> models,
                                     const FeatureStore& collection,
                                     std::span<const Sentence> queries, std::size_t top_n,
                                     std::size_t threads) {
  std::vector<VideoIndex> indexes;
  for (const auto& m : models) indexes.emplace_back(m, collection);
  std::vector<RankedList> out(queries.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const auto scores = score_collection(models, indexes, queries[q]);
      out[q] = rank_by_scores(queries[q].id, indexes[0].ids(), scores, top_n);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
  if (threads == 1) {
    work(0, queries.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (queries.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t * chunk, std::min(queries.size(), (t + 1) * chunk));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

MultiSpaceModel<float> assemble_average(std::span<const MultiSpaceModel<float>> models) {
  if (models.empty()) throw UsageError("model averaging needs at least one model");
  MultiSpaceModel<float> out;
  out.config = models[0].config;
  out.config.fusion = FusionMode::kModelAverage;
  out.config.encoders.clear();
  for (const auto& m : models) {
    if (m.config.fusion != FusionMode::kSea && m.config.fusion != FusionMode::kModelAverage) {
      throw UsageError("only multi-space models can be merged for averaging");
    }
    if (m.config.video_dim != out.config.video_dim) {
      throw DataError("averaged models disagree on the video feature dimension");
    }
    const std::size_t offset = out.config.encoders.size();
    out.config.encoders.insert(out.config.encoders.end(), m.config.encoders.begin(),
                               m.config.encoders.end());
    for (const auto& r : m.params.recurrent) out.params.recurrent.push_back(r);
    for (auto space : m.params.spaces) {
      for (auto& j : space.inputs) j += offset;
      out.params.spaces.push_back(std::move(space));
    }
    auto merge = [](auto& dst, const auto& src) {
      if (!dst) dst = src;
    };
    merge(out.resources.bow_vocab, m.resources.bow_vocab);
    merge(out.resources.seq_vocab, m.resources.seq_vocab);
    merge(out.resources.w2v, m.resources.w2v);
    merge(out.resources.precomputed, m.resources.precomputed);
  }
  return out;
}

#define AVS_INSTANTIATE_SPACES(T)                                                              \
  template RowVector<T> project<T>(const RowVector<T>&, const AffineProjection<T>&);           \
  template T cosine_sim<T>(const RowVector<T>&, const RowVector<T>&);                          \
  template class MultiSpaceModel<T>;                                                           \
  template std::vector<EncoderOutput<T>> encode_sentences<T>(const MultiSpaceModel<T>&,        \
                                                             std::span<const Sentence>);       \
  template TextForward<T> forward_text<T>(const MultiSpaceModel<T>&, std::span<const Sentence>); \
  template VideoForward<T> forward_video<T>(const MultiSpaceModel<T>&, Matrix<T>);             \
  template std::vector<Matrix<T>> similarities<T>(const TextForward<T>&, const VideoForward<T>&); \
  template Matrix<T> combine_similarities<T>(std::span<const Matrix<T>>);                      \
  template void backward<T>(const MultiSpaceModel<T>&, const TextForward<T>&,                  \
                            const VideoForward<T>&, std::span<const Matrix<T>>, ModelParams<T>&); \
  template T cms_space<T>(const MultiSpaceModel<T>&, std::size_t, const Sentence&,             \
                          const RowVector<T>&);                                                \
  template T cms_combined<T>(const MultiSpaceModel<T>&, const Sentence&, const RowVector<T>&); \
  template T baseline_forward<T>(const MultiSpaceModel<T>&, const Sentence&, const RowVector<T>&); \
  template T model_similarity<T>(const MultiSpaceModel<T>&, const Sentence&, const RowVector<T>&); \
  template T model_average_sim<T>(std::span<const MultiSpaceModel<T>>, const Sentence&,          \
                                  const RowVector<T>&);

AVS_INSTANTIATE_SPACES(float)
AVS_INSTANTIATE_SPACES(double)

}  // namespace avs
