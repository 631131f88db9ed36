#include "avs/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace avs {

EmbeddingTable::EmbeddingTable(std::vector<std::string> words, Matrix<float> vectors)
    : words_(std::move(words)), vectors_(std::move(vectors)) {
  if (static_cast<std::size_t>(vectors_.rows()) != words_.size()) {
    throw DataError("embedding table row count does not match word count");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      throw DataError("embedding table repeats word '" + words_[i] + "'");
    }
  }
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable EmbeddingTable::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("embedding file is empty");
  std::istringstream header(line);
  std::size_t count = 0;
  std::size_t dim = 0;
  if (!(header >> count >> dim) || dim == 0) {
    throw DataError("embedding header must be `count dim`, got '" + line + "'");
  }

  std::vector<std::string> words;
  words.reserve(count);
  Matrix<float> vectors(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    if (words.size() == count) {
      throw DataError("embedding file has more rows than the declared " + std::to_string(count));
    }
    const auto row = static_cast<Eigen::Index>(words.size());
    std::size_t arity = 0;
    std::string tok;
    while (fields >> tok) {
      if (arity < dim) {
        char* end = nullptr;
        vectors(row, static_cast<Eigen::Index>(arity)) = std::strtof(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
          throw DataError("embedding for '" + word + "' has a bad number '" + tok + "'");
        }
      }
      ++arity;
    }
    if (arity != dim) {
      throw DataError("embedding for '" + word + "' has " + std::to_string(arity) +
                      " values, expected " + std::to_string(dim));
    }
    if (!vectors.row(row).allFinite()) {
      throw DataError("embedding for '" + word + "' is not finite");
    }
    words.push_back(std::move(word));
  }
  if (words.size() != count) {
    throw DataError("embedding file declares " + std::to_string(count) + " rows but has " +
                    std::to_string(words.size()));
  }
  return EmbeddingTable(std::move(words), std::move(vectors));
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path);
  return read(in);
}

void EmbeddingTable::write(std::ostream& out) const {
  out << size() << ' ' << dim() << '\n';
  char num[32];
  for (std::size_t i = 0; i < size(); ++i) {
    out << words_[i];
    for (std::size_t j = 0; j < dim(); ++j) {
      std::snprintf(num, sizeof num, " %.9g",
                    static_cast<double>(vectors_(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(j))));
      out << num;
    }
    out << '\n';
  }
}

RowVector<float> encode_w2v(const TokenSeq& sentence, const EmbeddingTable& table) {
  RowVector<float> sum = RowVector<float>::Zero(static_cast<Eigen::Index>(table.dim()));
  std::size_t hits = 0;
  for (const auto& token : sentence) {
    if (auto i = table.find(token)) {
      sum += table.row(*i);
      ++hits;
    }
  }
  if (hits == 0) {
    warn("no word of the sentence is in the embedding table; w2v encoding is zero");
    return sum;
  }
  return sum / static_cast<float>(hits);
}

PrecomputedStore::PrecomputedStore(FeatureStore vectors, std::map<std::string, std::string> metadata)
    : vectors_(std::move(vectors)), metadata_(std::move(metadata)) {}

PrecomputedStore PrecomputedStore::load(const std::string& path) {
  std::map<std::string, std::string> metadata;
  std::ifstream meta(path + ".meta");
  std::string line;
  while (meta && std::getline(meta, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return PrecomputedStore(FeatureStore::load(path), std::move(metadata));
}

RowVector<float> encode_precomputed(std::string_view sentence_id, const PrecomputedStore& store) {
  auto index = store.vectors().find(sentence_id);
  if (!index) {
    throw DataError("sentence id '" + std::string(sentence_id) +
                    "' has no precomputed vector");
  }
  return store.vectors().row(*index);
}

template <typename T>
std::size_t GruParams<T>::recurrent_parameter_count() const {
  return static_cast<std::size_t>(w_z.size() + w_r.size() + w_h.size() + u_z.size() +
                                  u_r.size() + u_h.size() + b_z.size() + b_r.size() +
                                  b_h.size());
}

template <typename T>
GruParams<T> GruParams<T>::zeros(std::size_t vocab, std::size_t input, std::size_t hidden) {
  const auto v = static_cast<Eigen::Index>(vocab);
  const auto d = static_cast<Eigen::Index>(input);
  const auto h = static_cast<Eigen::Index>(hidden);
  return {Matrix<T>::Zero(v, d),    Matrix<T>::Zero(d, h),    Matrix<T>::Zero(d, h),
          Matrix<T>::Zero(d, h),    Matrix<T>::Zero(h, h),    Matrix<T>::Zero(h, h),
          Matrix<T>::Zero(h, h),    RowVector<T>::Zero(h),    RowVector<T>::Zero(h),
          RowVector<T>::Zero(h)};
}

template <typename T>
void GruParams<T>::check() const {
  const auto d = embedding.cols();
  const auto h = u_z.rows();
  bool ok = h > 0 && d > 0;
  for (const auto* w : {&w_z, &w_r, &w_h}) ok = ok && w->rows() == d && w->cols() == h;
  for (const auto* u : {&u_z, &u_r, &u_h}) ok = ok && u->rows() == h && u->cols() == h;
  for (const auto* b : {&b_z, &b_r, &b_h}) ok = ok && b->cols() == h;
  if (!ok) throw DataError("GRU parameter shapes are inconsistent");
  bool finite = true;
  for_each_tensor([&](const char*, const auto& t) { finite = finite && t.allFinite(); });
  if (!finite) throw DataError("GRU parameters contain non-finite values");
}

GruParams<float> init_gru(const Vocabulary& vocab, std::size_t input_size, std::size_t hidden,
                          const EmbeddingTable* table, Rng& rng) {
  auto p = GruParams<float>::zeros(vocab.size(), input_size, hidden);
  const bool use_table = table != nullptr && table->dim() == input_size;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::optional<std::size_t> hit = use_table ? table->find(vocab.word(i)) : std::nullopt;
    if (hit) {
      p.embedding.row(row) = table->row(*hit);
    } else {
      for (Eigen::Index j = 0; j < p.embedding.cols(); ++j) {
        p.embedding(row, j) = static_cast<float>(rng.uniform(-0.1, 0.1));
      }
    }
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill = [&](auto& t) {
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      t.data()[j] = static_cast<float>(rng.uniform(-bound, bound));
    }
  };
  fill(p.w_z); fill(p.w_r); fill(p.w_h);
  fill(p.u_z); fill(p.u_r); fill(p.u_h);
  fill(p.b_z); fill(p.b_r); fill(p.b_h);
  return p;
}

namespace {

template <typename T>
RowVector<T> sigmoid(const RowVector<T>& a) {
  return (T(1) + (-a.array()).exp()).inverse().matrix();
}

template <typename T>
void check_dims(std::size_t id, const GruParams<T>& p) {
  if (id >= p.vocab_size()) {
    throw DataError("token id " + std::to_string(id) + " outside GRU vocabulary of " +
                    std::to_string(p.vocab_size()));
  }
}

}  // namespace

template <typename T>
RowVector<T> gru_step(const RowVector<T>& x, const RowVector<T>& h_prev, const GruParams<T>& p) {
  if (static_cast<std::size_t>(x.cols()) != p.input_size() ||
      static_cast<std::size_t>(h_prev.cols()) != p.hidden_size()) {
    throw DataError("gru_step input dimensions do not match parameters");
  }
  const RowVector<T> z = sigmoid<T>(x * p.w_z + h_prev * p.u_z + p.b_z);
  const RowVector<T> r = sigmoid<T>(x * p.w_r + h_prev * p.u_r + p.b_r);
  const RowVector<T> rh = r.cwiseProduct(h_prev);
  const RowVector<T> candidate = (x * p.w_h + rh * p.u_h + p.b_h).array().tanh().matrix();
  RowVector<T> h = (T(1) - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(candidate);
  if (!h.allFinite()) throw NumericalError("GRU hidden state diverged (non-finite)");
  return h;
}

template <typename T>
GruTrace<T> gru_forward(std::span<const std::size_t> token_ids, const GruParams<T>& p) {
  const auto l = static_cast<Eigen::Index>(token_ids.size());
  if (l == 0) throw DataError("GRU encoding needs at least one token");
  const auto d = static_cast<Eigen::Index>(p.input_size());
  const auto h = static_cast<Eigen::Index>(p.hidden_size());

  Matrix<T> x(l, d);
  for (Eigen::Index t = 0; t < l; ++t) {
    const std::size_t id = token_ids[static_cast<std::size_t>(t)];
    check_dims(id, p);
    x.row(t) = p.embedding.row(static_cast<Eigen::Index>(id));
  }
  // Input contributions for every step at once.
  const Matrix<T> xz = x * p.w_z;
  const Matrix<T> xr = x * p.w_r;
  const Matrix<T> xh = x * p.w_h;

  GruTrace<T> tr;
  tr.token_ids.assign(token_ids.begin(), token_ids.end());
  tr.z.resize(l, h);
  tr.r.resize(l, h);
  tr.candidate.resize(l, h);
  tr.hidden = Matrix<T>::Zero(l + 1, h);
  for (Eigen::Index t = 0; t < l; ++t) {
    const RowVector<T> prev = tr.hidden.row(t);
    const RowVector<T> z = sigmoid<T>(xz.row(t) + prev * p.u_z + p.b_z);
    const RowVector<T> r = sigmoid<T>(xr.row(t) + prev * p.u_r + p.b_r);
    const RowVector<T> rh = r.cwiseProduct(prev);
    const RowVector<T> c = (xh.row(t) + rh * p.u_h + p.b_h).array().tanh().matrix();
    tr.z.row(t) = z;
    tr.r.row(t) = r;
    tr.candidate.row(t) = c;
    tr.hidden.row(t + 1) = (T(1) - z.array()).matrix().cwiseProduct(prev) + z.cwiseProduct(c);
  }
  tr.output = tr.hidden.bottomRows(l).colwise().sum() / static_cast<T>(l);
  if (!tr.output.allFinite()) throw NumericalError("GRU hidden state diverged (non-finite)");
  return tr;
}

template <typename T>
void gru_backward(const GruTrace<T>& tr, const RowVector<T>& d_output, const GruParams<T>& p,
                  GruParams<T>& grad) {
  const auto l = static_cast<Eigen::Index>(tr.token_ids.size());
  const auto h = static_cast<Eigen::Index>(p.hidden_size());
  const RowVector<T> d_pool = d_output / static_cast<T>(l);

  Matrix<T> a_z(l, h), a_r(l, h), a_h(l, h), rh(l, h);
  RowVector<T> d_next = RowVector<T>::Zero(h);
  for (Eigen::Index t = l - 1; t >= 0; --t) {
    const RowVector<T> dh = d_pool + d_next;
    const auto prev = tr.hidden.row(t);
    const auto z = tr.z.row(t).array();
    const auto r = tr.r.row(t).array();
    const auto c = tr.candidate.row(t).array();

    const RowVector<T> dc = (dh.array() * z).matrix();
    const RowVector<T> dz = (dh.array() * (c - prev.array())).matrix();
    RowVector<T> d_prev = (dh.array() * (T(1) - z)).matrix();

    a_h.row(t) = dc.array() * (T(1) - c * c);
    rh.row(t) = r * prev.array();
    const RowVector<T> d_rh = a_h.row(t) * p.u_h.transpose();
    const RowVector<T> dr = (d_rh.array() * prev.array()).matrix();
    d_prev.array() += d_rh.array() * r;

    a_z.row(t) = dz.array() * z * (T(1) - z);
    a_r.row(t) = dr.array() * r * (T(1) - r);
    d_prev += a_z.row(t) * p.u_z.transpose() + a_r.row(t) * p.u_r.transpose();
    d_next = d_prev;
  }

  const auto d = static_cast<Eigen::Index>(p.input_size());
  Matrix<T> x(l, d);
  for (Eigen::Index t = 0; t < l; ++t) {
    x.row(t) = p.embedding.row(static_cast<Eigen::Index>(tr.token_ids[static_cast<std::size_t>(t)]));
  }
  const auto prev_states = tr.hidden.topRows(l);
  grad.w_z.noalias() += x.transpose() * a_z;
  grad.w_r.noalias() += x.transpose() * a_r;
  grad.w_h.noalias() += x.transpose() * a_h;
  grad.u_z.noalias() += prev_states.transpose() * a_z;
  grad.u_r.noalias() += prev_states.transpose() * a_r;
  grad.u_h.noalias() += rh.transpose() * a_h;
  grad.b_z += a_z.colwise().sum();
  grad.b_r += a_r.colwise().sum();
  grad.b_h += a_h.colwise().sum();

  const Matrix<T> dx = a_z * p.w_z.transpose() + a_r * p.w_r.transpose() + a_h * p.w_h.transpose();
  for (Eigen::Index t = 0; t < l; ++t) {
    grad.embedding.row(static_cast<Eigen::Index>(tr.token_ids[static_cast<std::size_t>(t)])) +=
        dx.row(t);
  }
}

template <typename T>
RowVector<T> encode_gru(const TokenSeq& sentence, const GruParams<T>& p, const Vocabulary& vocab) {
  if (sentence.empty()) throw DataError("GRU encoding needs at least one token");
  const auto ids = vocab.map_sequential(sentence);
  return gru_forward<T>(ids, p).output;
}

template <typename T>
RowVector<T> encode_bigru(const TokenSeq& sentence, const GruParams<T>& forward,
                          const GruParams<T>& backward, const Vocabulary& vocab) {
  if (forward.hidden_size() != backward.hidden_size()) {
    throw DataError("bi-GRU directions must share the hidden size");
  }
  if (sentence.empty()) throw DataError("bi-GRU encoding needs at least one token");
  auto ids = vocab.map_sequential(sentence);
  const RowVector<T> fwd = gru_forward<T>(ids, forward).output;
  std::reverse(ids.begin(), ids.end());
  const RowVector<T> bwd = gru_forward<T>(ids, backward).output;
  RowVector<T> out(fwd.cols() + bwd.cols());
  out << fwd, bwd;
  return out;
}

#define AVS_INSTANTIATE_GRU(T)                                                                 \
  template struct GruParams<T>;                                                                \
  template RowVector<T> gru_step<T>(const RowVector<T>&, const RowVector<T>&,                  \
                                    const GruParams<T>&);                                      \
  template GruTrace<T> gru_forward<T>(std::span<const std::size_t>, const GruParams<T>&);      \
  template void gru_backward<T>(const GruTrace<T>&, const RowVector<T>&, const GruParams<T>&,  \
                                GruParams<T>&);                                                \
  template RowVector<T> encode_gru<T>(const TokenSeq&, const GruParams<T>&, const Vocabulary&); \
  template RowVector<T> encode_bigru<T>(const TokenSeq&, const GruParams<T>&,                  \
                                        const GruParams<T>&, const Vocabulary&);

AVS_INSTANTIATE_GRU(float)
AVS_INSTANTIATE_GRU(double)

}  // namespace avs
