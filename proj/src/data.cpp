#include "avs/data.hpp"

#include "avs/random.hpp"

#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace avs {

CaptionSet::CaptionSet(std::vector<Caption> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!by_sentence_.emplace(r.sentence_id, i).second) {
      throw DataError("duplicate sentence id '" + r.sentence_id + "'");
    }
    auto [it, inserted] = by_video_.try_emplace(r.video_id);
    if (inserted) video_order_.push_back(r.video_id);
    it->second.push_back(i);
  }
}

Sentence CaptionSet::sentence(std::size_t i) const {
  return {records_.at(i).sentence_id, records_.at(i).tokens};
}

std::vector<Sentence> CaptionSet::sentences() const {
  std::vector<Sentence> out;
  out.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) out.push_back(sentence(i));
  return out;
}

std::vector<TokenSeq> CaptionSet::corpus() const {
  std::vector<TokenSeq> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.tokens);
  return out;
}

Qrels CaptionSet::qrels() const {
  Qrels out;
  for (const auto& r : records_) out[r.sentence_id].insert(r.video_id);
  return out;
}

void CaptionSet::check_against(const FeatureStore& features) const {
  for (const auto& r : records_) {
    if (!features.find(r.video_id)) {
      throw DataError("caption '" + r.sentence_id + "' refers to video '" + r.video_id +
                      "' which has no features");
    }
  }
}

CaptionSet CaptionSet::read(std::istream& in) {
  std::vector<Caption> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || tab1 == 0 || tab2 == tab1 + 1) {
      throw DataError("caption line " + std::to_string(line_no) +
                      " is malformed (expected sentence_id<TAB>video_id<TAB>text)");
    }
    Caption c;
    c.sentence_id = line.substr(0, tab1);
    c.video_id = line.substr(tab1 + 1, tab2 - tab1 - 1);
    c.text = line.substr(tab2 + 1);
    c.tokens = tokenize(c.text);
    if (!seen.emplace(c.sentence_id, line_no).second) {
      throw DataError("duplicate sentence id '" + c.sentence_id + "' at line " +
                      std::to_string(line_no));
    }
    records.push_back(std::move(c));
  }
  return CaptionSet(std::move(records));
}

CaptionSet CaptionSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open captions " + path);
  return read(in);
}

void CaptionSet::write(std::ostream& out) const {
  for (const auto& r : records_) out << r.sentence_id << '\t' << r.video_id << '\t' << r.text << '\n';
}

std::vector<Batch> make_batches(const CaptionSet& captions, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch) {
  if (batch_size < 2) throw UsageError("batch size must be at least 2");
  if (captions.size() < 2) throw DataError("training needs at least two caption-video pairs");
  std::vector<std::size_t> order(captions.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span(order));

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    batches.push_back({std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end))});
  }
  return batches;
}

template <typename T>
BatchData<T> resolve_batch(const Batch& batch, const CaptionSet& captions,
                           const FeatureStore& features) {
  BatchData<T> data;
  const auto n = static_cast<Eigen::Index>(batch.items.size());
  data.videos.resize(n, static_cast<Eigen::Index>(features.dim()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = captions[batch.items[static_cast<std::size_t>(i)]];
    data.sentences.push_back({c.sentence_id, c.tokens});
    data.video_ids.push_back(c.video_id);
    data.videos.row(i) = features.row(features.index_of(c.video_id)).template cast<T>();
  }
  return data;
}

template BatchData<float> resolve_batch<float>(const Batch&, const CaptionSet&, const FeatureStore&);
template BatchData<double> resolve_batch<double>(const Batch&, const CaptionSet&, const FeatureStore&);

FeatureStore select_videos(const FeatureStore& features, const std::vector<std::string>& ids) {
  Matrix<float> rows(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(features.dim()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = features.row(features.index_of(ids[i]));
  }
  return FeatureStore(ids, std::move(rows));
}

EmbeddingTable load_embedding_table(const std::string& path) { return EmbeddingTable::load(path); }

JudgmentPool load_judgments(const std::string& path) { return JudgmentPool::load(path); }

std::vector<Sentence> read_queries(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.push_back({std::to_string(line_no), tokenize(line)});
    } else {
      out.push_back({line.substr(0, tab), tokenize(line.substr(tab + 1))});
    }
  }
  return out;
}

namespace {

const std::vector<std::string> kColors = {"red", "blue", "green", "yellow"};
const std::vector<std::string> kAnimals = {"dog", "cat", "horse", "bird"};
const std::vector<std::string> kActions = {"running", "jumping"};
const std::vector<std::string> kPlaces = {"park", "garden", "street", "beach",
                                          "forest", "field", "kitchen", "river"};

std::string fixture_caption(std::size_t i) {
  std::string text = "a " + kColors[i % 4] + " " + kAnimals[(i / 4) % 4] + " is " +
                     kActions[(i / 16) % 2];
  if (i >= 32) text += " in the " + kPlaces[(i / 32) % 8];
  return text;
}

Matrix<float> random_rows(std::size_t n, std::size_t d, Rng& rng) {
  Matrix<float> m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal() * scale);
  return m;
}

}  // namespace

Fixture make_fixture(const FixtureOptions& options) {
  const std::size_t n = options.pairs;
  if (n < 2 || n > 256) throw UsageError("fixture supports 2..256 pairs");
  if (options.video_dim < n) {
    throw UsageError("orthogonal fixture needs video_dim >= pairs");
  }
  Rng rng(options.seed);

  Eigen::MatrixXd gauss(static_cast<Eigen::Index>(options.video_dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(gauss.rows(), gauss.cols());
  Matrix<float> video_rows = q.transpose().cast<float>();

  std::vector<std::string> video_ids;
  std::vector<Caption> captions;
  for (std::size_t i = 0; i < n; ++i) {
    video_ids.push_back("video" + std::to_string(i));
    Caption c;
    c.sentence_id = "sent" + std::to_string(i);
    c.video_id = video_ids.back();
    c.text = fixture_caption(i);
    c.tokens = tokenize(c.text);
    captions.push_back(std::move(c));
  }

  std::vector<std::string> words;
  for (const auto& c : captions) {
    for (const auto& t : c.tokens) {
      if (std::find(words.begin(), words.end(), t) == words.end()) words.push_back(t);
    }
  }
  EmbeddingTable w2v(words, random_rows(words.size(), options.w2v_dim, rng));

  // Token table standing in for a frozen transformer; sentence vectors are
  // mean-pooled offline like the real ones.
  const EmbeddingTable token_table(words, random_rows(words.size(), options.bert_dim, rng));
  Matrix<float> sentence_vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(options.bert_dim));
  std::vector<std::string> sentence_ids;
  for (std::size_t i = 0; i < n; ++i) {
    sentence_vectors.row(static_cast<Eigen::Index>(i)) = encode_w2v(captions[i].tokens, token_table);
    sentence_ids.push_back(captions[i].sentence_id);
  }

  JudgmentPool judgments;
  for (const auto& c : captions) {
    for (const auto& v : video_ids) {
      judgments.add(c.sentence_id, {v, v == c.video_id ? 1 : 0, "1", 1.0});
    }
  }

  return {FeatureStore(std::move(video_ids), std::move(video_rows)), CaptionSet(std::move(captions)),
          std::move(w2v),
          PrecomputedStore(FeatureStore(std::move(sentence_ids), std::move(sentence_vectors)),
                           {{"pooling", "mean"}, {"producer", "synthetic-token-table"}}),
          std::move(judgments)};
}

void write_fixture(const Fixture& fixture, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  fixture.features.write_binary((root / "features.vfea").string());
  fixture.precomputed.vectors().write_binary((root / "precomputed.vfea").string());
  auto open = [&](const char* name) {
    std::ofstream out(root / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (root / name).string());
    return out;
  };
  {
    auto out = open("precomputed.vfea.meta");
    for (const auto& [k, v] : fixture.precomputed.metadata()) out << k << '=' << v << '\n';
  }
  {
    auto out = open("captions.tsv");
    fixture.captions.write(out);
  }
  {
    auto out = open("embeddings.txt");
    fixture.w2v.write(out);
  }
  {
    auto out = open("queries.txt");
    for (const auto& c : fixture.captions.records()) out << c.sentence_id << '\t' << c.text << '\n';
  }
  {
    auto out = open("qrels.tsv");
    fixture.judgments.write(out);
  }
}

}  // namespace avs
