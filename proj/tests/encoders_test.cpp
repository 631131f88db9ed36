#include "avs/encoders.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace avs;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step scalar GRU with every weight 0.5 and zero biases.
double scalar_step(double x, double h) {
  const double z = sigmoid(0.5 * x + 0.5 * h);
  const double r = sigmoid(0.5 * x + 0.5 * h);
  const double cand = std::tanh(0.5 * x + 0.5 * (r * h));
  return (1 - z) * h + z * cand;
}

GruParams<double> scalar_params(std::size_t vocab) {
  auto p = GruParams<double>::zeros(vocab, 1, 1);
  p.embedding.setOnes();
  for (auto* m : {&p.w_z, &p.w_r, &p.w_h, &p.u_z, &p.u_r, &p.u_h}) m->setConstant(0.5);
  return p;
}

Vocabulary seq_vocab(std::initializer_list<TokenSeq> corpus) {
  const std::vector<TokenSeq> c(corpus);
  return Vocabulary::build(c, 1, true, StopwordList{});
}

GruParams<double> random_params(std::size_t vocab, std::size_t d, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  auto p = GruParams<double>::zeros(vocab, d, h);
  p.for_each_tensor([&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.6, 0.6);
  });
  return p;
}

EmbeddingTable two_word_table() {
  Matrix<float> v(2, 2);
  v << 1, 0, 0, 1;
  return EmbeddingTable({"a", "b"}, v);
}

}  // namespace

TEST(EncodeW2v, MeanOfTableVectors) {
  const auto table = two_word_table();
  EXPECT_TRUE(encode_w2v({"a", "b"}, table).isApprox(RowVector<float>(Eigen::Vector2f(0.5f, 0.5f))));
  EXPECT_EQ(encode_w2v({"a", "a"}, table), RowVector<float>(Eigen::Vector2f(1, 0)));
}

TEST(EncodeW2v, MissesAreSkipped) {
  const auto table = two_word_table();
  EXPECT_EQ(encode_w2v({"a", "zzz"}, table), RowVector<float>(Eigen::Vector2f(1, 0)));
}

TEST(EncodeW2v, AllMissYieldsZeroAndWarning) {
  const auto table = two_word_table();
  test::CaptureWarnings warnings;
  EXPECT_EQ(encode_w2v({"x"}, table), RowVector<float>::Zero(2));
  EXPECT_EQ(warnings.messages.size(), 1u);
}

TEST(EncodeW2v, OrderInvariant) {
  const auto table = two_word_table();
  EXPECT_EQ(encode_w2v({"a", "b", "b"}, table), encode_w2v({"b", "a", "b"}, table));
}

TEST(EmbeddingTable, LookupMissIsDistinguishable) {
  const auto table = two_word_table();
  EXPECT_EQ(table.find("b"), 1u);
  EXPECT_FALSE(table.find("c").has_value());
}

TEST(EmbeddingTable, ReadsClassicTextFormat) {
  std::istringstream in("2 3\nfoo 1 2 3\nbar 0.5 -1 0\n");
  const auto t = EmbeddingTable::read(in);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 3u);
  EXPECT_EQ(t.row(*t.find("bar"))(1), -1.0f);
}

TEST(EmbeddingTable, WrongArityNamesTheWord) {
  std::istringstream in("2 3\nfoo 1 2 3\nbar 0.5 -1\n");
  try {
    EmbeddingTable::read(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bar"), std::string::npos);
  }
}

TEST(EmbeddingTable, RowCountMustMatchHeader) {
  std::istringstream in("3 2\nfoo 1 2\nbar 0 1\n");
  EXPECT_THROW(EmbeddingTable::read(in), DataError);
}

TEST(EmbeddingTable, WriteReadRoundTrip) {
  Rng rng(1);
  Matrix<float> v(3, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.normal());
  const EmbeddingTable t({"x", "y", "z"}, v);
  std::stringstream buf;
  t.write(buf);
  const auto back = EmbeddingTable::read(buf);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.row(i), t.row(i));
}

TEST(Precomputed, ReturnsStoredVectorUnmodified) {
  Matrix<float> v(2, 3);
  v << 0.1f, 0.2f, 0.3f, -1, 2, 1e-7f;
  const PrecomputedStore store(FeatureStore({"id7", "id8"}, v), {{"pooling", "mean"}});
  EXPECT_EQ(encode_precomputed("id7", store), v.row(0));
  EXPECT_EQ(encode_precomputed("id8", store), v.row(1));
  try {
    encode_precomputed("nope", store);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

TEST(GruStep, ZeroParametersAreAFixpoint) {
  const auto p = GruParams<double>::zeros(3, 4, 5);
  const RowVector<double> x = RowVector<double>::Constant(4, 0.7);
  EXPECT_EQ(gru_step<double>(x, RowVector<double>::Zero(5), p), RowVector<double>::Zero(5));
}

TEST(GruStep, ClosedUpdateGateKeepsState) {
  auto p = random_params(3, 4, 5, 11);
  p.b_z.setConstant(-1000.0);
  const RowVector<double> x = RowVector<double>::Constant(4, 0.3);
  RowVector<double> h(5);
  h << 0.1, -0.2, 0.3, -0.4, 0.5;
  EXPECT_TRUE(gru_step(x, h, p).isApprox(h, 1e-12));
}

TEST(GruStep, ScalarOracle) {
  const auto p = scalar_params(2);
  RowVector<double> x(1), h0(1);
  x << 1.0;
  h0 << 0.0;
  const double expected = scalar_step(1.0, 0.0);
  EXPECT_NEAR(expected, sigmoid(0.5) * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(gru_step(x, h0, p)(0), expected, 1e-15);
}

TEST(GruStep, NonFiniteOutputIsNumericalError) {
  auto p = scalar_params(2);
  p.b_h(0) = std::numeric_limits<double>::quiet_NaN();
  RowVector<double> x(1), h0(1);
  x << 1.0;
  h0 << 0.0;
  EXPECT_THROW(gru_step(x, h0, p), NumericalError);
}

TEST(EncodeGru, SingleTokenEqualsFirstState) {
  const auto vocab = seq_vocab({{"x", "y"}});
  const auto p = random_params(vocab.size(), 4, 3, 5);
  const auto ids = vocab.map_sequential({"x"});
  const RowVector<double> h1 = gru_step<double>(p.embedding.row(static_cast<Eigen::Index>(ids[0])),
                                                RowVector<double>::Zero(3), p);
  EXPECT_TRUE(encode_gru({"x"}, p, vocab).isApprox(h1, 1e-14));
}

TEST(EncodeGru, ZeroParametersGiveZero) {
  const auto vocab = seq_vocab({{"x", "y"}});
  const auto p = GruParams<double>::zeros(vocab.size(), 4, 3);
  EXPECT_EQ(encode_gru({"x", "y", "x"}, p, vocab), RowVector<double>::Zero(3));
}

TEST(EncodeGru, TwoTokenScalarOracle) {
  const auto vocab = seq_vocab({{"x", "y"}});
  const auto p = scalar_params(vocab.size());
  const double h1 = scalar_step(1.0, 0.0);
  const double h2 = scalar_step(1.0, h1);
  EXPECT_NEAR(encode_gru({"x", "y"}, p, vocab)(0), 0.5 * (h1 + h2), 1e-15);
}

TEST(EncodeGru, EmptySentenceIsAnError) {
  const auto vocab = seq_vocab({{"x"}});
  const auto p = GruParams<double>::zeros(vocab.size(), 2, 2);
  EXPECT_THROW(encode_gru({}, p, vocab), DataError);
  EXPECT_THROW(encode_bigru({}, p, p, vocab), DataError);
}

TEST(EncodeGru, OutOfVocabularyMapsToUnknown) {
  const auto vocab = seq_vocab({{"x"}});
  const auto p = random_params(vocab.size(), 3, 4, 2);
  EXPECT_EQ(encode_gru({"never", "seen"}, p, vocab), encode_gru({"<unk>", "<unk>"}, p, vocab));
}

TEST(EncodeGru, OrderSensitive) {
  const auto vocab = seq_vocab({{"a", "b", "c", "d", "e"}});
  const auto p = random_params(vocab.size(), 6, 7, 9);
  const TokenSeq s = {"a", "b", "c", "d", "e"};
  const TokenSeq rev(s.rbegin(), s.rend());
  EXPECT_GT((encode_gru(s, p, vocab) - encode_gru(rev, p, vocab)).norm(), 1e-6);
}

TEST(EncodeBiGru, OutputIsTwiceHidden) {
  const auto vocab = seq_vocab({{"a", "b"}});
  const auto f = random_params(vocab.size(), 3, 4, 1);
  const auto b = random_params(vocab.size(), 3, 4, 2);
  EXPECT_EQ(encode_bigru({"a", "b", "a"}, f, b, vocab).size(), 8);
  EXPECT_EQ(2 * f.recurrent_parameter_count(), f.recurrent_parameter_count() + b.recurrent_parameter_count());
}

TEST(EncodeBiGru, PalindromeWithSharedParametersIsSymmetric) {
  const auto vocab = seq_vocab({{"a", "b", "c"}});
  const auto p = random_params(vocab.size(), 3, 4, 3);
  const auto out = encode_bigru({"a", "b", "c", "b", "a"}, p, p, vocab);
  EXPECT_TRUE(out.head(4).isApprox(out.tail(4), 1e-14));
}

TEST(EncodeBiGru, TwoTokenScalarOracle) {
  const auto vocab = seq_vocab({{"x", "y"}});
  auto p = scalar_params(vocab.size());
  p.embedding(static_cast<Eigen::Index>(*vocab.index_of("y")), 0) = -0.5;
  auto oracle = [](double first, double second) {
    const double h1 = scalar_step(first, 0.0);
    return 0.5 * (h1 + scalar_step(second, h1));
  };
  const auto out = encode_bigru({"x", "y"}, p, p, vocab);
  EXPECT_NEAR(out(0), oracle(1.0, -0.5), 1e-15);
  EXPECT_NEAR(out(1), oracle(-0.5, 1.0), 1e-15);
}

TEST(InitGru, EmbeddingRowsComeFromTableWhenPresent) {
  const auto vocab = seq_vocab({{"a", "q"}});
  const auto table = two_word_table();
  Rng rng(4);
  const auto p = init_gru(vocab, 2, 3, &table, rng);
  EXPECT_EQ(p.embedding.row(static_cast<Eigen::Index>(*vocab.index_of("a"))), table.row(0));
  const auto q = p.embedding.row(static_cast<Eigen::Index>(*vocab.index_of("q")));
  EXPECT_LE(q.cwiseAbs().maxCoeff(), 0.1f);
  const float bound = 1.0f / std::sqrt(3.0f);
  EXPECT_LE(p.u_h.cwiseAbs().maxCoeff(), bound);
  EXPECT_LE(p.b_z.cwiseAbs().maxCoeff(), bound);
  EXPECT_NO_THROW(p.check());
}

TEST(InitGru, DimensionMismatchFallsBackToUniform) {
  const auto vocab = seq_vocab({{"a"}});
  const auto table = two_word_table();
  Rng rng(4);
  const auto p = init_gru(vocab, 5, 3, &table, rng);
  EXPECT_EQ(p.input_size(), 5u);
  EXPECT_LE(p.embedding.cwiseAbs().maxCoeff(), 0.1f);
}

TEST(GruParams, CheckRejectsInconsistentShapes) {
  auto p = GruParams<double>::zeros(3, 4, 5);
  p.u_r.resize(4, 5);
  EXPECT_THROW(p.check(), DataError);
}

namespace {

// Central differences of c . encode(...) against gru_backward at 64 bits.
double max_gradient_error(bool bidirectional) {
  const auto vocab = seq_vocab({{"w0", "w1", "w2", "w3"}});
  const std::size_t h = 4;
  auto fwd = random_params(vocab.size(), 3, h, 21);
  auto bwd = random_params(vocab.size(), 3, h, 22);
  const TokenSeq sentence = {"w2", "w0", "w3", "w2", "w1"};
  Rng rng(5);
  RowVector<double> c(static_cast<Eigen::Index>(bidirectional ? 2 * h : h));
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = rng.normal();

  auto objective = [&] {
    return bidirectional ? encode_bigru(sentence, fwd, bwd, vocab).dot(c)
                         : encode_gru(sentence, fwd, vocab).dot(c);
  };
  auto ids = vocab.map_sequential(sentence);
  auto grad_f = GruParams<double>::zeros(vocab.size(), 3, h);
  auto grad_b = GruParams<double>::zeros(vocab.size(), 3, h);
  const auto hh = static_cast<Eigen::Index>(h);
  gru_backward(gru_forward<double>(ids, fwd), RowVector<double>(c.head(hh)), fwd, grad_f);
  if (bidirectional) {
    std::reverse(ids.begin(), ids.end());
    gru_backward(gru_forward<double>(ids, bwd), RowVector<double>(c.tail(hh)), bwd, grad_b);
  }

  double worst = 0;
  auto check = [&](GruParams<double>& params, GruParams<double>& grad) {
    std::vector<double*> values, grads;
    std::vector<Eigen::Index> sizes;
    params.for_each_tensor([&](const char*, auto& t) { values.push_back(t.data()); sizes.push_back(t.size()); });
    grad.for_each_tensor([&](const char*, auto& t) { grads.push_back(t.data()); });
    for (std::size_t t = 0; t < values.size(); ++t) {
      for (Eigen::Index i = 0; i < sizes[t]; ++i) {
        const double saved = values[t][i];
        values[t][i] = saved + 1e-5;
        const double up = objective();
        values[t][i] = saved - 1e-5;
        const double down = objective();
        values[t][i] = saved;
        const double numeric = (up - down) / 2e-5;
        const double a = grads[t][i];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
      }
    }
  };
  check(fwd, grad_f);
  if (bidirectional) check(bwd, grad_b);
  return worst;
}

}  // namespace

TEST(GruBackward, MatchesFiniteDifferences) { EXPECT_LT(max_gradient_error(false), 1e-4); }

TEST(GruBackward, BidirectionalMatchesFiniteDifferences) { EXPECT_LT(max_gradient_error(true), 1e-4); }

TEST(GruParams, CastRoundTripIsExact) {
  Rng rng(8);
  auto p = init_gru(seq_vocab({{"a", "b"}}), 3, 4, nullptr, rng);
  const auto back = p.cast<double>().cast<float>();
  EXPECT_EQ(back.u_z, p.u_z);
  EXPECT_EQ(back.embedding, p.embedding);
}
