#pragma once

#include "avs/common.hpp"
#include "avs/data.hpp"
#include "avs/spaces.hpp"

#include <memory>
#include <string>
#include <vector>

namespace avs::test {

// Collects warnings for the lifetime of the object.
class CaptureWarnings {
 public:
  CaptureWarnings() {
    previous_ = set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~CaptureWarnings() { set_warning_sink(previous_); }
  CaptureWarnings(const CaptureWarnings&) = delete;
  CaptureWarnings& operator=(const CaptureWarnings&) = delete;

  std::vector<std::string> messages;

 private:
  WarningSink previous_;
};

// Small fixture plus resources with min_count 1 vocabularies.
struct SmallWorld {
  Fixture fixture;
  TextResources resources;
};

inline SmallWorld small_world(std::size_t pairs = 16, std::size_t video_dim = 16,
                              std::size_t word_dim = 8, std::uint64_t seed = 3) {
  FixtureOptions o;
  o.pairs = pairs;
  o.video_dim = video_dim;
  o.w2v_dim = word_dim;
  o.bert_dim = word_dim;
  o.seed = seed;
  SmallWorld w{make_fixture(o), {}};
  const auto corpus = w.fixture.captions.corpus();
  w.resources.bow_vocab = std::make_shared<Vocabulary>(Vocabulary::build(corpus, 1, false));
  w.resources.seq_vocab = std::make_shared<Vocabulary>(Vocabulary::build(corpus, 1, true));
  w.resources.w2v = std::make_shared<EmbeddingTable>(w.fixture.w2v);
  w.resources.precomputed = std::make_shared<PrecomputedStore>(w.fixture.precomputed);
  return w;
}

inline ModelConfig small_config(std::vector<EncoderKind> encoders, FusionMode fusion,
                                std::size_t video_dim = 16, std::size_t space_dim = 8) {
  ModelConfig c;
  c.fusion = fusion;
  c.encoders = std::move(encoders);
  c.video_dim = video_dim;
  c.space_dim = space_dim;
  c.gru_hidden = 5;
  c.gru_input = 8;
  c.transform_dim = 6;
  return c;
}

}  // namespace avs::test
