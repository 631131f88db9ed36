#pragma once

#include "avs/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace avs {

inline constexpr std::size_t kDefaultTopN = 1000;
inline constexpr const char* kBowVocabFile = "bow_vocab.txt";
inline constexpr const char* kSeqVocabFile = "seq_vocab.txt";

/// Runs one subcommand (`args[0]` is the program name). Returns 0 on success,
/// 1 on usage errors, 2 on data errors and 3 on numerical failures;
/// diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The gradient check used by `gradcheck` without data flags: a seeded
/// synthetic fixture, small encoders and a small common space.
struct FixtureCheckOptions {
  std::vector<EncoderKind> encoders = {EncoderKind::kBow, EncoderKind::kW2v, EncoderKind::kGru};
  FusionMode fusion = FusionMode::kSea;
  std::size_t space_dim = 8;
  std::size_t batch_size = 4;
  std::size_t gru_hidden = 6;
  std::size_t word_dim = 8;
  std::size_t video_dim = 16;
  GradCheckOptions check;
};

GradCheckReport fixture_gradient_check(const FixtureCheckOptions& options);

}  // namespace avs
