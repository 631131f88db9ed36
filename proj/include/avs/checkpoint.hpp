#pragma once

#include "avs/spaces.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace avs {

inline constexpr unsigned kCheckpointVersion = 1;

/// Files the frozen text resources were loaded from. Empty means unused.
struct ResourceRefs {
  std::string bow_vocab;
  std::string seq_vocab;
  std::string embeddings;
  std::string precomputed;
};

/// Loads whatever the encoder list needs. Missing required refs are a UsageError.
TextResources load_resources(const ResourceRefs& refs, const std::vector<EncoderKind>& encoders);

/// Text header (`AVS-CHECKPOINT`, key=value lines, one `tensor=name rows cols`
/// line per tensor, `end_header`), then the tensors as little-endian float32
/// in the same order.
void write_checkpoint(std::ostream& out, const MultiSpaceModel<float>& model,
                      const ResourceRefs& refs);
/// Relative refs are written relative to the checkpoint's directory.
void save_checkpoint(const std::string& path, const MultiSpaceModel<float>& model,
                     const ResourceRefs& refs);

struct CheckpointHeader {
  unsigned version = 0;
  ModelConfig config;
  std::vector<std::size_t> encoder_dims;
  std::vector<std::size_t> space_dims;
  std::vector<std::vector<std::size_t>> space_inputs;
  ResourceRefs refs;
  struct Tensor {
    std::string name;
    std::size_t rows = 0, cols = 0;
  };
  std::vector<Tensor> tensors;
};

CheckpointHeader read_checkpoint_header(std::istream& in);

/// Rebuilds the model around `resources`, checking every tensor name and shape.
MultiSpaceModel<float> read_checkpoint(std::istream& in, const TextResources& resources);

struct LoadedCheckpoint {
  MultiSpaceModel<float> model;
  ResourceRefs refs;  // resolved paths that were used
};

/// Non-empty fields of `overrides` replace the stored refs.
LoadedCheckpoint load_checkpoint(const std::string& path, const ResourceRefs& overrides = {});

}  // namespace avs
