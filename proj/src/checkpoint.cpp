#include "avs/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace avs {

namespace {

constexpr const char* kMagicLine = "AVS-CHECKPOINT";

bool uses(const std::vector<EncoderKind>& encoders, std::initializer_list<EncoderKind> kinds) {
  for (auto e : encoders) {
    if (std::find(kinds.begin(), kinds.end(), e) != kinds.end()) return true;
  }
  return false;
}

std::string join_sizes(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DataError("checkpoint header field " + key + " has bad value '" + text + "'");
  }
  return v;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& text, char sep) {
  std::vector<std::size_t> out;
  for (const auto& part : split(text, sep)) out.push_back(to_size(key, part));
  return out;
}

std::filesystem::path parent_of(const std::string& path) {
  auto p = std::filesystem::absolute(path).parent_path();
  return p.empty() ? std::filesystem::current_path() : p;
}

ResourceRefs relative_refs(const ResourceRefs& refs, const std::filesystem::path& base) {
  auto rel = [&](const std::string& p) {
    return p.empty() ? p : std::filesystem::proximate(std::filesystem::absolute(p), base).generic_string();
  };
  return {rel(refs.bow_vocab), rel(refs.seq_vocab), rel(refs.embeddings), rel(refs.precomputed)};
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

void write_floats(std::ostream& out, const float* data, std::size_t n) {
  std::vector<unsigned char> bytes(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void read_floats(std::istream& in, float* data, std::size_t n, const std::string& name) {
  std::vector<unsigned char> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw DataError("checkpoint truncated in tensor " + name + ": expected " +
                    std::to_string(bytes.size()) + " bytes, got " + std::to_string(in.gcount()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&data[i], &bits, 4);
  }
}

}  // namespace

TextResources load_resources(const ResourceRefs& refs, const std::vector<EncoderKind>& encoders) {
  TextResources res;
  auto require = [](const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string("encoders need ") + what);
    return path;
  };
  if (uses(encoders, {EncoderKind::kBow})) {
    res.bow_vocab = std::make_shared<Vocabulary>(
        Vocabulary::load(require(refs.bow_vocab, "a bag-of-words vocabulary")));
  }
  if (uses(encoders, {EncoderKind::kGru, EncoderKind::kBiGru})) {
    res.seq_vocab = std::make_shared<Vocabulary>(
        Vocabulary::load(require(refs.seq_vocab, "a sequential vocabulary")));
  }
  if (uses(encoders, {EncoderKind::kW2v})) {
    res.w2v = std::make_shared<EmbeddingTable>(
        EmbeddingTable::load(require(refs.embeddings, "word embeddings")));
  } else if (!refs.embeddings.empty() && uses(encoders, {EncoderKind::kGru, EncoderKind::kBiGru})) {
    // Only used to initialize recurrent embeddings.
    res.w2v = std::make_shared<EmbeddingTable>(EmbeddingTable::load(refs.embeddings));
  }
  if (uses(encoders, {EncoderKind::kPrecomputed})) {
    res.precomputed = std::make_shared<PrecomputedStore>(
        PrecomputedStore::load(require(refs.precomputed, "precomputed sentence vectors")));
  }
  return res;
}

void write_checkpoint(std::ostream& out, const MultiSpaceModel<float>& model,
                      const ResourceRefs& refs) {
  const auto& c = model.config;
  std::vector<std::size_t> encoder_dims, space_dims;
  for (std::size_t e = 0; e < c.encoders.size(); ++e) encoder_dims.push_back(model.encoder_dim(e));
  std::string inputs;
  for (std::size_t s = 0; s < model.params.spaces.size(); ++s) {
    if (s) inputs += ';';
    inputs += join_sizes(model.params.spaces[s].inputs, '+');
    space_dims.push_back(model.params.spaces[s].text.output_dim());
  }
  out << kMagicLine << '\n'
      << "format_version=" << kCheckpointVersion << '\n'
      << "fusion=" << fusion_name(c.fusion) << '\n'
      << "k=" << c.encoders.size() << '\n'
      << "encoders=" << join_encoders(c.encoders) << '\n'
      << "video_dim=" << c.video_dim << '\n'
      << "space_dim=" << c.space_dim << '\n'
      << "space_dims=" << join_sizes(space_dims, ',') << '\n'
      << "encoder_dims=" << join_sizes(encoder_dims, ',') << '\n'
      << "space_inputs=" << inputs << '\n'
      << "gru_hidden=" << c.gru_hidden << '\n'
      << "gru_input=" << c.gru_input << '\n'
      << "transform_dim=" << c.transform_dim << '\n'
      << "ref.bow_vocab=" << refs.bow_vocab << '\n'
      << "ref.seq_vocab=" << refs.seq_vocab << '\n'
      << "ref.embeddings=" << refs.embeddings << '\n'
      << "ref.precomputed=" << refs.precomputed << '\n';
  model.params.for_each_tensor([&](const std::string& name, const auto& t) {
    out << "tensor=" << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  });
  out << "end_header\n";
  model.params.for_each_tensor([&](const std::string&, const auto& t) {
    write_floats(out, t.data(), static_cast<std::size_t>(t.size()));
  });
  if (!out) throw DataError("failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const MultiSpaceModel<float>& model,
                     const ResourceRefs& refs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(out, model, relative_refs(refs, parent_of(path)));
}

CheckpointHeader read_checkpoint_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagicLine) throw DataError("not a checkpoint file");
  std::map<std::string, std::string> fields;
  CheckpointHeader h;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed checkpoint header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "tensor") {
      std::istringstream ts(value);
      CheckpointHeader::Tensor t;
      if (!(ts >> t.name >> t.rows >> t.cols)) throw DataError("malformed tensor line '" + line + "'");
      h.tensors.push_back(t);
    } else {
      fields[key] = value;
    }
  }
  if (!ended) throw DataError("checkpoint header is not terminated");
  auto get = [&](const char* key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataError(std::string("checkpoint header lacks ") + key);
    return it->second;
  };
  h.version = static_cast<unsigned>(to_size("format_version", get("format_version")));
  if (h.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(h.version));
  }
  try {
    h.config.fusion = parse_fusion(get("fusion"));
    h.config.encoders = parse_encoder_list(get("encoders"));
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  if (to_size("k", get("k")) != h.config.encoders.size()) {
    throw DataError("checkpoint header k disagrees with the encoder list");
  }
  h.config.video_dim = to_size("video_dim", get("video_dim"));
  h.config.space_dim = to_size("space_dim", get("space_dim"));
  h.config.gru_hidden = to_size("gru_hidden", get("gru_hidden"));
  h.config.gru_input = to_size("gru_input", get("gru_input"));
  h.config.transform_dim = to_size("transform_dim", get("transform_dim"));
  h.encoder_dims = to_sizes("encoder_dims", get("encoder_dims"), ',');
  h.space_dims = to_sizes("space_dims", get("space_dims"), ',');
  for (const auto& part : split(get("space_inputs"), ';')) {
    h.space_inputs.push_back(to_sizes("space_inputs", part, '+'));
  }
  h.refs = {get("ref.bow_vocab"), get("ref.seq_vocab"), get("ref.embeddings"), get("ref.precomputed")};
  return h;
}

namespace {

MultiSpaceModel<float> read_body(std::istream& in, const CheckpointHeader& h,
                                 const TextResources& resources) {
  Rng rng(0);
  auto model = MultiSpaceModel<float>::create(h.config, resources, rng);
  for (std::size_t e = 0; e < h.config.encoders.size(); ++e) {
    if (e >= h.encoder_dims.size() || model.encoder_dim(e) != h.encoder_dims[e]) {
      throw DataError("encoder " + std::string(encoder_name(h.config.encoders[e])) +
                      " resources do not match the checkpoint (dimension " +
                      std::to_string(model.encoder_dim(e)) + ")");
    }
  }
  if (h.space_inputs.size() != model.params.spaces.size()) {
    throw DataError("checkpoint space layout does not match its fusion mode");
  }
  for (std::size_t s = 0; s < h.space_inputs.size(); ++s) {
    model.params.spaces[s].inputs = h.space_inputs[s];
  }
  std::size_t index = 0;
  model.params.for_each_tensor([&](const std::string& name, auto& t) {
    if (index >= h.tensors.size()) throw DataError("checkpoint lists too few tensors");
    const auto& decl = h.tensors[index++];
    if (decl.name != name || decl.rows != static_cast<std::size_t>(t.rows()) ||
        decl.cols != static_cast<std::size_t>(t.cols())) {
      throw DataError("checkpoint tensor " + decl.name + " (" + std::to_string(decl.rows) + "x" +
                      std::to_string(decl.cols) + ") does not match expected " + name + " (" +
                      std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")");
    }
  });
  if (index != h.tensors.size()) throw DataError("checkpoint lists too many tensors");
  model.params.for_each_tensor([&](const std::string& name, auto& t) {
    read_floats(in, t.data(), static_cast<std::size_t>(t.size()), name);
  });
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint");
  return model;
}

}  // namespace

MultiSpaceModel<float> read_checkpoint(std::istream& in, const TextResources& resources) {
  const auto header = read_checkpoint_header(in);
  return read_body(in, header, resources);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ResourceRefs& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  const auto header = read_checkpoint_header(in);
  const auto base = parent_of(path);
  ResourceRefs refs{resolve(header.refs.bow_vocab, base), resolve(header.refs.seq_vocab, base),
                    resolve(header.refs.embeddings, base), resolve(header.refs.precomputed, base)};
  auto pick = [](std::string& dst, const std::string& src) {
    if (!src.empty()) dst = src;
  };
  pick(refs.bow_vocab, overrides.bow_vocab);
  pick(refs.seq_vocab, overrides.seq_vocab);
  pick(refs.embeddings, overrides.embeddings);
  pick(refs.precomputed, overrides.precomputed);
  if (std::find(header.config.encoders.begin(), header.config.encoders.end(), EncoderKind::kW2v) ==
      header.config.encoders.end()) {
    refs.embeddings.clear();
  }
  auto resources = load_resources(refs, header.config.encoders);
  return {read_body(in, header, resources), refs};
}

}  // namespace avs
