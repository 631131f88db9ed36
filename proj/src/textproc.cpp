#include "avs/textproc.hpp"

#include "avs/common.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace avs {

namespace detail {
extern const std::string_view kStopwordData;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  for (char c : text) {
    const auto byte = static_cast<unsigned char>(c);
    if (std::isalnum(byte)) {
      current.push_back(static_cast<char>(std::tolower(byte)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

StopwordList parse_stopwords(std::istream& in) {
  StopwordList words;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    words.insert(line.substr(b, e - b + 1));
  }
  return words;
}

const StopwordList& default_stopwords() {
  static const StopwordList words = [] {
    std::istringstream in{std::string(detail::kStopwordData)};
    return parse_stopwords(in);
  }();
  return words;
}

std::vector<float> BowVector::dense() const {
  std::vector<float> out(dim, 0.0f);
  for (const auto& [index, count] : entries) out[index] = count;
  return out;
}

void Vocabulary::add(std::string word, std::size_t count) {
  index_.emplace(word, words_.size());
  words_.push_back(std::move(word));
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(std::span<const TokenSeq> corpus, std::size_t min_count,
                             bool for_sequential, const StopwordList& stopwords) {
  if (min_count < 1) throw UsageError("min_count must be at least 1");

  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) {
      auto [it, inserted] = counts.try_emplace(token, 0);
      if (inserted) order.push_back(token);
      ++it->second;
    }
  }

  Vocabulary vocab;
  vocab.includes_stopwords_ = for_sequential;
  if (for_sequential) {
    vocab.special_tokens_.emplace_back(kUnknownToken);
    vocab.add(std::string(kUnknownToken), 0);
  }
  for (const auto& word : order) {
    const std::size_t count = counts[word];
    if (count < min_count) continue;
    if (!for_sequential && stopwords.contains(word)) continue;
    if (word == kUnknownToken) continue;
    vocab.add(word, count);
  }
  if (vocab.size() == vocab.special_tokens_.size()) {
    throw DataError("vocabulary is empty after filtering (min_count=" +
                    std::to_string(min_count) + "); corpus unusable");
  }
  return vocab;
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::unknown_index() const {
  if (!is_sequential()) throw DataError("bag-of-words vocabulary has no <unk> token");
  return 0;
}

std::vector<std::size_t> Vocabulary::map_sequential(const TokenSeq& tokens) const {
  const std::size_t unk = unknown_index();
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& token : tokens) ids.push_back(index_of(token).value_or(unk));
  return ids;
}

void Vocabulary::save(std::ostream& out) const {
  out << words_.size() << '\n';
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i] << '\t' << i << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocabulary file is empty");
  std::size_t declared = 0;
  try {
    declared = std::stoul(line);
  } catch (const std::exception&) {
    throw DataError("vocabulary header is not a count: '" + line + "'");
  }

  Vocabulary vocab;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " is malformed");
    }
    std::string word = line.substr(0, tab1);
    std::size_t index = 0;
    std::size_t count = 0;
    try {
      index = std::stoul(line.substr(tab1 + 1, tab2 - tab1 - 1));
      count = std::stoul(line.substr(tab2 + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " has bad numbers");
    }
    if (index != vocab.size()) {
      throw DataError("vocabulary line " + std::to_string(line_no) +
                      ": index gap or disorder at '" + word + "'");
    }
    if (vocab.index_.contains(word)) {
      throw DataError("vocabulary repeats word '" + word + "'");
    }
    vocab.add(std::move(word), count);
  }
  if (vocab.size() != declared) {
    throw DataError("vocabulary declares " + std::to_string(declared) + " entries but has " +
                    std::to_string(vocab.size()));
  }
  if (vocab.size() > 0 && vocab.words_[0] == kUnknownToken) {
    vocab.special_tokens_.emplace_back(kUnknownToken);
    vocab.includes_stopwords_ = true;
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary " + path);
  save(out);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  return load(in);
}

BowVector encode_bow(const TokenSeq& sentence, const Vocabulary& vocab) {
  if (vocab.is_sequential()) {
    throw DataError("bag-of-words encoding needs the non-sequential vocabulary");
  }
  std::map<std::size_t, float> counts;
  for (const auto& token : sentence) {
    if (auto index = vocab.index_of(token)) counts[*index] += 1.0f;
  }
  BowVector bow;
  bow.dim = vocab.size();
  bow.entries.assign(counts.begin(), counts.end());
  return bow;
}

}  // namespace avs
