#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace avs {

/// Lowercase word tokens of one sentence; never contains empty strings.
using TokenSeq = std::vector<std::string>;

using StopwordList = std::unordered_set<std::string>;

inline constexpr std::string_view kUnknownToken = "<unk>";
inline constexpr std::size_t kDefaultMinCount = 5;

/// Lowercases and splits on every non-alphanumeric byte.
TokenSeq tokenize(std::string_view text);

/// The English stopword list compiled into the library.
const StopwordList& default_stopwords();

/// One word per line; blank lines ignored.
StopwordList parse_stopwords(std::istream& in);

/// Sparse bag-of-words: (vocabulary index, count) sorted by index.
struct BowVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, float>> entries;

  std::vector<float> dense() const;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Indices follow first occurrence in the corpus. A sequential vocabulary
  /// keeps stopwords and puts `<unk>` at index 0; the bag-of-words one drops
  /// stopwords. Throws DataError when nothing survives the filters.
  static Vocabulary build(std::span<const TokenSeq> corpus, std::size_t min_count,
                          bool for_sequential,
                          const StopwordList& stopwords = default_stopwords());

  std::size_t size() const { return words_.size(); }
  std::optional<std::size_t> index_of(std::string_view word) const;
  const std::string& word(std::size_t index) const { return words_.at(index); }
  std::size_t count(std::size_t index) const { return counts_.at(index); }

  bool includes_stopwords() const { return includes_stopwords_; }
  const std::vector<std::string>& special_tokens() const { return special_tokens_; }
  bool is_sequential() const { return !special_tokens_.empty(); }

  /// Index of `<unk>`; throws DataError on a bag-of-words vocabulary.
  std::size_t unknown_index() const;

  /// Maps tokens to indices, sending misses to `<unk>`.
  std::vector<std::size_t> map_sequential(const TokenSeq& tokens) const;

  /// Header line `m`, then `word<TAB>index<TAB>count` per entry.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(std::string word, std::size_t count);

  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  bool includes_stopwords_ = false;
  std::vector<std::string> special_tokens_;
};

/// Occurrence count of each vocabulary word; out-of-vocabulary tokens are ignored.
BowVector encode_bow(const TokenSeq& sentence, const Vocabulary& vocab);

}  // namespace avs
