#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace span2d {

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";

enum ReservedId : std::int32_t { kClsId = 0, kSepId = 1, kPadId = 2, kUnkId = 3 };
inline constexpr std::int32_t kReservedCount = 4;

inline constexpr std::string_view kMergeFileVersion = "span2d-bpe v1";
inline constexpr std::size_t kDefaultSequenceCap = 64;

struct Merge {
  std::string left;
  std::string right;
  friend bool operator==(const Merge&, const Merge&) = default;
};

/// Learned BPE merges plus the base alphabet. Immutable once built.
///
/// Vocabulary ids: the four reserved tokens, then the alphabet in sorted order, then
/// each merged piece in merge order (a piece produced twice keeps its first id).
class MergeTable {
 public:
  MergeTable() : MergeTable({}, {}) {}
  MergeTable(std::vector<std::string> alphabet, std::vector<Merge> merges);

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::vector<Merge>& merges() const { return merges_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::string& piece(std::int32_t id) const { return vocab_.at(static_cast<std::size_t>(id)); }
  /// kUnkId when the piece is not in the vocabulary.
  std::int32_t id_of(std::string_view piece) const;

  /// Splits one pre-tokenised word into pieces by applying merges in training order.
  std::vector<std::string> segment(std::string_view word) const;

  std::string serialize() const;
  static MergeTable parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static MergeTable load(const std::filesystem::path& path);

  /// FNV-1a over the serialized form; identifies the vocabulary in checkpoints.
  std::uint64_t fingerprint() const;

  friend bool operator==(const MergeTable& a, const MergeTable& b) {
    return a.alphabet_ == b.alphabet_ && a.merges_ == b.merges_;
  }

 private:
  std::vector<std::string> alphabet_;
  std::vector<Merge> merges_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::unordered_map<std::string, std::size_t> rank_;  // key: left + '\x1f' + right
};

/// Byte range [begin, end) into the source string.
struct CharSpan {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t begin = kNone;
  std::size_t end = kNone;
  bool sentinel() const { return begin == kNone; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

/// [CLS] query [SEP] text [SEP], one entry per piece in every vector.
/// Query spans index `query`, text spans index `text`, special tokens carry sentinels.
struct TokenSeq {
  std::vector<std::int32_t> ids;
  std::vector<std::string> pieces;
  std::vector<bool> continuation;
  std::vector<CharSpan> spans;
  std::size_t query_length = 0;  // query pieces plus the first [SEP]
  std::string query;
  std::string text;
  std::size_t truncated_words = 0;

  std::size_t size() const { return ids.size(); }
  std::size_t text_begin() const { return 1 + query_length; }
  std::size_t text_end() const { return ids.size() - 1; }  // index of the final [SEP]
  bool is_special(std::size_t i) const;
  bool in_text(std::size_t i) const { return i >= text_begin() && i < text_end(); }
  bool word_initial(std::size_t i) const { return !is_special(i) && !continuation[i]; }
  bool word_final(std::size_t i) const;

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// Whitespace split with punctuation isolated into single-character words.
/// Returns byte ranges into `text`.
std::vector<CharSpan> split_words(std::string_view text);

/// UTF-8 code points of `word` as separate strings (invalid bytes stand alone).
std::vector<std::string> split_chars(std::string_view word);

/// Greedy frequency BPE. Ties break on the lexicographically smallest (left, right).
/// Stops early when no adjacent pair remains. Throws std::invalid_argument on an empty corpus.
MergeTable train_bpe(std::span<const std::string> corpus, std::size_t num_merges);

/// Assembles [CLS] query [SEP] sentence [SEP]. Whole trailing words of the sentence are
/// dropped to respect `cap`; the query is never cut (DataError if it cannot fit).
TokenSeq encode(const MergeTable& table, std::string_view query, std::string_view sentence,
                std::size_t cap = kDefaultSequenceCap);

/// Original sentence characters from the start of piece `start` to the end of piece `end`.
/// Throws std::out_of_range for positions outside the text region or on special tokens.
std::string decode_span(const TokenSeq& seq, std::size_t start, std::size_t end);

}  // namespace span2d
