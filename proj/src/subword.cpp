#include "span2d/subword.hpp"

#include "span2d/errors.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace span2d {

namespace {

constexpr char kRankSeparator = '\x1f';
constexpr std::string_view kAlphabetTag = "!alphabet";

std::string rank_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key.push_back(kRankSeparator);
  key.append(right);
  return key;
}

// Length of the UTF-8 sequence starting at text[i] and its code point; malformed
// input decodes as a single byte.
std::pair<std::size_t, char32_t> decode_utf8(std::string_view text, std::size_t i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  char32_t cp = lead;
  if (lead >= 0xF0 && lead < 0xF8) {
    len = 4;
    cp = lead & 0x07;
  } else if (lead >= 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if (lead >= 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  }
  if (len == 1 || i + len > text.size()) return {1, lead};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) return {1, lead};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {len, cp};
}

bool is_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x3003) || cp == 0xA1 || cp == 0xAB || cp == 0xBB ||
         cp == 0xBF;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

// Appends the pieces of `source[word]` to `seq`; offsets index `source`.
void append_word(const MergeTable& table, std::string_view source, CharSpan word, TokenSeq& seq) {
  std::size_t offset = word.begin;
  bool first = true;
  for (std::string& piece : table.segment(source.substr(word.begin, word.end - word.begin))) {
    seq.ids.push_back(table.id_of(piece));
    seq.continuation.push_back(!first);
    seq.spans.push_back({offset, offset + piece.size()});
    offset += piece.size();
    seq.pieces.push_back(std::move(piece));
    first = false;
  }
}

void append_special(TokenSeq& seq, std::int32_t id, std::string_view token) {
  seq.ids.push_back(id);
  seq.continuation.push_back(false);
  seq.spans.push_back({});
  seq.pieces.emplace_back(token);
}

}  // namespace

MergeTable::MergeTable(std::vector<std::string> alphabet, std::vector<Merge> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());

  for (std::string_view token : {kClsToken, kSepToken, kPadToken, kUnkToken}) {
    ids_.emplace(std::string(token), static_cast<std::int32_t>(vocab_.size()));
    vocab_.emplace_back(token);
  }
  auto add_piece = [this](const std::string& piece) {
    if (ids_.try_emplace(piece, static_cast<std::int32_t>(vocab_.size())).second) {
      vocab_.push_back(piece);
    }
  };
  for (const std::string& c : alphabet_) {
    if (c.empty()) throw DataError("merge table: empty alphabet entry");
    add_piece(c);
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const Merge& m = merges_[r];
    if (!ids_.contains(m.left) || !ids_.contains(m.right) || ids_.at(m.left) < kReservedCount ||
        ids_.at(m.right) < kReservedCount) {
      throw DataError("merge table: merge " + std::to_string(r + 1) + " (" + m.left + ", " +
                      m.right + ") uses a piece not defined earlier");
    }
    rank_.try_emplace(rank_key(m.left, m.right), r);
    add_piece(m.left + m.right);
  }
}

std::int32_t MergeTable::id_of(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? kUnkId : it->second;
}

std::vector<std::string> MergeTable::segment(std::string_view word) const {
  std::vector<std::string> symbols = split_chars(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(rank_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const Merge& m = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == m.left && symbols[i + 1] == m.right) {
        next.push_back(symbols[i] + symbols[i + 1]);
        i += 2;
      } else {
        next.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(next);
  }
  return symbols;
}

std::string MergeTable::serialize() const {
  std::string out(kMergeFileVersion);
  out += '\n';
  out += kAlphabetTag;
  for (const std::string& c : alphabet_) {
    out += '\t';
    out += c;
  }
  out += '\n';
  for (const Merge& m : merges_) {
    out += m.left;
    out += '\t';
    out += m.right;
    out += '\n';
  }
  return out;
}

MergeTable MergeTable::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty() || lines[0] != kMergeFileVersion) {
    throw DataError("merge file: expected version line '" + std::string(kMergeFileVersion) + "'");
  }
  std::vector<std::string> alphabet;
  std::vector<Merge> merges;
  bool have_alphabet = false;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (n == 1 && fields[0] == kAlphabetTag) {
      alphabet.assign(fields.begin() + 1, fields.end());
      have_alphabet = true;
      continue;
    }
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError("merge file line " + std::to_string(n + 1) + ": expected left<TAB>right");
    }
    merges.push_back({std::move(fields[0]), std::move(fields[1])});
  }
  if (!have_alphabet) {
    // External tables without an alphabet line: every character used by a merge.
    for (const Merge& m : merges) {
      for (auto& c : split_chars(m.left)) alphabet.push_back(std::move(c));
      for (auto& c : split_chars(m.right)) alphabet.push_back(std::move(c));
    }
  }
  return {std::move(alphabet), std::move(merges)};
}

void MergeTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write merge file " + path.string());
  out << serialize();
  if (!out) throw DataError("failed writing merge file " + path.string());
}

MergeTable MergeTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read merge file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::uint64_t MergeTable::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool TokenSeq::is_special(std::size_t i) const {
  return ids[i] == kClsId || ids[i] == kSepId || ids[i] == kPadId || spans[i].sentinel();
}

bool TokenSeq::word_final(std::size_t i) const {
  if (is_special(i)) return false;
  return i + 1 >= ids.size() || !continuation[i + 1];
}

std::vector<std::string> split_chars(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const auto [len, cp] = decode_utf8(word, i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<CharSpan> split_words(std::string_view text) {
  std::vector<CharSpan> words;
  std::size_t word_start = CharSpan::kNone;
  for (std::size_t i = 0; i < text.size();) {
    const auto [len, cp] = decode_utf8(text, i);
    if (is_space(cp) || is_punct(cp)) {
      if (word_start != CharSpan::kNone) words.push_back({word_start, i});
      word_start = CharSpan::kNone;
      if (is_punct(cp)) words.push_back({i, i + len});
    } else if (word_start == CharSpan::kNone) {
      word_start = i;
    }
    i += len;
  }
  if (word_start != CharSpan::kNone) words.push_back({word_start, text.size()});
  return words;
}

MergeTable train_bpe(std::span<const std::string> corpus, std::size_t num_merges) {
  if (corpus.empty()) throw std::invalid_argument("train_bpe: empty corpus");

  std::map<std::string, std::size_t> word_counts;
  for (const std::string& line : corpus) {
    for (const CharSpan& w : split_words(line)) ++word_counts[line.substr(w.begin, w.end - w.begin)];
  }
  std::set<std::string> alphabet;
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [word, count] : word_counts) {
    auto symbols = split_chars(word);
    alphabet.insert(symbols.begin(), symbols.end());
    words.emplace_back(std::move(symbols), count);
  }

  std::vector<Merge> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pair_counts[{symbols[i], symbols[i + 1]}] += count;
    }
    if (pair_counts.empty()) break;
    // std::map iterates in (left, right) order, so the first maximum wins ties.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    for (auto& [symbols, count] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(std::move(symbols[i]));
          ++i;
        }
      }
      symbols = std::move(next);
    }
    merges.push_back({left, right});
  }
  return {std::vector<std::string>(alphabet.begin(), alphabet.end()), std::move(merges)};
}

TokenSeq encode(const MergeTable& table, std::string_view query, std::string_view sentence,
                std::size_t cap) {
  if (query.empty() || sentence.empty()) throw std::invalid_argument("encode: empty query or sentence");
  TokenSeq seq;
  seq.query = std::string(query);
  seq.text = std::string(sentence);

  append_special(seq, kClsId, kClsToken);
  for (const CharSpan& w : split_words(query)) append_word(table, query, w, seq);
  append_special(seq, kSepId, kSepToken);
  seq.query_length = seq.size() - 1;
  if (seq.size() + 1 > cap) {
    throw DataError("encode: query needs " + std::to_string(seq.size() + 1) +
                    " pieces with separators, cap is " + std::to_string(cap));
  }

  const auto words = split_words(sentence);
  for (std::size_t k = 0; k < words.size(); ++k) {
    const std::size_t n = table.segment(sentence.substr(words[k].begin, words[k].end - words[k].begin)).size();
    if (seq.size() + n + 1 > cap) {
      seq.truncated_words = words.size() - k;
      break;
    }
    append_word(table, sentence, words[k], seq);
  }
  append_special(seq, kSepId, kSepToken);
  return seq;
}

std::string decode_span(const TokenSeq& seq, std::size_t start, std::size_t end) {
  if (start > end) throw std::out_of_range("decode_span: start after end");
  for (std::size_t i : {start, end}) {
    if (i >= seq.size() || !seq.in_text(i) || seq.is_special(i)) {
      throw std::out_of_range("decode_span: position " + std::to_string(i) +
                              " is not a text piece");
    }
  }
  const std::size_t b = seq.spans[start].begin;
  return seq.text.substr(b, seq.spans[end].end - b);
}

}  // namespace span2d
