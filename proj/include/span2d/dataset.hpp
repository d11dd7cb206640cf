#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace span2d {

/// Entity type -> keyword query, in declaration order.
class QuerySpec {
 public:
  /// Throws DataError on an empty type/query or a repeated type.
  void add(std::string type, std::string query);
  bool contains(std::string_view type) const;
  const std::string& query_for(std::string_view type) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// JSON object {"Type": "keywords", ...}; key order is preserved.
  static QuerySpec parse(std::string_view json_text);
  static QuerySpec load(const std::filesystem::path& path);
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const QuerySpec&, const QuerySpec&) = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Byte offsets into the sentence, end exclusive.
struct GoldEntity {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const GoldEntity&, const GoldEntity&) = default;
};

struct DatasetSample {
  std::string text;
  std::vector<GoldEntity> entities;
  friend bool operator==(const DatasetSample&, const DatasetSample&) = default;
};

/// One JSON object per line: {"text": ..., "entities": [{"type", "start", "end"}, ...]}.
/// Blank lines are skipped. DataError names the line or record on malformed input.
std::vector<DatasetSample> load_dataset(const std::filesystem::path& path);
std::vector<DatasetSample> parse_dataset(std::string_view jsonl, std::string_view source = "<memory>");
void write_dataset(const std::filesystem::path& path, std::span<const DatasetSample> samples);
std::string dataset_line(const DatasetSample& sample);

/// One (sentence, entity type) question; entities are that type only and may be empty.
struct QueryUnit {
  std::size_t sample = 0;
  std::string type;
  std::string query;
  std::vector<GoldEntity> entities;
};

/// |samples| × |types| units. DataError if a gold entity's type has no query.
std::vector<QueryUnit> expand_samples(std::span<const DatasetSample> samples, const QuerySpec& queries);

}  // namespace span2d
