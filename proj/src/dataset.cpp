#include "span2d/dataset.hpp"

#include "span2d/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace span2d {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

void QuerySpec::add(std::string type, std::string query) {
  if (type.empty()) throw DataError("query spec: empty entity type");
  if (query.empty()) throw DataError("query spec: empty query for type '" + type + "'");
  if (contains(type)) throw DataError("query spec: duplicate type '" + type + "'");
  entries_.emplace_back(std::move(type), std::move(query));
}

bool QuerySpec::contains(std::string_view type) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == type; });
}

const std::string& QuerySpec::query_for(std::string_view type) const {
  for (const auto& [t, q] : entries_) {
    if (t == type) return q;
  }
  throw DataError("no query declared for entity type '" + std::string(type) + "'");
}

QuerySpec QuerySpec::parse(std::string_view json_text) {
  ordered_json doc;
  std::vector<std::string> top_keys;
  auto track_keys = [&](int depth, nlohmann::json::parse_event_t event, ordered_json& parsed) {
    if (event == nlohmann::json::parse_event_t::key && depth == 1) top_keys.push_back(parsed.get<std::string>());
    return true;
  };
  try {
    doc = ordered_json::parse(json_text, track_keys);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("query file: ") + e.what());
  }
  std::sort(top_keys.begin(), top_keys.end());
  if (auto dup = std::adjacent_find(top_keys.begin(), top_keys.end()); dup != top_keys.end()) {
    throw DataError("query spec: duplicate type '" + *dup + "'");
  }
  if (!doc.is_object()) throw DataError("query file: expected a JSON object of type -> keywords");
  QuerySpec spec;
  for (const auto& [type, query] : doc.items()) {
    if (!query.is_string()) throw DataError("query file: value for '" + type + "' is not a string");
    spec.add(type, query.get<std::string>());
  }
  if (spec.empty()) throw DataError("query file: no entity types declared");
  return spec;
}

QuerySpec QuerySpec::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string QuerySpec::to_json() const {
  ordered_json doc = ordered_json::object();
  for (const auto& [t, q] : entries_) doc[t] = q;
  return doc.dump(2) + "\n";
}

void QuerySpec::save(const std::filesystem::path& path) const { write_file(path, to_json()); }

std::vector<DatasetSample> parse_dataset(std::string_view jsonl, std::string_view source) {
  std::vector<DatasetSample> samples;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < jsonl.size();) {
    std::size_t nl = jsonl.find('\n', start);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const std::string_view line = jsonl.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
      throw DataError(where + ": record needs a string field 'text'");
    }
    DatasetSample sample;
    sample.text = rec["text"].get<std::string>();
    if (rec.contains("entities")) {
      const auto& ents = rec["entities"];
      if (!ents.is_array()) throw DataError(where + ": 'entities' must be an array");
      for (const auto& ent : ents) {
        if (!ent.is_object() || !ent.contains("type") || !ent["type"].is_string() ||
            !ent.contains("start") || !ent["start"].is_number_unsigned() || !ent.contains("end") ||
            !ent["end"].is_number_unsigned()) {
          throw DataError(where + ": entity needs string 'type' and non-negative 'start'/'end'");
        }
        GoldEntity g{ent["type"].get<std::string>(), ent["start"].get<std::size_t>(),
                     ent["end"].get<std::size_t>()};
        if (g.end <= g.start) {
          throw DataError(where + ": entity '" + g.type + "' has end " + std::to_string(g.end) +
                          " <= start " + std::to_string(g.start));
        }
        if (g.end > sample.text.size()) {
          throw DataError(where + ": entity '" + g.type + "' offset " + std::to_string(g.end) +
                          " beyond text length " + std::to_string(sample.text.size()));
        }
        sample.entities.push_back(std::move(g));
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<DatasetSample> load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

std::string dataset_line(const DatasetSample& sample) {
  ordered_json rec;
  rec["text"] = sample.text;
  rec["entities"] = ordered_json::array();
  for (const GoldEntity& g : sample.entities) {
    rec["entities"].push_back({{"type", g.type}, {"start", g.start}, {"end", g.end}});
  }
  return rec.dump();
}

void write_dataset(const std::filesystem::path& path, std::span<const DatasetSample> samples) {
  std::string out;
  for (const DatasetSample& s : samples) out += dataset_line(s) + "\n";
  write_file(path, out);
}

std::vector<QueryUnit> expand_samples(std::span<const DatasetSample> samples, const QuerySpec& queries) {
  for (const DatasetSample& s : samples) {
    for (const GoldEntity& g : s.entities) {
      if (!queries.contains(g.type)) throw DataError("unknown entity type '" + g.type + "'");
    }
  }
  std::vector<QueryUnit> units;
  units.reserve(samples.size() * queries.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& [type, query] : queries.entries()) {
      QueryUnit u{i, type, query, {}};
      for (const GoldEntity& g : samples[i].entities) {
        if (g.type == type) u.entities.push_back(g);
      }
      units.push_back(std::move(u));
    }
  }
  return units;
}

}  // namespace span2d
