#pragma once

// Bibliographic records -> keyword filter -> dedupe -> title/abstract
// instruction pairs, with corpus statistics along the way.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmeval/error.hpp"
#include "llmeval/text.hpp"

namespace llmeval::corpus {

struct BibRecord {
  std::optional<std::string> id;
  std::string title;
  std::optional<std::string> abstract;
  std::optional<std::string> doc_type;
  std::optional<std::string> source;
  std::optional<int> year;

  friend bool operator==(const BibRecord&, const BibRecord&) = default;
};

struct InstructionPair {
  std::string input;   // title
  std::string output;  // abstract

  friend bool operator==(const InstructionPair&, const InstructionPair&) = default;
};

enum class MatchFields { Title, Abstract, Both };

inline MatchFields parse_match_fields(std::string_view name) {
  if (name == "title") return MatchFields::Title;
  if (name == "abstract") return MatchFields::Abstract;
  if (name == "both") return MatchFields::Both;
  throw Error(Errc::InvalidArgument, "unknown match field '" + std::string(name) + "' (expected title|abstract|both)");
}

struct KeywordFilter {
  std::vector<std::string> keywords;
  MatchFields match_fields = MatchFields::Both;
  bool case_sensitive = false;

  void validate() const {
    if (keywords.empty()) throw Error(Errc::InvalidArgument, "keyword filter needs at least one keyword");
    for (const auto& k : keywords) {
      if (text::trim(k).empty()) throw Error(Errc::InvalidArgument, "keyword phrases must be non-empty");
    }
  }
};

// The twelve phrases used for the renewable-energy corpus. The original
// search list was longer and is not published, so treat this as partial.
inline std::vector<std::string> default_keywords() {
  return {"sustainable energy", "wind energy",       "solar energy",      "photovoltaic power",
          "Hydrogen energy",    "biomass energy",    "geothermal energy", "energy storage",
          "photothermal",       "carbon neutrality", "Energy Internet",   "virtual power plant"};
}

inline KeywordFilter default_filter() { return {default_keywords(), MatchFields::Both, false}; }

struct CorpusStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_doc_type;
  std::vector<std::pair<std::string, std::size_t>> top_sources;
  std::size_t skipped_no_abstract = 0;
  std::size_t duplicates_removed = 0;
};

// ---------------------------------------------------------------------------
// Parsing

enum class Format { WosTab, Csv, Jsonl };

inline Format parse_format(std::string_view name) {
  if (name == "wos-tab") return Format::WosTab;
  if (name == "csv") return Format::Csv;
  if (name == "jsonl") return Format::Jsonl;
  throw Error(Errc::InvalidArgument, "unknown corpus format '" + std::string(name) + "' (expected wos-tab|csv|jsonl)");
}

struct Diagnostic {
  std::size_t line = 0;  // one-based line (record number for CSV)
  std::string message;
};

struct ParseResult {
  std::vector<BibRecord> records;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::optional<std::string> non_empty(std::string_view s) {
  auto t = text::trim(s);
  if (t.empty()) return std::nullopt;
  return std::string(t);
}

class RecordBuilder {
 public:
  void set(std::string_view field, std::string_view value) {
    if (field == "title") {
      rec_.title = text::collapse_whitespace(value);
    } else if (field == "abstract") {
      rec_.abstract = non_empty(value);
    } else if (field == "id") {
      rec_.id = non_empty(value);
    } else if (field == "doc_type") {
      rec_.doc_type = non_empty(value);
    } else if (field == "source") {
      rec_.source = non_empty(value);
    } else if (field == "year") {
      if (text::trim(value).empty()) return;
      auto y = text::parse_integer(value);
      if (!y || *y < 1800 || *y > 2100) {
        warnings_.push_back("ignoring year '" + std::string(text::trim(value)) + "'");
      } else {
        rec_.year = static_cast<int>(*y);
      }
    }
  }

  void finish(ParseResult& out, std::size_t line) {
    for (auto& w : warnings_) out.diagnostics.push_back({line, std::move(w)});
    if (rec_.title.empty()) {
      out.diagnostics.push_back({line, "record has no title; skipped"});
    } else {
      out.records.push_back(std::move(rec_));
    }
    rec_ = {};
    warnings_.clear();
  }

 private:
  BibRecord rec_;
  std::vector<std::string> warnings_;
};

inline std::string field_for_wos_tag(std::string_view tag) {
  if (tag == "TI") return "title";
  if (tag == "AB") return "abstract";
  if (tag == "DT") return "doc_type";
  if (tag == "SO") return "source";
  if (tag == "PY") return "year";
  if (tag == "UT") return "id";
  return {};
}

inline std::string read_all(std::istream& in) {
  if (!in) throw Error(Errc::UnreadableStream, "input stream is not readable");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::UnreadableStream, "read error on input stream");
  return data;
}

inline ParseResult parse_wos(std::string_view data) {
  auto lines = text::split_lines(data);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw Error(Errc::MissingRequiredColumn, "wos-tab input has no header row");
  std::vector<std::string> fields;
  bool has_title = false;
  for (const auto& tag : text::split(lines.front(), '\t')) {
    auto field = field_for_wos_tag(text::trim(tag));
    has_title = has_title || field == "title";
    fields.push_back(std::move(field));
  }
  if (!has_title) throw Error(Errc::MissingRequiredColumn, "wos-tab header has no TI column");

  ParseResult out;
  RecordBuilder builder;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line_no = i + 1;
    const auto& line = lines[i];
    if (text::trim(line).empty()) continue;
    if (!text::valid_utf8(line)) {
      out.diagnostics.push_back({line_no, "invalid UTF-8; skipped"});
      continue;
    }
    auto cells = text::split(line, '\t');
    if (cells.size() != fields.size()) {
      out.diagnostics.push_back({line_no, "expected " + std::to_string(fields.size()) + " tab-separated fields, got " +
                                              std::to_string(cells.size()) + "; skipped"});
      continue;
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!fields[c].empty()) builder.set(fields[c], cells[c]);
    }
    builder.finish(out, line_no);
  }
  return out;
}

inline const std::vector<std::string>& known_fields() {
  static const std::vector<std::string> fields{"id", "title", "abstract", "doc_type", "source", "year"};
  return fields;
}

inline ParseResult parse_csv_records(std::string_view data) {
  auto rows = text::parse_csv(data);
  if (rows.empty()) throw Error(Errc::MissingRequiredColumn, "CSV input has no header row");
  std::vector<std::string> fields;
  bool has_title = false;
  for (const auto& name : rows.front()) {
    auto field = text::fold_case(text::trim(name));
    if (std::find(known_fields().begin(), known_fields().end(), field) == known_fields().end()) field.clear();
    has_title = has_title || field == "title";
    fields.push_back(std::move(field));
  }
  if (!has_title) throw Error(Errc::MissingRequiredColumn, "CSV header has no title column");

  ParseResult out;
  RecordBuilder builder;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto record_no = r + 1;
    const auto& row = rows[r];
    if (row.size() != fields.size()) {
      out.diagnostics.push_back({record_no, "expected " + std::to_string(fields.size()) + " fields, got " +
                                                std::to_string(row.size()) + "; skipped"});
      continue;
    }
    bool utf8_ok = std::all_of(row.begin(), row.end(), [](const std::string& s) { return text::valid_utf8(s); });
    if (!utf8_ok) {
      out.diagnostics.push_back({record_no, "invalid UTF-8; skipped"});
      continue;
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!fields[c].empty()) builder.set(fields[c], row[c]);
    }
    builder.finish(out, record_no);
  }
  return out;
}

inline ParseResult parse_jsonl(std::string_view data) {
  ParseResult out;
  RecordBuilder builder;
  auto lines = text::split_lines(data);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line_no = i + 1;
    if (text::trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      out.diagnostics.push_back({line_no, std::string("malformed JSON; skipped: ") + e.what()});
      continue;
    }
    if (!j.is_object()) {
      out.diagnostics.push_back({line_no, "expected a JSON object; skipped"});
      continue;
    }
    for (const auto& field : known_fields()) {
      if (!j.contains(field) || j[field].is_null()) continue;
      const auto& v = j[field];
      builder.set(field, v.is_string() ? v.get<std::string>() : v.dump());
    }
    builder.finish(out, line_no);
  }
  return out;
}

}  // namespace detail

// Malformed rows produce diagnostics and are skipped; only a missing title
// column or an unreadable stream aborts.
inline ParseResult parse_records(std::istream& in, Format format) {
  const auto data = detail::read_all(in);
  const auto body = text::strip_bom(data);
  if (text::trim(body).empty()) return {};
  switch (format) {
    case Format::WosTab: return detail::parse_wos(body);
    case Format::Csv: return detail::parse_csv_records(body);
    case Format::Jsonl: return detail::parse_jsonl(body);
  }
  return {};
}

inline ParseResult parse_records(std::string_view data, Format format) {
  std::istringstream in{std::string(data)};
  return parse_records(in, format);
}

// ---------------------------------------------------------------------------
// Filter / dedupe / pairs

namespace detail {

inline std::string match_form(std::string_view s, bool case_sensitive) {
  auto collapsed = text::collapse_whitespace(s);
  return case_sensitive ? collapsed : text::fold_case(collapsed);
}

}  // namespace detail

// Keeps a record when any keyword phrase occurs as a substring of the
// selected fields. Whitespace runs compare as single spaces.
inline std::vector<BibRecord> filter_records(const std::vector<BibRecord>& records, const KeywordFilter& f) {
  f.validate();
  std::vector<std::string> phrases;
  for (const auto& k : f.keywords) phrases.push_back(detail::match_form(k, f.case_sensitive));
  std::vector<BibRecord> kept;
  for (const auto& r : records) {
    std::vector<std::string> haystacks;
    if (f.match_fields != MatchFields::Abstract) haystacks.push_back(detail::match_form(r.title, f.case_sensitive));
    if (f.match_fields != MatchFields::Title && r.abstract) {
      haystacks.push_back(detail::match_form(*r.abstract, f.case_sensitive));
    }
    bool hit = std::any_of(phrases.begin(), phrases.end(), [&](const std::string& p) {
      return std::any_of(haystacks.begin(), haystacks.end(),
                         [&](const std::string& h) { return h.find(p) != std::string::npos; });
    });
    if (hit) kept.push_back(r);
  }
  return kept;
}

// Case-folded, ASCII punctuation removed, whitespace collapsed.
inline std::string normalized_title(std::string_view title) {
  std::string stripped;
  for (char c : title) {
    if (!std::ispunct(static_cast<unsigned char>(c))) stripped.push_back(c);
  }
  return text::fold_case(text::collapse_whitespace(stripped));
}

struct DedupeResult {
  std::vector<BibRecord> records;
  std::size_t duplicates_removed = 0;
};

// Key is the accession id when present, else the normalized title. The
// first occurrence wins and input order is preserved.
inline DedupeResult dedupe(const std::vector<BibRecord>& records) {
  DedupeResult out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    auto key = r.id ? "id:" + *r.id : "title:" + normalized_title(r.title);
    if (seen.insert(std::move(key)).second) {
      out.records.push_back(r);
    } else {
      ++out.duplicates_removed;
    }
  }
  return out;
}

struct PairsResult {
  std::vector<InstructionPair> pairs;
  std::size_t skipped_no_abstract = 0;
};

inline PairsResult build_pairs(const std::vector<BibRecord>& records) {
  PairsResult out;
  for (const auto& r : records) {
    auto input = text::collapse_whitespace(r.title);
    auto output = r.abstract ? text::collapse_whitespace(*r.abstract) : std::string{};
    if (output.empty() || input.empty()) {
      ++out.skipped_no_abstract;
      continue;
    }
    out.pairs.push_back({std::move(input), std::move(output)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stats

inline std::string canonical_doc_type(const std::optional<std::string>& raw) {
  if (!raw) return "other";
  // Multi-valued types ("Article; Proceedings Paper") use the first entry.
  auto first = text::fold_case(text::trim(text::split(*raw, ';').front()));
  first = text::collapse_whitespace(first);
  if (first == "article" || first == "journal paper") return "journal paper";
  if (first == "patent") return "patent";
  if (first == "proceedings paper" || first == "meeting" || first == "meeting abstract" ||
      first == "conference paper") {
    return "conference paper";
  }
  if (first == "book") return "book";
  if (first == "book in series") return "book in series";
  return "other";
}

inline CorpusStats stats(const std::vector<BibRecord>& records, std::size_t k = 20) {
  if (k < 1) throw Error(Errc::InvalidArgument, "top-K must be at least 1");
  CorpusStats s;
  s.total = records.size();
  std::map<std::string, std::size_t> sources;
  for (const auto& r : records) {
    ++s.by_doc_type[canonical_doc_type(r.doc_type)];
    if (r.source) ++sources[*r.source];
  }
  s.top_sources.assign(sources.begin(), sources.end());
  std::stable_sort(s.top_sources.begin(), s.top_sources.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (s.top_sources.size() > k) s.top_sources.resize(k);
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline

struct BuildResult {
  std::size_t input = 0;
  std::size_t matched = 0;
  std::size_t filtered_out = 0;
  std::vector<InstructionPair> pairs;
  CorpusStats stats;
  std::vector<Diagnostic> diagnostics;
};

// parse -> filter -> dedupe -> pairs -> stats. Stats describe the deduped
// set; an empty filter keyword list disables filtering.
inline BuildResult build_corpus(std::istream& in, Format format, const KeywordFilter& filter, std::size_t top_k = 20) {
  auto parsed = parse_records(in, format);
  BuildResult out;
  out.input = parsed.records.size();
  out.diagnostics = std::move(parsed.diagnostics);
  auto matched = filter.keywords.empty() ? parsed.records : filter_records(parsed.records, filter);
  out.matched = matched.size();
  out.filtered_out = out.input - out.matched;
  auto unique = dedupe(matched);
  auto pairs = build_pairs(unique.records);
  out.pairs = std::move(pairs.pairs);
  out.stats = stats(unique.records, top_k);
  out.stats.skipped_no_abstract = pairs.skipped_no_abstract;
  out.stats.duplicates_removed = unique.duplicates_removed;
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline void to_json(nlohmann::json& j, const InstructionPair& p) {
  j = nlohmann::json{{"input", p.input}, {"output", p.output}};
}

inline void from_json(const nlohmann::json& j, InstructionPair& p) {
  j.at("input").get_to(p.input);
  j.at("output").get_to(p.output);
}

inline void to_json(nlohmann::json& j, const BibRecord& r) {
  j = nlohmann::json{{"title", r.title}};
  if (r.id) j["id"] = *r.id;
  if (r.abstract) j["abstract"] = *r.abstract;
  if (r.doc_type) j["doc_type"] = *r.doc_type;
  if (r.source) j["source"] = *r.source;
  if (r.year) j["year"] = *r.year;
}

inline void write_pairs_jsonl(std::ostream& out, const std::vector<InstructionPair>& pairs) {
  for (const auto& p : pairs) out << nlohmann::json(p).dump() << '\n';
}

inline std::vector<InstructionPair> read_pairs_jsonl(std::istream& in) {
  std::vector<InstructionPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      pairs.push_back(nlohmann::json::parse(line).get<InstructionPair>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidArgument, "pairs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

inline void to_json(nlohmann::json& j, const CorpusStats& s) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& [name, count] : s.top_sources) sources.push_back({{"source", name}, {"count", count}});
  j = nlohmann::json{{"total", s.total},
                     {"by_doc_type", s.by_doc_type},
                     {"top_sources", sources},
                     {"skipped_no_abstract", s.skipped_no_abstract},
                     {"duplicates_removed", s.duplicates_removed}};
}

inline std::string stats_report(const CorpusStats& s) {
  std::ostringstream out;
  out << "Records: " << s.total << '\n' << "Document types:\n";
  for (const auto& [type, count] : s.by_doc_type) out << "  " << type << ": " << count << '\n';
  out << "Top " << s.top_sources.size() << " sources:\n";
  std::size_t i = 0;
  for (const auto& [name, count] : s.top_sources) out << "  " << ++i << ". " << name << " (" << count << ")\n";
  out << "Skipped (no abstract): " << s.skipped_no_abstract << '\n'
      << "Duplicates removed: " << s.duplicates_removed << '\n';
  return out.str();
}

}  // namespace llmeval::corpus
