#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "llmeval/corpus.hpp"
#include "support/oracles.hpp"

using namespace llmeval;
using corpus::BibRecord;
using corpus::Format;

namespace {

corpus::ParseResult sample() {
  return corpus::parse_records(oracle::slurp(oracle::data_dir() / "corpus" / "sample.wos.txt"), Format::WosTab);
}

std::string random_word(std::mt19937_64& rng) {
  static const char* words[] = {"wind",  "energy", "solar", "grid", "storage", "Hydrogen", "model", "forecast",
                                "power", "plant",  "virtual", "carbon", "neutrality", "battery", "the", "of"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(words) - 1);
  return words[pick(rng)];
}

std::vector<BibRecord> random_corpus(std::mt19937_64& rng, std::size_t count) {
  static const char* types[] = {"Article", "Patent", "Proceedings Paper", "Meeting Abstract", "Book",
                                "Book in series", "Review", "Article; Proceedings Paper"};
  std::uniform_int_distribution<int> coin(0, 9);
  std::uniform_int_distribution<std::size_t> type(0, std::size(types) - 1);
  std::vector<BibRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    BibRecord r;
    for (int w = 0; w < 4; ++w) r.title += (w ? " " : "") + random_word(rng);
    if (coin(rng) > 1) {
      for (int w = 0; w < 8; ++w) r.abstract = r.abstract.value_or("") + random_word(rng) + "  ";
    }
    if (coin(rng) > 2) r.id = "WOS:" + std::to_string(coin(rng) * 10 + coin(rng));
    if (coin(rng) > 0) r.doc_type = types[type(rng)];
    if (coin(rng) > 3) r.source = "Journal " + std::to_string(coin(rng));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST(CorpusParse, FixtureCountsAndDiagnostics) {
  auto p = sample();
  EXPECT_EQ(p.records.size(), 9u);
  ASSERT_EQ(p.diagnostics.size(), 1u);
  EXPECT_EQ(p.diagnostics[0].line, 7u);
  const auto& first = p.records.front();
  EXPECT_EQ(first.id, "WOS:000370001");
  EXPECT_EQ(first.year, 2016);
  EXPECT_EQ(first.doc_type, "Article");
  EXPECT_EQ(first.abstract->rfind("Wind energy has been part of the fastest growing", 0), 0u);
  EXPECT_EQ(p.records[4].title, "Modular energy storage cabinet with liquid cooling");
  EXPECT_FALSE(p.records[4].id.has_value());
  EXPECT_FALSE(p.records[4].source.has_value());
}

TEST(CorpusParse, MissingTitleColumn) {
  try {
    corpus::parse_records("AB\tPY\nabc\t2020\n", Format::WosTab);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingRequiredColumn);
  }
  EXPECT_THROW(corpus::parse_records("abstract,year\nx,2020\n", Format::Csv), Error);
}

TEST(CorpusParse, EmptyAndBomInput) {
  EXPECT_TRUE(corpus::parse_records("", Format::WosTab).records.empty());
  EXPECT_TRUE(corpus::parse_records("\xEF\xBB\xBF\n", Format::Csv).records.empty());
  auto p = corpus::parse_records("\xEF\xBB\xBFTI\tAB\nT\tA\n", Format::WosTab);
  ASSERT_EQ(p.records.size(), 1u);
  EXPECT_EQ(p.records[0].title, "T");
}

TEST(CorpusParse, YearWarningsAndUtf8) {
  auto p = corpus::parse_records("TI\tPY\nA\t1700\nB\tabc\nC\t2001\n\xff\xfe\t2000\n", Format::WosTab);
  ASSERT_EQ(p.records.size(), 3u);
  EXPECT_FALSE(p.records[0].year.has_value());
  EXPECT_EQ(p.records[2].year, 2001);
  EXPECT_EQ(p.diagnostics.size(), 3u);
}

TEST(CorpusParse, CsvAndJsonl) {
  auto csv = corpus::parse_records(
      "id,title,abstract,doc_type,source,year\n"
      "U1,\"Wind, offshore\",\"Line one\nline two\",Article,J,2020\n"
      "U2,,no title,Article,J,2020\n",
      Format::Csv);
  ASSERT_EQ(csv.records.size(), 1u);
  EXPECT_EQ(csv.records[0].title, "Wind, offshore");
  EXPECT_EQ(csv.diagnostics.size(), 1u);

  auto jsonl = corpus::parse_records(
      "{\"id\":\"U1\",\"title\":\"T\",\"abstract\":\"A\",\"year\":2019}\nnot json\n[1]\n\n", Format::Jsonl);
  ASSERT_EQ(jsonl.records.size(), 1u);
  EXPECT_EQ(jsonl.records[0].year, 2019);
  EXPECT_EQ(jsonl.diagnostics.size(), 2u);
}

TEST(CorpusFilter, Rules) {
  BibRecord wind{std::nullopt, "A case study of wind speed", "Wind   energy has been part of it.", {}, {}, {}};
  BibRecord carbon{std::nullopt, "Policy", "Towards Carbon Neutrality", {}, {}, {}};
  corpus::KeywordFilter f{{"wind energy"}, corpus::MatchFields::Both, false};
  EXPECT_EQ(corpus::filter_records({wind}, f).size(), 1u);
  f.match_fields = corpus::MatchFields::Title;
  EXPECT_TRUE(corpus::filter_records({wind}, f).empty());
  corpus::KeywordFilter c{{"carbon neutrality"}, corpus::MatchFields::Both, false};
  EXPECT_EQ(corpus::filter_records({carbon}, c).size(), 1u);
  c.case_sensitive = true;
  EXPECT_TRUE(corpus::filter_records({carbon}, c).empty());
  EXPECT_THROW(corpus::filter_records({carbon}, corpus::KeywordFilter{}), Error);
  EXPECT_EQ(corpus::default_keywords().size(), 12u);
}

TEST(CorpusDedupe, IdsThenTitles) {
  BibRecord a{"U1", "Same", "x", {}, {}, {}};
  BibRecord b{"U1", "Different", "y", {}, {}, {}};
  BibRecord c{std::nullopt, "Grid  Storage!", "z", {}, {}, {}};
  BibRecord d{std::nullopt, "grid storage", "w", {}, {}, {}};
  BibRecord e{"U2", "grid storage", "v", {}, {}, {}};
  auto r = corpus::dedupe({a, b, c, d, e});
  EXPECT_EQ(r.duplicates_removed, 2u);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].abstract, "x");
  EXPECT_EQ(r.records[1].abstract, "z");
  EXPECT_EQ(r.records[2].id, "U2");
}

TEST(CorpusPairs, SkipsMissingAbstract) {
  BibRecord a{std::nullopt, "T  1", " A\n 1 ", {}, {}, {}};
  BibRecord b{std::nullopt, "T2", std::nullopt, {}, {}, {}};
  auto p = corpus::build_pairs({a, b});
  ASSERT_EQ(p.pairs.size(), 1u);
  EXPECT_EQ(p.pairs[0].input, "T 1");
  EXPECT_EQ(p.pairs[0].output, "A 1");
  EXPECT_EQ(p.skipped_no_abstract, 1u);
}

TEST(CorpusStats, DocTypesAndSources) {
  EXPECT_EQ(corpus::canonical_doc_type(std::string("Article")), "journal paper");
  EXPECT_EQ(corpus::canonical_doc_type(std::string("Proceedings Paper; Meeting")), "conference paper");
  EXPECT_EQ(corpus::canonical_doc_type(std::string("Meeting Abstract")), "conference paper");
  EXPECT_EQ(corpus::canonical_doc_type(std::string("Book in series")), "book in series");
  EXPECT_EQ(corpus::canonical_doc_type(std::string("Editorial")), "other");
  EXPECT_EQ(corpus::canonical_doc_type(std::nullopt), "other");
  std::vector<BibRecord> recs{{{}, "a", {}, {}, "B", {}}, {{}, "b", {}, {}, "A", {}}, {{}, "c", {}, {}, "B", {}},
                              {{}, "d", {}, {}, "C", {}}};
  auto s = corpus::stats(recs, 2);
  ASSERT_EQ(s.top_sources.size(), 2u);
  EXPECT_EQ(s.top_sources[0], (std::pair<std::string, std::size_t>{"B", 2}));
  EXPECT_EQ(s.top_sources[1], (std::pair<std::string, std::size_t>{"A", 1}));
  EXPECT_EQ(s.by_doc_type.at("other"), 4u);
  EXPECT_THROW(corpus::stats(recs, 0), Error);
}

TEST(CorpusBuild, FixtureByHand) {
  std::ifstream in(oracle::data_dir() / "corpus" / "sample.wos.txt");
  auto r = corpus::build_corpus(in, Format::WosTab, corpus::default_filter());
  EXPECT_EQ(r.input, 9u);
  EXPECT_EQ(r.matched, 8u);
  EXPECT_EQ(r.filtered_out, 1u);
  EXPECT_EQ(r.stats.duplicates_removed, 2u);
  EXPECT_EQ(r.pairs.size(), 5u);
  EXPECT_EQ(r.stats.skipped_no_abstract, 1u);
  EXPECT_EQ(r.stats.total, 6u);
  EXPECT_EQ(r.stats.by_doc_type.at("journal paper"), 3u);
  EXPECT_EQ(r.stats.by_doc_type.at("patent"), 1u);
  EXPECT_EQ(r.stats.by_doc_type.at("conference paper"), 1u);
  EXPECT_EQ(r.stats.by_doc_type.at("book"), 1u);
  EXPECT_EQ(r.pairs[0].input.rfind("Hybrid forecasting model", 0), 0u);
}

TEST(CorpusProperties, ConservationOnRandomCorpora) {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 5; ++trial) {
    auto records = random_corpus(rng, 1000);
    auto filter = corpus::default_filter();
    auto matched = corpus::filter_records(records, filter);
    auto unique = corpus::dedupe(matched);
    EXPECT_EQ(unique.records.size() + unique.duplicates_removed, matched.size());
    auto pairs = corpus::build_pairs(unique.records);
    EXPECT_EQ(pairs.pairs.size() + pairs.skipped_no_abstract, unique.records.size());
    auto s = corpus::stats(unique.records);
    std::size_t typed = 0;
    for (const auto& [type, count] : s.by_doc_type) typed += count;
    EXPECT_EQ(typed, s.total);
    EXPECT_LE(s.top_sources.size(), 20u);
    // Dedupe is idempotent.
    EXPECT_EQ(corpus::dedupe(unique.records).duplicates_removed, 0u);
  }
}

TEST(CorpusJsonl, RoundTripIsByteIdentical) {
  std::mt19937_64 rng(8);
  std::vector<corpus::InstructionPair> pairs;
  for (int i = 0; i < 300; ++i) {
    pairs.push_back({random_word(rng) + " \"quoted\" \\ " + random_word(rng), random_word(rng) + "\té水"});
  }
  std::ostringstream first;
  corpus::write_pairs_jsonl(first, pairs);
  std::istringstream in(first.str());
  auto back = corpus::read_pairs_jsonl(in);
  EXPECT_EQ(back, pairs);
  std::ostringstream second;
  corpus::write_pairs_jsonl(second, back);
  EXPECT_EQ(first.str(), second.str());
}
