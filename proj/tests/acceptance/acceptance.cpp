// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <thread>

#include <httplib.h>

#include "llmeval/cli.hpp"
#include "llmeval/llmeval.hpp"
#include "support/oracles.hpp"

using namespace llmeval;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void note(const std::string& line) { std::cout << "     " << line << '\n'; }

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json fixture(const std::string& rel) { return json::parse(oracle::slurp(oracle::data_dir() / rel)); }

ahp::JudgmentMatrix matrix(const std::string& rel) { return fixture(rel).get<ahp::JudgmentMatrix>(); }

std::vector<std::vector<double>> dense(const ahp::JudgmentMatrix& m) { return m.entries; }

std::string fmt(double v, int d) { return text::format_fixed(v, d); }

std::vector<scoring::RatingTable> rating_tables(const std::string& field) {
  std::vector<scoring::RatingTable> out;
  for (const auto& metric : oracle::kMetrics) {
    auto path = oracle::data_dir() / "ratings" / field / (text::slug(metric) + ".csv");
    out.push_back(scoring::parse_rating_csv(oracle::slurp(path), metric));
  }
  return out;
}

void ahp_weights() {
  auto m = matrix("ahp/six_metrics.json");
  ahp::derive_weights(m);
  auto t0 = Clock::now();
  auto r = ahp::derive_weights(m);
  const double elapsed = ms_since(t0);

  bool ok = elapsed < 10.0;
  double worst = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    worst = std::max(worst, std::abs(r.weights.weights[i] - oracle::kWeights[i]));
    sum += r.weights.weights[i];
  }
  ok = ok && worst <= 0.005 && std::abs(sum - 1.0) <= 1e-9;

  const double target = 6.5232;
  std::string best;
  double best_gap = 1e9;
  for (auto [name, file] : {std::pair{"as printed", "ahp/six_metrics_asym.json"},
                            std::pair{"H-E corrected to 1/4", "ahp/six_metrics_he_quarter.json"},
                            std::pair{"E-H corrected to 3", "ahp/six_metrics.json"}}) {
    ahp::AhpConfig cfg;
    cfg.reciprocity_mode = ahp::Reciprocity::Lenient;
    auto v = ahp::derive_weights(matrix(file), cfg);
    std::string w;
    for (double x : v.weights.weights) w += " " + fmt(x, 4);
    note(std::string("variant ") + name + ": lambda_max " + fmt(v.consistency.lambda_max, 4) + ", weights" + w);
    if (std::abs(v.consistency.lambda_max - target) < best_gap) {
      best_gap = std::abs(v.consistency.lambda_max - target);
      best = name;
    }
  }
  note("variant closest to lambda_max 6.5232: " + best + " (gap " + fmt(best_gap, 6) + ")");
  verdict(ok, "ahp-weights",
          "max |w - published| " + fmt(worst, 5) + " (tol 0.005), |sum - 1| " + fmt(std::abs(sum - 1.0), 12) +
              ", derive_weights " + fmt(elapsed, 3) + " ms (limit 10)");
}

void consistency() {
  ahp::AhpConfig alt;
  alt.ri_table = ahp::alt_ri_table();
  ahp::AhpConfig saaty;
  auto a = ahp::consistency(6.5232, 6, alt);
  auto s = ahp::consistency(6.5232, 6, saaty);
  bool ok = std::abs(a.ci - 0.10464) <= 1e-12 && std::abs(a.cr - 0.0831) <= 0.003 &&
            std::abs(s.cr - 0.0844) <= 0.002 && a.passed && s.passed;
  verdict(ok, "consistency",
          "CI " + fmt(a.ci, 6) + " (want 0.10464), CR alt " + fmt(a.cr, 4) + " (0.0831 +-0.003), CR saaty " +
              fmt(s.cr, 4) + " (0.0844 +-0.002), pass " + (a.passed && s.passed ? "true" : "false"));
}

void composites() {
  ahp::AhpConfig cfg;
  cfg.ri_table = ahp::alt_ri_table();
  auto w = ahp::derive_weights(matrix("ahp/six_metrics.json"), cfg);
  bool ok = true;
  std::string detail;
  for (auto [field, expected] : {std::pair{"wind", oracle::kWindComposite}, std::pair{"solar", oracle::kSolarComposite}}) {
    auto report = scoring::evaluate(rating_tables(field), w.weights, w.consistency);
    detail += std::string(detail.empty() ? "" : "; ") + field + ":";
    for (std::size_t k = 0; k < 6; ++k) {
      auto got = fmt(report.composites[k].score, 2);
      detail += " " + got;
      if (got != fmt(expected[k], 2)) {
        ok = false;
        detail += "(want " + fmt(expected[k], 2) + ")";
      }
    }
  }
  verdict(ok, "composite-scores", detail);
}

void judge_aggregation() {
  const std::set<std::string> documented{"wind/run_2/SparkDesk"};
  std::set<std::string> mismatched;
  bool ok = true;
  std::string detail;
  for (auto [field, grades, means] : {std::tuple{"wind", oracle::kWindGrades, oracle::kWindJudgeMeans},
                                      std::tuple{"solar", oracle::kSolarGrades, oracle::kSolarJudgeMeans}}) {
    judge::JudgeRunSet set;
    set.labels = oracle::kSubjects;
    for (std::size_t k = 0; k < 5; ++k) {
      auto reply = oracle::slurp(oracle::data_dir() / "judge" / field / ("run_" + std::to_string(k + 1) + ".txt"));
      judge::JudgeRun run;
      run.run_index = k;
      run.parsed = judge::parse_scores(reply, 6);
      for (std::size_t a = 0; a < 6; ++a) {
        if (run.parsed->scores[a] != grades[k][a]) {
          auto cell = std::string(field) + "/run_" + std::to_string(k + 1) + "/" + oracle::kSubjects[a];
          mismatched.insert(cell);
          note("transcript differs from table at " + cell + ": " + fmt(run.parsed->scores[a], 0) + " vs " +
               fmt(grades[k][a], 0));
        }
      }
      set.runs.push_back(std::move(run));
    }
    auto got = scoring::metric_means(judge::aggregate_runs(set).table).means;
    detail += std::string(detail.empty() ? "" : "; ") + field + " means";
    for (std::size_t a = 0; a < 6; ++a) {
      detail += " " + text::format_fixed(got[a], 1, true);
      bool affected = false;
      for (std::size_t k = 0; k < 5; ++k) {
        affected = affected || mismatched.count(std::string(field) + "/run_" + std::to_string(k + 1) + "/" +
                                                oracle::kSubjects[a]);
      }
      if (affected) {
        // Mean of the transcript grades still has to be exact.
        std::vector<double> column;
        for (const auto& r : set.runs) column.push_back(r.parsed->scores[a]);
        double ref = 0.0;
        for (double x : column) ref += x;
        ref /= 5.0;
        note(std::string(field) + " " + oracle::kSubjects[a] + " mean " + fmt(got[a], 1) + " from transcripts vs " +
             fmt(means[a], 1) + " tabulated");
        ok = ok && std::abs(got[a] - ref) < 1e-9;
      } else {
        ok = ok && std::abs(got[a] - means[a]) < 1e-9;
      }
    }
  }
  ok = ok && mismatched == documented;
  verdict(ok, "judge-aggregation", detail + "; mismatching cells " + std::to_string(mismatched.size()) +
                                       " (documented: wind/run_2/SparkDesk)");
}

void property_suites() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t consistent_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + i % 7;
    std::vector<double> truth;
    auto a = oracle::consistent_matrix(rng, n, &truth);
    auto r = ahp::derive_weights({oracle::labels(n), a});
    bool good = std::abs(r.consistency.lambda_max - static_cast<double>(n)) <= 1e-6 && r.consistency.cr <= 1e-6;
    for (std::size_t k = 0; k < n; ++k) good = good && std::abs(r.weights.weights[k] - truth[k]) <= 1e-9;
    if (!good) ++consistent_bad;
  }

  std::size_t equivariance_bad = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + i % 6;
    auto a = oracle::random_reciprocal(rng, n);
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    std::vector<std::vector<double>> b(n, std::vector<double>(n));
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y) b[x][y] = a[p[x]][p[y]];
    auto wa = ahp::derive_weights({oracle::labels(n), a}).weights.weights;
    auto wb = ahp::derive_weights({oracle::labels(n), b}).weights.weights;
    for (std::size_t x = 0; x < n; ++x) {
      if (std::abs(wb[x] - wa[p[x]]) > 1e-9) {
        ++equivariance_bad;
        break;
      }
    }
  }

  std::size_t oracle_checked = 0, oracle_bad = 0;
  for (const auto& e : std::filesystem::directory_iterator(oracle::data_dir() / "ahp")) {
    auto m = matrix(std::filesystem::relative(e.path(), oracle::data_dir()).string());
    if (m.size() > 4) continue;
    ++oracle_checked;
    ahp::AhpConfig cfg;
    cfg.reciprocity_mode = ahp::Reciprocity::Lenient;
    auto r = ahp::derive_weights(m, cfg);
    auto ref = oracle::principal(dense(m));
    bool good = std::abs(r.consistency.lambda_max - ref.lambda) <= 1e-6;
    for (std::size_t k = 0; k < m.size(); ++k) good = good && std::abs(r.weights.weights[k] - ref.vector[k]) <= 1e-6;
    if (!good) ++oracle_bad;
  }

  std::size_t perm_bad = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 1 + i % 9;
    auto order = judge::presentation_order(n, rng(), i);
    std::vector<double> truth(n), shown(n);
    for (auto& v : truth) v = static_cast<double>(rng() % 101);
    for (std::size_t k = 0; k < n; ++k) shown[k] = truth[order[k]];
    if (judge::restore_order(shown, order) != truth) ++perm_bad;
  }

  std::size_t conservation_bad = 0;
  {
    static const char* words[] = {"wind", "energy", "solar", "storage", "grid", "the", "plant", "virtual", "power"};
    static const char* types[] = {"Article", "Patent", "Proceedings Paper", "Book", "Review", "Book in series"};
    std::vector<corpus::BibRecord> records;
    for (int i = 0; i < 1000; ++i) {
      corpus::BibRecord r;
      for (int w = 0; w < 4; ++w) r.title += std::string(w ? " " : "") + words[rng() % 9];
      if (rng() % 10) r.abstract = std::string(words[rng() % 9]) + " " + words[rng() % 9] + " " + words[rng() % 9];
      if (rng() % 3) r.id = "WOS:" + std::to_string(rng() % 400);
      r.doc_type = types[rng() % 6];
      records.push_back(std::move(r));
    }
    auto matched = corpus::filter_records(records, corpus::default_filter());
    auto unique = corpus::dedupe(matched);
    auto pairs = corpus::build_pairs(unique.records);
    auto s = corpus::stats(unique.records);
    std::size_t typed = 0;
    for (const auto& [t, c] : s.by_doc_type) typed += c;
    if (unique.records.size() + unique.duplicates_removed != matched.size()) ++conservation_bad;
    if (pairs.pairs.size() + pairs.skipped_no_abstract != unique.records.size()) ++conservation_bad;
    if (typed != s.total) ++conservation_bad;
  }

  bool jsonl_ok = true;
  {
    std::vector<corpus::InstructionPair> pairs;
    for (int i = 0; i < 200; ++i) pairs.push_back({"title " + std::to_string(rng()) + " \"q\" \\", "abs\t\xc3\xa9 " + std::to_string(i)});
    std::ostringstream a, b;
    corpus::write_pairs_jsonl(a, pairs);
    std::istringstream in(a.str());
    auto back = corpus::read_pairs_jsonl(in);
    corpus::write_pairs_jsonl(b, back);
    jsonl_ok = back == pairs && a.str() == b.str();
  }

  const double elapsed = ms_since(t0);
  bool ok = consistent_bad == 0 && equivariance_bad == 0 && oracle_checked > 0 && oracle_bad == 0 && perm_bad == 0 &&
            conservation_bad == 0 && jsonl_ok;
  verdict(ok, "property-suites",
          "consistent 1000 (bad " + std::to_string(consistent_bad) + "), equivariance 200 (bad " +
              std::to_string(equivariance_bad) + "), eigen oracle " + std::to_string(oracle_checked) + " fixtures (bad " +
              std::to_string(oracle_bad) + "), de-permutation 500 (bad " + std::to_string(perm_bad) +
              "), corpus conservation (bad " + std::to_string(conservation_bad) + "), jsonl round trip " +
              (jsonl_ok ? "ok" : "bad") + ", " + fmt(elapsed, 0) + " ms");
}

void service_api() {
  oracle::TempDir dir;
  std::string id, snapshot, view;
  json http_report;
  {
    service::Service svc({dir.path() / "state", std::nullopt});
    http_api::ApiServer api(svc);
    int port = api.bind_any("127.0.0.1");
    std::jthread t([&] { api.listen(); });
    api.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    json create{{"metrics", oracle::kMetrics}, {"subjects", oracle::kSubjects}, {"config", {{"ri_table", "alt"}}}};
    id = json::parse(c.Post("/sessions", create.dump(), "application/json")->body)["id"];
    auto entries = fixture("ahp/six_metrics.json")["entries"];
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j)
        c.Put("/sessions/" + id + "/judgments", json{{"i", i}, {"j", j}, {"value", entries[i][j]}}.dump(), "application/json");
    json ratings = json::array();
    for (const auto& t : rating_tables("wind"))
      for (std::size_t r = 0; r < t.raters.size(); ++r)
        for (std::size_t k = 0; k < t.subjects.size(); ++k)
          ratings.push_back({{"expert", t.raters[r]}, {"subject", t.subjects[k]}, {"metric", t.metric}, {"score", t.scores[r][k]}});
    c.Post("/sessions/" + id + "/ratings", ratings.dump(), "application/json");
    auto res = c.Get("/sessions/" + id + "/report");
    if (res && res->status == 200) http_report = json::parse(res->body);
    view = c.Get("/sessions/" + id)->body;
    snapshot = oracle::slurp(svc.snapshot_path(id));
    api.stop();
  }
  std::string view_after, snapshot_after;
  {
    service::Service svc({dir.path() / "state", std::nullopt});
    http_api::ApiServer api(svc);
    int port = api.bind_any("127.0.0.1");
    std::jthread t([&] { api.listen(); });
    api.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    view_after = c.Get("/sessions/" + id)->body;
    snapshot_after = oracle::slurp(svc.snapshot_path(id));
    api.stop();
  }

  auto cli_json = (dir.path() / "cli_report.json").string();
  std::ostringstream out, err;
  int code = cli::run_cli({"report", "--ratings", (oracle::data_dir() / "ratings" / "wind").string(), "--matrix",
                           (oracle::data_dir() / "ahp" / "six_metrics.json").string(), "--ri-table", "alt", "--json", cli_json},
                          out, err);
  bool same = false;
  std::string http_row;
  if (code == 0 && !http_report.is_null()) {
    auto cli_report = json::parse(oracle::slurp(cli_json));
    same = cli_report["composites"].size() == http_report["composites"].size();
    for (std::size_t k = 0; same && k < cli_report["composites"].size(); ++k) {
      same = cli_report["composites"][k]["subject"] == http_report["composites"][k]["subject"] &&
             fmt(cli_report["composites"][k]["score"], 2) == fmt(http_report["composites"][k]["score"], 2);
      http_row += " " + fmt(http_report["composites"][k]["score"], 2);
    }
    same = same && cli_report["ranking"] == http_report["ranking"];
  }
  bool restart = !snapshot.empty() && snapshot == snapshot_after && view == view_after;
  verdict(same && restart, "service",
          std::string("snapshot round trip ") + (restart ? "byte-identical" : "differs") + ", HTTP wind report" +
              http_row + (same ? " matches" : " does not match") + " the CLI report");
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  ahp_weights();
  consistency();
  composites();
  judge_aggregation();
  property_suites();
  service_api();
  const double total = ms_since(t0);
  verdict(total < 30000.0, "suite-runtime", fmt(total / 1000.0, 2) + " s (limit 30 s)");
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
