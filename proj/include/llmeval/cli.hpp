#pragma once

// Command-line front end. Every subcommand is a thin composition over the
// library modules; run_cli() is separate from main() so tests can drive it.

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llmeval/ahp.hpp"
#include "llmeval/corpus.hpp"
#include "llmeval/error.hpp"
#include "llmeval/http_api.hpp"
#include "llmeval/judge.hpp"
#include "llmeval/judge_http.hpp"
#include "llmeval/scoring.hpp"
#include "llmeval/service.hpp"
#include "llmeval/text.hpp"

namespace llmeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::atomic<int> pending_signal{0};

inline void on_signal(int sig) { pending_signal.store(sig); }

inline std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw Error(Errc::Io, "failed to write " + path.string());
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, path + ": " + e.what());
  }
}

// Fills `value` from config[section][key] unless the flag was given.
template <typename T>
void fallback(const CLI::Option* opt, const nlohmann::json& config, const char* section, const char* key, T& value) {
  if (opt->count() > 0 || !config.contains(section)) return;
  const auto& s = config.at(section);
  if (s.is_object() && s.contains(key)) s.at(key).get_to(value);
}

inline std::vector<std::string> read_keywords(const std::string& path) {
  std::vector<std::string> keywords;
  for (const auto& line : text::split_lines(text::strip_bom(text::read_file(path)))) {
    auto k = text::trim(line);
    if (k.empty() || k.front() == '#') continue;
    keywords.emplace_back(k);
  }
  return keywords;
}

inline std::string means_row(const scoring::MetricSummary& s) {
  std::string row;
  for (std::size_t i = 0; i < s.means.size(); ++i) {
    if (i > 0) row += ", ";
    row += s.subjects[i] + " " + text::format_fixed(s.means[i], 1, true);
  }
  return row;
}

inline std::pair<std::string, int> split_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "address must be host:port, got '" + addr + "'");
  auto port = text::parse_integer(addr.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) throw Error(Errc::InvalidArgument, "bad port in '" + addr + "'");
  return {addr.substr(0, colon), static_cast<int>(*port)};
}

}  // namespace detail

struct Globals {
  std::string config_path;
  std::string data_dir = "llmeval-data";
  bool no_timestamps = false;
  nlohmann::json config = nlohmann::json::object();
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Evaluation toolkit: AHP metric weights, expert and LLM-judge scoring, corpus building"};
    app.name("llmeval");
    app.require_subcommand(1);
    app.footer(
        "Environment:\n"
        "  LLMEVAL_API_KEY  bearer token for the HTTP judge backend. The variable name\n"
        "                   can be changed with \"api_key_env\" in the backend config.");

    app.add_option("--config", g_.config_path, "JSON file with default flag values")
                           ->check(CLI::ExistingFile);
    auto* data_dir_opt = app.add_option("--data-dir", g_.data_dir, "Directory for service state")->capture_default_str();
    app.add_flag("--no-timestamps", g_.no_timestamps, "Omit timestamps from summary lines");

    // corpus build
    auto* corpus = app.add_subcommand("corpus", "Bibliographic corpus tools")->require_subcommand(1);
    auto* build = corpus->add_subcommand("build", "Filter, dedupe and convert records to instruction pairs");
    std::string c_in, c_format = "wos-tab", c_keywords, c_match = "both", c_out, c_stats;
    bool c_all = false, c_case = false;
    std::size_t c_top = 20;
    build->add_option("input", c_in, "Input records file")->required()->check(CLI::ExistingFile);
    auto* c_format_opt = build->add_option("--format", c_format, "wos-tab | csv | jsonl")
                             ->check(CLI::IsMember({"wos-tab", "csv", "jsonl"}))
                             ->capture_default_str();
    auto* c_keywords_opt = build->add_option("--keywords", c_keywords, "Keyword file, one phrase per line")
                               ->check(CLI::ExistingFile);
    auto* c_match_opt = build->add_option("--match", c_match, "title | abstract | both")
                            ->check(CLI::IsMember({"title", "abstract", "both"}))
                            ->capture_default_str();
    build->add_flag("--case-sensitive", c_case, "Match keywords case-sensitively");
    build->add_flag("--all", c_all, "Keep every record (no keyword filter)");
    auto* c_top_opt = build->add_option("--top-k", c_top, "Number of top sources in stats")->capture_default_str();
    build->add_option("--out", c_out, "Output pairs JSONL")->required();
    build->add_option("--stats", c_stats, "Output stats JSON (default: stats.json next to --out)");

    // ahp weights
    auto* ahp_cmd = app.add_subcommand("ahp", "Analytic hierarchy process")->require_subcommand(1);
    auto* weights = ahp_cmd->add_subcommand("weights", "Derive metric weights from a judgment matrix");
    std::string a_matrix, a_ri = "saaty", a_mode = "strict", a_out;
    double a_threshold = 0.1;
    bool a_strict = false;
    weights->add_option("matrix", a_matrix, "Judgment matrix JSON")->required()->check(CLI::ExistingFile);
    auto* a_ri_opt = weights->add_option("--ri-table", a_ri, "saaty | alt")
                         ->check(CLI::IsMember({"saaty", "alt"}))
                         ->capture_default_str();
    auto* a_mode_opt = weights->add_option("--mode", a_mode, "strict | lenient reciprocity")
                           ->check(CLI::IsMember({"strict", "lenient"}))
                           ->capture_default_str();
    auto* a_threshold_opt =
        weights->add_option("--cr-threshold", a_threshold, "Consistency ratio threshold")->capture_default_str();
    weights->add_flag("--strict-consistency", a_strict, "Exit 1 when the consistency check fails");
    weights->add_option("--out", a_out, "Write weights and consistency as JSON");

    // judge run
    auto* judge_cmd = app.add_subcommand("judge", "LLM-as-a-judge scoring")->require_subcommand(1);
    auto* jrun = judge_cmd->add_subcommand("run", "Score a task's answers over repeated judge runs");
    std::string j_task, j_replay, j_backend, j_out, j_json, j_metric = "judge";
    judge::JudgeConfig j_cfg;
    jrun->add_option("task", j_task, "Task JSON (question + answers)")->required()->check(CLI::ExistingFile);
    auto* j_replay_opt =
        jrun->add_option("--replay", j_replay, "Directory of stored replies run_<k>.txt")->check(CLI::ExistingDirectory);
    auto* j_backend_opt =
        jrun->add_option("--backend", j_backend, "HTTP backend config JSON")->check(CLI::ExistingFile);
    j_replay_opt->excludes(j_backend_opt);
    auto* j_runs_opt = jrun->add_option("--runs", j_cfg.runs, "Number of judge runs")->capture_default_str();
    auto* j_permute_opt = jrun->add_flag("--permute", j_cfg.permute_order, "Shuffle answer order per run");
    auto* j_seed_opt = jrun->add_option("--seed", j_cfg.seed, "Permutation seed")->capture_default_str();
    auto* j_conc_opt = jrun->add_option("--concurrency", j_cfg.concurrency_limit, "Calls in flight")->capture_default_str();
    auto* j_retry_opt = jrun->add_option("--retries", j_cfg.retry_limit, "Retries per run")->capture_default_str();
    jrun->add_option("--metric", j_metric, "Metric name for the rating table")->capture_default_str();
    jrun->add_option("--out", j_out, "Write per-run scores as CSV");
    jrun->add_option("--json", j_json, "Write run details as JSON");

    // report
    auto* report = app.add_subcommand("report", "Weighted composite report from expert ratings");
    std::string r_ratings, r_matrix, r_ri = "saaty", r_mode = "strict", r_json;
    report->add_option("--ratings", r_ratings, "Directory with one <metric_slug>.csv per metric")
        ->required()
        ->check(CLI::ExistingDirectory);
    report->add_option("--matrix", r_matrix, "Judgment matrix JSON")->required()->check(CLI::ExistingFile);
    auto* r_ri_opt = report->add_option("--ri-table", r_ri, "saaty | alt")
                         ->check(CLI::IsMember({"saaty", "alt"}))
                         ->capture_default_str();
    auto* r_mode_opt = report->add_option("--mode", r_mode, "strict | lenient reciprocity")
                           ->check(CLI::IsMember({"strict", "lenient"}))
                           ->capture_default_str();
    report->add_option("--json", r_json, "Write the report as JSON");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::string s_addr = "127.0.0.1:8080", s_static;
    auto* s_addr_opt = serve->add_option("--addr", s_addr, "host:port (port 0 picks a free port)")->capture_default_str();
    auto* s_static_opt =
        serve->add_option("--static-dir", s_static, "Serve static files from this directory")->check(CLI::ExistingDirectory);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitUsage;
    }

    try {
      if (!g_.config_path.empty()) g_.config = detail::read_json(g_.config_path);
      if (data_dir_opt->count() == 0 && g_.config.contains("data_dir")) {
        g_.config.at("data_dir").get_to(g_.data_dir);
      }

      if (build->parsed()) {
        detail::fallback(c_format_opt, g_.config, "corpus", "format", c_format);
        detail::fallback(c_keywords_opt, g_.config, "corpus", "keywords", c_keywords);
        detail::fallback(c_match_opt, g_.config, "corpus", "match", c_match);
        detail::fallback(c_top_opt, g_.config, "corpus", "top_k", c_top);
        corpus::KeywordFilter filter = corpus::default_filter();
        filter.match_fields = corpus::parse_match_fields(c_match);
        filter.case_sensitive = c_case;
        if (!c_keywords.empty()) filter.keywords = detail::read_keywords(c_keywords);
        if (c_all) filter.keywords.clear();
        if (!c_all) filter.validate();
        if (c_stats.empty()) c_stats = (std::filesystem::path(c_out).parent_path() / "stats.json").string();
        return corpus_build(c_in, corpus::parse_format(c_format), filter, c_top, c_out, c_stats);
      }
      if (weights->parsed()) {
        detail::fallback(a_ri_opt, g_.config, "ahp", "ri_table", a_ri);
        detail::fallback(a_mode_opt, g_.config, "ahp", "mode", a_mode);
        detail::fallback(a_threshold_opt, g_.config, "ahp", "cr_threshold", a_threshold);
        ahp::AhpConfig cfg;
        cfg.ri_table = ahp::ri_table_by_name(a_ri);
        cfg.reciprocity_mode = ahp::parse_reciprocity(a_mode);
        cfg.cr_threshold = a_threshold;
        cfg.strict_consistency = a_strict;
        return ahp_weights(a_matrix, cfg, a_out);
      }
      if (jrun->parsed()) {
        if (g_.config.contains("judge")) {
          judge::JudgeConfig from_file = g_.config.at("judge").get<judge::JudgeConfig>();
          if (j_runs_opt->count() == 0) j_cfg.runs = from_file.runs;
          if (j_permute_opt->count() == 0) j_cfg.permute_order = from_file.permute_order;
          if (j_seed_opt->count() == 0) j_cfg.seed = from_file.seed;
          if (j_conc_opt->count() == 0) j_cfg.concurrency_limit = from_file.concurrency_limit;
          if (j_retry_opt->count() == 0) j_cfg.retry_limit = from_file.retry_limit;
          j_cfg.score_min = from_file.score_min;
          j_cfg.score_max = from_file.score_max;
        }
        std::unique_ptr<judge::LlmClient> backend;
        if (!j_replay.empty()) {
          backend = std::make_unique<judge::ReplayBackend>(j_replay);
        } else {
          judge::HttpBackendConfig http;
          if (!j_backend.empty()) {
            http = detail::read_json(j_backend).get<judge::HttpBackendConfig>();
          } else if (g_.config.contains("backend")) {
            http = g_.config.at("backend").get<judge::HttpBackendConfig>();
          } else {
            err_ << "judge run: one of --replay or --backend is required\n";
            return kExitUsage;
          }
          backend = std::make_unique<judge::HttpChatBackend>(http);
        }
        return judge_run(j_task, j_cfg, *backend, j_metric, j_out, j_json);
      }
      if (report->parsed()) {
        ahp::AhpConfig cfg;
        detail::fallback(r_ri_opt, g_.config, "ahp", "ri_table", r_ri);
        detail::fallback(r_mode_opt, g_.config, "ahp", "mode", r_mode);
        cfg.ri_table = ahp::ri_table_by_name(r_ri);
        cfg.reciprocity_mode = ahp::parse_reciprocity(r_mode);
        if (g_.config.contains("ahp")) cfg.cr_threshold = g_.config.at("ahp").value("cr_threshold", cfg.cr_threshold);
        return report_cmd(r_ratings, r_matrix, cfg, r_json);
      }
      if (serve->parsed()) {
        detail::fallback(s_addr_opt, g_.config, "serve", "addr", s_addr);
        detail::fallback(s_static_opt, g_.config, "serve", "static_dir", s_static);
        service::ServiceOptions opts;
        opts.data_dir = g_.data_dir;
        if (g_.config.contains("backend")) opts.default_backend = g_.config.at("backend").get<judge::HttpBackendConfig>();
        return serve_cmd(s_addr, s_static, std::move(opts));
      }
    } catch (const Error& e) {
      err_ << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
      for (const auto& d : e.details()) err_ << "  " << d << '\n';
      return kExitDomain;
    } catch (const nlohmann::json::exception& e) {
      err_ << "error: InvalidArgument: " << e.what() << '\n';
      return kExitDomain;
    } catch (const std::filesystem::filesystem_error& e) {
      err_ << "error: Io: " << e.what() << '\n';
      return kExitDomain;
    }
    return kExitUsage;
  }

 private:
  void summary(const std::string& line) {
    if (!g_.no_timestamps) out_ << '[' << detail::timestamp() << "] ";
    out_ << line << '\n';
  }

  int corpus_build(const std::string& in_path, corpus::Format format, const corpus::KeywordFilter& filter,
                   std::size_t top_k, const std::string& out_path, const std::string& stats_path) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw Error(Errc::UnreadableStream, "cannot open " + in_path);
    auto result = corpus::build_corpus(in, format, filter, top_k);
    for (const auto& d : result.diagnostics) err_ << in_path << ':' << d.line << ": " << d.message << '\n';

    std::ostringstream pairs;
    corpus::write_pairs_jsonl(pairs, result.pairs);
    detail::write_text(out_path, pairs.str());
    detail::write_text(stats_path, detail::json_text(result.stats));

    out_ << corpus::stats_report(result.stats);
    summary("read " + std::to_string(result.input) + " / matched " + std::to_string(result.matched) + " / kept " +
            std::to_string(result.pairs.size()) + " / skipped " + std::to_string(result.stats.skipped_no_abstract) +
            " / deduped " + std::to_string(result.stats.duplicates_removed));
    return kExitOk;
  }

  int ahp_weights(const std::string& matrix_path, const ahp::AhpConfig& cfg, const std::string& out_path) {
    auto m = detail::read_json(matrix_path).get<ahp::JudgmentMatrix>();
    auto result = ahp::derive_weights(m, cfg);
    for (const auto& w : result.validation.warnings) err_ << "warning: " << w.message << '\n';
    std::size_t width = 0;
    for (const auto& l : result.weights.labels) width = std::max(width, l.size());
    for (std::size_t i = 0; i < result.weights.size(); ++i) {
      out_ << std::left << std::setw(static_cast<int>(width + 2)) << result.weights.labels[i]
           << text::format_fixed(result.weights.weights[i], 4) << '\n';
    }
    const auto& c = result.consistency;
    out_ << "lambda_max " << text::format_fixed(c.lambda_max, 4) << '\n'
         << "CI " << text::format_fixed(c.ci, 4) << '\n'
         << "RI " << text::format_fixed(c.ri, 2) << '\n'
         << "CR " << text::format_fixed(c.cr, 4) << '\n'
         << (c.passed ? "PASS" : "FAIL") << " (CR < " << text::format_fixed(c.threshold, 2, true) << ")\n";
    if (!out_path.empty()) detail::write_text(out_path, detail::json_text(ahp::result_json(result)));
    return kExitOk;
  }

  int judge_run(const std::string& task_path, const judge::JudgeConfig& cfg, judge::LlmClient& backend,
                const std::string& metric, const std::string& out_path, const std::string& json_path) {
    auto task = detail::read_json(task_path).get<judge::JudgeTask>();
    auto runs = judge::run_judging(task, cfg, backend);
    for (const auto& r : runs.runs) {
      if (r.error) err_ << r.id() << ": " << to_string(r.error->code) << ": " << r.error->message << '\n';
    }
    auto agg = judge::aggregate_runs(runs, metric);
    auto means = scoring::metric_means(agg.table);
    const auto csv = scoring::rating_csv(agg.table, "run");
    out_ << csv << "mean";
    for (double m : means.means) out_ << ',' << text::format_fixed(m, 1, true);
    out_ << '\n';
    if (!out_path.empty()) detail::write_text(out_path, csv);
    if (!json_path.empty()) {
      nlohmann::json j{{"task", task}, {"config", cfg}, {"runs", runs.runs}, {"table", agg.table},
                       {"means", means.means}, {"failed", agg.failed}};
      detail::write_text(json_path, detail::json_text(j));
    }
    summary("judged " + std::to_string(runs.runs.size()) + " runs, " + std::to_string(agg.failed) +
            " failed; means " + detail::means_row(means));
    return kExitOk;
  }

  int report_cmd(const std::string& ratings_dir, const std::string& matrix_path, const ahp::AhpConfig& cfg,
                 const std::string& json_path) {
    auto m = detail::read_json(matrix_path).get<ahp::JudgmentMatrix>();
    auto result = ahp::derive_weights(m, cfg);
    if (!result.consistency.passed) {
      throw Error(Errc::InconsistentMatrix, "consistency ratio " + text::format_fixed(result.consistency.cr, 4) +
                                                " is not below " + text::format_fixed(result.consistency.threshold, 4));
    }
    std::vector<scoring::RatingTable> tables;
    std::vector<std::string> missing;
    for (const auto& metric : m.labels) {
      auto path = std::filesystem::path(ratings_dir) / (text::slug(metric) + ".csv");
      if (!std::filesystem::exists(path)) {
        missing.push_back(metric + ": no ratings file " + path.string());
        continue;
      }
      tables.push_back(scoring::parse_rating_csv(text::read_file(path.string()), metric));
    }
    if (!missing.empty()) throw Error(Errc::MissingRatings, "ratings missing for " + std::to_string(missing.size()) + " metrics", missing);
    auto eval = scoring::evaluate(tables, result.weights, result.consistency);
    out_ << scoring::text_report(eval);
    if (!json_path.empty()) detail::write_text(json_path, detail::json_text(eval));
    return kExitOk;
  }

  int serve_cmd(const std::string& addr, const std::string& static_dir, service::ServiceOptions opts) {
    auto [host, port] = detail::split_addr(addr);
    service::Service svc(std::move(opts));
    std::optional<std::filesystem::path> mount;
    if (!static_dir.empty()) mount = static_dir;
    http_api::ApiServer api(svc, mount);
    if (port == 0) {
      port = api.bind_any(host);
      if (port < 0) {
        err_ << "error: Io: cannot bind " << host << '\n';
        return kExitDomain;
      }
    } else if (!api.bind(host, port)) {
      err_ << "error: Io: cannot bind " << addr << '\n';
      return kExitDomain;
    }

    detail::pending_signal.store(0);
    auto old_int = std::signal(SIGINT, detail::on_signal);
    auto old_term = std::signal(SIGTERM, detail::on_signal);
    std::jthread watcher([&api](std::stop_token st) {
      while (!st.stop_requested() && detail::pending_signal.load() == 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      api.stop();
    });
    summary("listening on http://" + host + ":" + std::to_string(port) + " data-dir " + svc.options().data_dir.string());
    out_.flush();
    api.listen();
    watcher.request_stop();
    watcher.join();
    std::signal(SIGINT, old_int);
    std::signal(SIGTERM, old_term);
    summary("stopped");
    return kExitOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Globals g_;
};

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Runner(out, err).run(argc, argv);
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"llmeval"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace llmeval::cli
