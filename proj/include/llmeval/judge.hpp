#pragma once

// LLM-as-judge protocol: render the multi-assistant grading prompt, pull
// per-assistant scores out of free-form replies, run repeated judgings and
// fold them into a rating table.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmeval/error.hpp"
#include "llmeval/scoring.hpp"
#include "llmeval/text.hpp"

namespace llmeval::judge {

struct Answer {
  std::string label;  // subject under evaluation, e.g. a model name
  std::string text;
  friend bool operator==(const Answer&, const Answer&) = default;
};

struct JudgeTask {
  std::string question;
  std::vector<Answer> answers;

  std::size_t size() const { return answers.size(); }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& a : answers) out.push_back(a.label);
    return out;
  }

  void validate() const {
    if (answers.empty()) throw Error(Errc::InvalidArgument, "judge task needs at least one answer");
    if (text::trim(question).empty()) throw Error(Errc::InvalidArgument, "judge task question is empty");
    std::set<std::string> seen;
    for (const auto& a : answers) {
      if (text::trim(a.text).empty()) throw Error(Errc::InvalidArgument, "answer '" + a.label + "' is empty");
      if (!seen.insert(a.label).second) throw Error(Errc::InvalidArgument, "duplicate answer label '" + a.label + "'");
    }
  }
  friend bool operator==(const JudgeTask&, const JudgeTask&) = default;
};

struct JudgeConfig {
  std::size_t runs = 5;
  bool permute_order = false;
  std::uint64_t seed = 0;
  std::size_t concurrency_limit = 4;
  std::size_t retry_limit = 2;
  double score_min = 0.0;
  double score_max = 100.0;

  void validate() const {
    if (runs < 1) throw Error(Errc::InvalidArgument, "runs must be at least 1");
    if (concurrency_limit < 1) throw Error(Errc::InvalidArgument, "concurrency_limit must be at least 1");
    if (!(score_min < score_max)) throw Error(Errc::InvalidArgument, "score_min must be below score_max");
  }
};

enum class ExtractionRule {
  LeadingLine,     // first non-empty line holds exactly n numbers
  AnyLine,         // some later line holds exactly n numbers
  LabelledColon,   // "Assistant k: <num>"
  LabelledScore,   // "(Score: <num>)" / "score of <num>" near "Assistant k"
};

constexpr std::string_view to_string(ExtractionRule rule) {
  switch (rule) {
    case ExtractionRule::LeadingLine: return "R1";
    case ExtractionRule::AnyLine: return "R2";
    case ExtractionRule::LabelledColon: return "R3";
    case ExtractionRule::LabelledScore: return "R4";
  }
  return "?";
}

struct ParsedScores {
  std::vector<double> scores;
  ExtractionRule rule = ExtractionRule::LeadingLine;
  std::string raw_reply;
};

// ---------------------------------------------------------------------------
// Prompt

namespace detail {

inline std::string count_word(std::size_t n) {
  static constexpr std::string_view words[] = {"zero", "one", "two",   "three", "four", "five",
                                               "six",  "seven", "eight", "nine",  "ten"};
  return n < std::size(words) ? std::string(words[n]) : std::to_string(n);
}

inline std::string number_text(double v) { return text::format_fixed(v, 6, true); }

}  // namespace detail

// `order[k]` is the index of the answer shown in position k; empty means the
// task order.
inline std::string render_prompt(const JudgeTask& task, const std::vector<std::size_t>& order = {},
                                 double score_min = 0.0, double score_max = 100.0) {
  task.validate();
  const auto n = task.size();
  if (!order.empty() && order.size() != n) {
    throw Error(Errc::DimensionMismatch, "presentation order has the wrong length");
  }
  const auto word = detail::count_word(n);
  std::ostringstream out;
  out << "[System]\n"
      << "We would like to request your feedback on the performance of " << word << " AI assistant"
      << (n == 1 ? "" : "s") << " in response to the user question displayed above.\n"
      << "Please rate the helpfulness, relevance, accuracy, level of details of their responses. "
      << "Each assistant receives an overall score on a scale of " << detail::number_text(score_min) << " to "
      << detail::number_text(score_max) << ", where a higher score indicates better overall performance.\n"
      << "Please first output a single line containing only " << word << " value" << (n == 1 ? "" : "s")
      << " indicating the scores for Assistant ";
  for (std::size_t k = 1; k <= n; ++k) out << (k > 1 ? ", " : "") << k;
  out << (n == 1 ? "." : ", respectively.");
  if (n > 1) {
    out << " The " << word << " scores are separated by a space.";
  }
  out << " In the subsequent line, please provide a comprehensive explanation of your evaluation, "
      << "avoiding any potential bias and ensuring that the order in which the responses were presented "
      << "does not affect your judgment.\n\n"
      << "[Question]\n"
      << task.question << "\n\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto& answer = task.answers[order.empty() ? k : order[k]];
    out << "[The Start of Assistant " << k + 1 << "'s Answer]\n"
        << answer.text << "\n\n"
        << "[The End of Assistant " << k + 1 << "'s Answer]\n";
    if (k + 1 < n) out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Score extraction

namespace detail {

// A "score line" is an optional lead-in ending in ':' followed only by
// numbers (trailing '.', ',' or ';' tolerated), e.g.
// "The overall scores ... are as follows: 95 92 90 88 85 80."
inline std::optional<std::vector<double>> score_line(std::string_view line) {
  auto s = text::trim(line);
  if (auto colon = s.rfind(':'); colon != std::string_view::npos) s = text::trim(s.substr(colon + 1));
  if (s.empty()) return std::nullopt;
  std::vector<double> values;
  std::string token;
  std::istringstream in{std::string(s)};
  while (in >> token) {
    while (!token.empty() && (token.back() == '.' || token.back() == ',' || token.back() == ';')) token.pop_back();
    if (token.empty()) continue;
    auto v = text::parse_double(token);
    if (!v) return std::nullopt;
    values.push_back(*v);
  }
  if (values.empty()) return std::nullopt;
  return values;
}

inline const std::regex& label_colon_re() {
  static const std::regex re(R"(\bAssistant[ \t]*(\d+)[ \t]*:[ \t]*([+-]?\d+(?:\.\d+)?))",
                             std::regex::icase);
  return re;
}

inline const std::regex& leading_label_re() {
  static const std::regex re(R"(^[ \t]*Assistant[ \t]*(\d+)\b)", std::regex::icase);
  return re;
}

inline const std::regex& inline_label_re() {
  static const std::regex re(R"(\bAssistant[ \t]*(\d+)\b)", std::regex::icase);
  return re;
}

inline const std::regex& paren_score_re() {
  static const std::regex re(R"(\(\s*score\s*:\s*([+-]?\d+(?:\.\d+)?)\s*\))", std::regex::icase);
  return re;
}

inline const std::regex& prose_score_re() {
  static const std::regex re(R"(\bscore of ([+-]?\d+(?:\.\d+)?))", std::regex::icase);
  return re;
}

inline std::optional<std::size_t> assistant_index(const std::string& digits, std::size_t n) {
  auto k = text::parse_integer(digits);
  if (!k || *k < 1 || static_cast<std::size_t>(*k) > n) return std::nullopt;
  return static_cast<std::size_t>(*k - 1);
}

inline std::optional<std::vector<double>> complete(const std::vector<std::optional<double>>& slots) {
  std::vector<double> out;
  for (const auto& s : slots) {
    if (!s) return std::nullopt;
    out.push_back(*s);
  }
  return out;
}

inline std::optional<std::vector<double>> rule_leading_line(const std::vector<std::string>& lines, std::size_t n) {
  for (const auto& line : lines) {
    if (text::trim(line).empty()) continue;
    auto values = score_line(line);
    if (values && values->size() == n) return values;
    return std::nullopt;
  }
  return std::nullopt;
}

inline std::optional<std::vector<double>> rule_any_line(const std::vector<std::string>& lines, std::size_t n) {
  for (const auto& line : lines) {
    auto values = score_line(line);
    if (values && values->size() == n) return values;
  }
  return std::nullopt;
}

inline std::optional<std::vector<double>> rule_labelled_colon(const std::string& reply, std::size_t n) {
  std::vector<std::optional<double>> slots(n);
  for (auto it = std::sregex_iterator(reply.begin(), reply.end(), label_colon_re()); it != std::sregex_iterator();
       ++it) {
    auto k = assistant_index((*it)[1].str(), n);
    if (!k || slots[*k]) continue;
    slots[*k] = text::parse_double((*it)[2].str());
  }
  return complete(slots);
}

// "(Score: x)" annotates the paragraph it sits in, so it belongs to the
// assistant named at the start of the current paragraph. "score of x" is
// prose and belongs to the nearest "Assistant k" before it on the same
// line, falling back to the paragraph owner.
inline std::optional<std::vector<double>> rule_labelled_score(const std::vector<std::string>& lines, std::size_t n) {
  std::vector<std::optional<double>> slots(n);
  std::optional<std::size_t> owner;
  auto assign = [&](std::optional<std::size_t> k, const std::string& num) {
    if (k && !slots[*k]) slots[*k] = text::parse_double(num);
  };
  for (const auto& line : lines) {
    std::smatch lead;
    if (std::regex_search(line, lead, leading_label_re())) {
      owner = assistant_index(lead[1].str(), n);
    }
    std::vector<std::pair<std::ptrdiff_t, std::optional<std::size_t>>> mentions;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), inline_label_re()); it != std::sregex_iterator();
         ++it) {
      mentions.emplace_back(it->position(), assistant_index((*it)[1].str(), n));
    }
    for (auto it = std::sregex_iterator(line.begin(), line.end(), paren_score_re()); it != std::sregex_iterator();
         ++it) {
      assign(owner, (*it)[1].str());
    }
    for (auto it = std::sregex_iterator(line.begin(), line.end(), prose_score_re()); it != std::sregex_iterator();
         ++it) {
      std::optional<std::size_t> target = owner;
      for (const auto& [pos, k] : mentions) {
        if (pos < it->position()) target = k;
      }
      assign(target, (*it)[1].str());
    }
  }
  return complete(slots);
}

}  // namespace detail

// Rules are tried in order R1..R4; the first that yields exactly n in-range
// numbers wins. Out-of-range candidates are never clamped.
inline ParsedScores parse_scores(const std::string& reply, std::size_t n, const JudgeConfig& cfg = {}) {
  if (n < 1) throw Error(Errc::InvalidArgument, "parse_scores needs n >= 1");
  const auto lines = text::split_lines(reply);
  bool saw_out_of_range = false;
  std::string out_of_range_detail;

  auto accept = [&](std::optional<std::vector<double>> candidate, ExtractionRule rule) -> std::optional<ParsedScores> {
    if (!candidate) return std::nullopt;
    for (double v : *candidate) {
      if (v < cfg.score_min || v > cfg.score_max) {
        saw_out_of_range = true;
        out_of_range_detail = std::string(to_string(rule)) + " found " + text::format_fixed(v, 4, true);
        return std::nullopt;
      }
    }
    return ParsedScores{std::move(*candidate), rule, reply};
  };

  if (auto p = accept(detail::rule_leading_line(lines, n), ExtractionRule::LeadingLine)) return *p;
  if (auto p = accept(detail::rule_any_line(lines, n), ExtractionRule::AnyLine)) return *p;
  if (auto p = accept(detail::rule_labelled_colon(reply, n), ExtractionRule::LabelledColon)) return *p;
  if (auto p = accept(detail::rule_labelled_score(lines, n), ExtractionRule::LabelledScore)) return *p;

  if (saw_out_of_range) {
    throw Error(Errc::OutOfRange,
                "scores outside [" + text::format_fixed(cfg.score_min, 4, true) + ", " +
                    text::format_fixed(cfg.score_max, 4, true) + "]",
                {out_of_range_detail});
  }
  throw Error(Errc::ParseFailure, "no extraction rule found " + std::to_string(n) + " scores in the reply");
}

// ---------------------------------------------------------------------------
// Backends

struct CallContext {
  std::size_t run_index = 0;  // zero-based
  std::size_t attempt = 0;    // zero for the first call, then one per retry
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string id() const = 0;
  // Returns the raw reply text; throws Error(BackendUnavailable) on failure.
  virtual std::string complete(const std::string& prompt, const CallContext& ctx) = 0;
};

// Serves stored replies from `dir/run_<k>.txt` (k one-based). Retries look
// for `run_<k>.retry<a>.txt` first and fall back to the original file.
class ReplayBackend : public LlmClient {
 public:
  explicit ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
      throw Error(Errc::BackendUnavailable, "replay directory '" + dir_.string() + "' does not exist");
    }
  }

  std::string id() const override { return "replay:" + dir_.string(); }

  std::string complete(const std::string& /*prompt*/, const CallContext& ctx) override {
    const auto k = std::to_string(ctx.run_index + 1);
    if (ctx.attempt > 0) {
      auto retry = dir_ / ("run_" + k + ".retry" + std::to_string(ctx.attempt) + ".txt");
      if (std::filesystem::exists(retry)) return text::read_file(retry.string());
    }
    auto path = dir_ / ("run_" + k + ".txt");
    if (!std::filesystem::exists(path)) {
      throw Error(Errc::BackendUnavailable, "no replay transcript " + path.string());
    }
    return text::read_file(path.string());
  }

  // Number of consecutive run_<k>.txt files starting at k = 1.
  std::size_t transcript_count() const {
    std::size_t k = 0;
    while (std::filesystem::exists(dir_ / ("run_" + std::to_string(k + 1) + ".txt"))) ++k;
    return k;
  }

 private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Runs

// Seeded Fisher-Yates over 0..n-1. Uses mt19937_64 output directly so the
// order is identical across standard library implementations.
inline std::vector<std::size_t> presentation_order(std::size_t n, std::uint64_t seed, std::size_t run_index) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run_index)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Maps scores given in presentation order back to task order.
inline std::vector<double> restore_order(const std::vector<double>& shown, const std::vector<std::size_t>& order) {
  if (order.empty()) return shown;
  std::vector<double> original(shown.size());
  for (std::size_t k = 0; k < order.size(); ++k) original[order[k]] = shown[k];
  return original;
}

struct RunError {
  Errc code = Errc::ParseFailure;
  std::string message;
};

struct JudgeRun {
  std::size_t run_index = 0;
  std::vector<std::size_t> permutation;  // order[k] = task index shown at k
  std::optional<ParsedScores> parsed;    // scores already in task order
  std::optional<RunError> error;
  std::size_t attempts = 0;
  double elapsed_ms = 0.0;
  std::string backend_id;

  bool ok() const { return parsed.has_value(); }
  std::string id() const { return "run_" + std::to_string(run_index + 1); }
};

struct JudgeRunSet {
  std::vector<std::string> labels;
  std::vector<JudgeRun> runs;

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const JudgeRun& r) { return !r.ok(); }));
  }
};

namespace detail {

inline JudgeRun judge_once(const JudgeTask& task, const JudgeConfig& cfg, LlmClient& backend, std::size_t run_index) {
  JudgeRun run;
  run.run_index = run_index;
  run.backend_id = backend.id();
  if (cfg.permute_order) run.permutation = presentation_order(task.size(), cfg.seed, run_index);
  const auto prompt = render_prompt(task, run.permutation, cfg.score_min, cfg.score_max);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t attempt = 0; attempt <= cfg.retry_limit; ++attempt) {
    ++run.attempts;
    try {
      auto reply = backend.complete(prompt, {run_index, attempt});
      auto parsed = parse_scores(reply, task.size(), cfg);
      parsed.scores = restore_order(parsed.scores, run.permutation);
      run.parsed = std::move(parsed);
      run.error.reset();
      break;
    } catch (const Error& e) {
      run.error = RunError{e.code(), e.what()};
    }
  }
  run.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return run;
}

}  // namespace detail

// Executes cfg.runs independent judgings with at most cfg.concurrency_limit
// calls in flight. Failed runs are retried up to cfg.retry_limit times and
// then kept as per-run errors; results come back ordered by run index.
inline JudgeRunSet run_judging(const JudgeTask& task, const JudgeConfig& cfg, LlmClient& backend) {
  task.validate();
  cfg.validate();
  JudgeRunSet result{task.labels(), std::vector<JudgeRun>(cfg.runs)};
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < cfg.runs; i = next.fetch_add(1)) {
      result.runs[i] = detail::judge_once(task, cfg, backend, i);
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto width = std::min(cfg.concurrency_limit, cfg.runs);
    for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
    worker();
  }

  if (result.failures() == result.runs.size()) {
    std::vector<std::string> details;
    bool all_backend = true;
    for (const auto& r : result.runs) {
      details.push_back(r.id() + ": " + std::string(to_string(r.error->code)) + ": " + r.error->message);
      all_backend = all_backend && r.error->code == Errc::BackendUnavailable;
    }
    if (all_backend) throw Error(Errc::BackendUnavailable, "judge backend failed on every run", details);
    throw Error(Errc::AllRunsFailed, "every judge run failed", details);
  }
  return result;
}

struct JudgeAggregate {
  scoring::RatingTable table;
  std::size_t failed = 0;
};

// Successful runs become rater rows (run ids) over the assistant labels.
inline JudgeAggregate aggregate_runs(const JudgeRunSet& set, std::string metric = "judge") {
  JudgeAggregate agg;
  agg.table.metric = std::move(metric);
  agg.table.subjects = set.labels;
  for (const auto& run : set.runs) {
    if (!run.ok()) {
      ++agg.failed;
      continue;
    }
    if (run.parsed->scores.size() != set.labels.size()) {
      throw Error(Errc::DimensionMismatch, run.id() + " has " + std::to_string(run.parsed->scores.size()) +
                                               " scores for " + std::to_string(set.labels.size()) + " assistants");
    }
    agg.table.raters.push_back(run.id());
    agg.table.scores.push_back(run.parsed->scores);
  }
  if (agg.table.raters.empty()) throw Error(Errc::NoSuccessfulRuns, "no successful judge runs to aggregate");
  return agg;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const JudgeTask& t) {
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& a : t.answers) answers.push_back({{"label", a.label}, {"text", a.text}});
  j = nlohmann::json{{"question", t.question}, {"answers", answers}};
}

inline void from_json(const nlohmann::json& j, JudgeTask& t) {
  if (!j.is_object() || !j.contains("question") || !j.contains("answers")) {
    throw Error(Errc::InvalidArgument, "judge task JSON needs \"question\" and \"answers\"");
  }
  j.at("question").get_to(t.question);
  t.answers.clear();
  for (const auto& a : j.at("answers")) t.answers.push_back({a.at("label").get<std::string>(), a.at("text").get<std::string>()});
}

inline void to_json(nlohmann::json& j, const JudgeConfig& c) {
  j = nlohmann::json{{"runs", c.runs},
                     {"permute_order", c.permute_order},
                     {"seed", c.seed},
                     {"concurrency_limit", c.concurrency_limit},
                     {"retry_limit", c.retry_limit},
                     {"score_min", c.score_min},
                     {"score_max", c.score_max}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, JudgeConfig& c) {
  c.runs = j.value("runs", c.runs);
  c.permute_order = j.value("permute_order", c.permute_order);
  c.seed = j.value("seed", c.seed);
  c.concurrency_limit = j.value("concurrency_limit", c.concurrency_limit);
  c.retry_limit = j.value("retry_limit", c.retry_limit);
  c.score_min = j.value("score_min", c.score_min);
  c.score_max = j.value("score_max", c.score_max);
}

inline void to_json(nlohmann::json& j, const JudgeRun& r) {
  j = nlohmann::json{{"run_index", r.run_index},   {"id", r.id()},
                     {"permutation", r.permutation}, {"attempts", r.attempts},
                     {"elapsed_ms", r.elapsed_ms},   {"backend", r.backend_id}};
  if (r.parsed) {
    j["scores"] = r.parsed->scores;
    j["extraction_rule"] = to_string(r.parsed->rule);
    j["raw_reply"] = r.parsed->raw_reply;
  }
  if (r.error) j["error"] = {{"code", to_string(r.error->code)}, {"message", r.error->message}};
}

}  // namespace llmeval::judge
