#pragma once

// Evaluation sessions: a pairwise judgment matrix filled cell by cell with
// live consistency feedback, expert ratings, judge jobs, and the weighted
// report. Each session is one JSON snapshot file under the data directory.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmeval/ahp.hpp"
#include "llmeval/error.hpp"
#include "llmeval/judge.hpp"
#include "llmeval/judge_http.hpp"
#include "llmeval/scoring.hpp"
#include "llmeval/text.hpp"

namespace llmeval::service {

struct SessionConfig {
  ahp::Reciprocity reciprocity = ahp::Reciprocity::Strict;
  std::string ri_table = "saaty";
  double cr_threshold = 0.1;

  ahp::AhpConfig ahp_config() const {
    ahp::AhpConfig cfg;
    cfg.reciprocity_mode = reciprocity;
    cfg.ri_table = ahp::ri_table_by_name(ri_table);
    cfg.cr_threshold = cr_threshold;
    return cfg;
  }
};

inline void to_json(nlohmann::json& j, const SessionConfig& c) {
  j = nlohmann::json{{"reciprocity", ahp::to_string(c.reciprocity)},
                     {"ri_table", c.ri_table},
                     {"cr_threshold", c.cr_threshold}};
}

inline void from_json(const nlohmann::json& j, SessionConfig& c) {
  c.reciprocity = ahp::parse_reciprocity(j.value("reciprocity", std::string(ahp::to_string(c.reciprocity))));
  c.ri_table = j.value("ri_table", c.ri_table);
  ahp::ri_table_by_name(c.ri_table);
  c.cr_threshold = j.value("cr_threshold", c.cr_threshold);
}

// metric -> expert -> subject -> score
using RatingStore = std::map<std::string, std::map<std::string, std::map<std::string, double>>>;

struct Session {
  std::string id;
  std::vector<std::string> metrics;
  std::vector<std::string> subjects;
  SessionConfig config;
  std::vector<std::vector<std::optional<double>>> judgment;  // diagonal always 1
  RatingStore ratings;
  std::vector<nlohmann::json> judge_results;

  std::size_t metric_count() const { return metrics.size(); }

  // Unset upper-triangle cells. In lenient mode a pair counts as unset
  // until both directions are filled.
  std::size_t cells_remaining() const {
    std::size_t remaining = 0;
    const auto n = metrics.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!judgment[i][j] || !judgment[j][i]) ++remaining;
      }
    }
    return remaining;
  }

  bool matrix_complete() const { return cells_remaining() == 0; }

  ahp::JudgmentMatrix matrix() const {
    ahp::JudgmentMatrix m = ahp::JudgmentMatrix::uniform(metrics);
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      for (std::size_t j = 0; j < metrics.size(); ++j) {
        if (judgment[i][j]) m.entries[i][j] = *judgment[i][j];
      }
    }
    return m;
  }

  std::size_t rating_count() const {
    std::size_t count = 0;
    for (const auto& [metric, experts] : ratings) {
      for (const auto& [expert, scores] : experts) count += scores.size();
    }
    return count;
  }
};

inline void to_json(nlohmann::json& j, const Session& s) {
  nlohmann::json judgment = nlohmann::json::array();
  for (const auto& row : s.judgment) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& cell : row) r.push_back(cell ? nlohmann::json(*cell) : nlohmann::json(nullptr));
    judgment.push_back(std::move(r));
  }
  j = nlohmann::json{{"id", s.id},           {"metrics", s.metrics},         {"subjects", s.subjects},
                     {"config", s.config},   {"judgment", judgment},         {"ratings", s.ratings},
                     {"judge_results", s.judge_results}};
}

inline void from_json(const nlohmann::json& j, Session& s) {
  j.at("id").get_to(s.id);
  j.at("metrics").get_to(s.metrics);
  j.at("subjects").get_to(s.subjects);
  j.at("config").get_to(s.config);
  s.judgment.clear();
  for (const auto& row : j.at("judgment")) {
    std::vector<std::optional<double>> r;
    for (const auto& cell : row) {
      r.push_back(cell.is_null() ? std::nullopt : std::optional<double>(cell.get<double>()));
    }
    s.judgment.push_back(std::move(r));
  }
  j.at("ratings").get_to(s.ratings);
  s.judge_results = j.at("judge_results").get<std::vector<nlohmann::json>>();
}

struct LiveConsistency {
  bool complete = false;
  std::size_t cells_remaining = 0;
  std::optional<ahp::ConsistencyReport> report;
  std::optional<ahp::PriorityVector> weights;
};

inline void to_json(nlohmann::json& j, const LiveConsistency& l) {
  j = nlohmann::json{{"complete", l.complete}, {"cells_remaining", l.cells_remaining}};
  if (l.report) j["consistency"] = *l.report;
  if (l.weights) j["weights"] = *l.weights;
}

struct RatingInput {
  std::string expert;
  std::string subject;
  std::string metric;
  double score = 0.0;
};

struct JudgeJobRequest {
  judge::JudgeTask task;
  judge::JudgeConfig config;
  std::optional<std::filesystem::path> replay_dir;
  std::optional<judge::HttpBackendConfig> backend;
};

enum class JobStatus { Running, Completed, Failed };

constexpr std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Running: return "running";
    case JobStatus::Completed: return "completed";
    case JobStatus::Failed: return "failed";
  }
  return "unknown";
}

struct ServiceOptions {
  std::filesystem::path data_dir = "data";
  std::optional<judge::HttpBackendConfig> default_backend;
};

namespace detail {

inline std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

inline std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? names.size() : static_cast<std::size_t>(it - names.begin());
}

inline std::string snapshot_text(const Session& s) { return nlohmann::json(s).dump(2) + "\n"; }

}  // namespace detail

class Service {
 public:
  explicit Service(ServiceOptions options) : options_(std::move(options)) {
    std::filesystem::create_directories(sessions_dir());
    load_snapshots();
  }

  ~Service() {
    std::vector<std::jthread> workers;
    {
      std::lock_guard lock(jobs_mu_);
      workers.swap(workers_);
    }
    // jthread joins on destruction
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceOptions& options() const { return options_; }

  // -- sessions -------------------------------------------------------------

  std::string create_session(std::vector<std::string> metrics, std::vector<std::string> subjects,
                             SessionConfig config = {}) {
    if (metrics.size() < 2) throw Error(Errc::BadRequest, "a session needs at least 2 metrics");
    if (subjects.empty()) throw Error(Errc::BadRequest, "a session needs at least 1 subject");
    check_names(metrics, "metric");
    check_names(subjects, "subject");
    ahp::ri_table_by_name(config.ri_table);
    if (!(config.cr_threshold > 0.0)) throw Error(Errc::BadRequest, "cr_threshold must be positive");

    auto slot = std::make_shared<Slot>();
    Session& s = slot->session;
    s.id = detail::random_id();
    s.metrics = std::move(metrics);
    s.subjects = std::move(subjects);
    s.config = std::move(config);
    const auto n = s.metrics.size();
    s.judgment.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) s.judgment[i][i] = 1.0;
    persist(s);
    std::unique_lock lock(sessions_mu_);
    sessions_.emplace(s.id, slot);
    return s.id;
  }

  Session session(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    return slot->session;
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(sessions_mu_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : sessions_) ids.push_back(id);
    return ids;
  }

  // Session snapshot plus derived workflow state.
  nlohmann::json session_view(const std::string& id) const {
    auto s = session(id);
    auto live = live_consistency(s);
    nlohmann::json j = s;
    j["status"] = {{"matrix", live.complete ? "complete" : "incomplete"},
                   {"cells_remaining", live.cells_remaining},
                   {"consistency", !live.report ? "unknown" : (live.report->passed ? "pass" : "fail")},
                   {"state", workflow_state(s, live)},
                   {"ratings", s.rating_count()}};
    return j;
  }

  // Strict mode writes 1/value into (j, i) under the same lock.
  LiveConsistency submit_judgment(const std::string& id, std::size_t i, std::size_t j, double value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw Error(Errc::NonPositiveValue, "judgment values must be positive and finite");
    }
    return mutate(id, [&](Session& s) {
      const auto n = s.metric_count();
      if (i >= n || j >= n || i == j) {
        throw Error(Errc::BadCell, "cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                       ") is not an off-diagonal cell of a " + std::to_string(n) + "x" +
                                       std::to_string(n) + " matrix");
      }
      s.judgment[i][j] = value;
      if (s.config.reciprocity == ahp::Reciprocity::Strict) s.judgment[j][i] = 1.0 / value;
      return live_consistency(s);
    });
  }

  // Replaces the whole matrix, verbatim (lenient sessions) or checked for
  // reciprocity (strict sessions).
  LiveConsistency import_matrix(const std::string& id, const std::vector<std::vector<double>>& entries) {
    return mutate(id, [&](Session& s) {
      ahp::JudgmentMatrix m{s.metrics, entries};
      auto report = ahp::validate_matrix(m, s.config.reciprocity);
      if (!report.ok()) throw Error(Errc::BadRequest, "imported matrix is invalid", report.error_messages());
      for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t k = 0; k < entries.size(); ++k) s.judgment[i][k] = entries[i][k];
      }
      return live_consistency(s);
    });
  }

  LiveConsistency weights(const std::string& id) const { return live_consistency(session(id)); }

  // Upsert keyed by (expert, subject, metric). Returns the number of stored
  // ratings in the session.
  std::size_t submit_ratings(const std::string& id, const std::vector<RatingInput>& inputs) {
    return mutate(id, [&](Session& s) {
      for (const auto& r : inputs) validate_rating(s, r);
      for (const auto& r : inputs) s.ratings[r.metric][r.expert][r.subject] = r.score;
      return s.rating_count();
    });
  }

  std::size_t submit_rating(const std::string& id, const RatingInput& input) { return submit_ratings(id, {input}); }

  nlohmann::json report(const std::string& id) const {
    auto s = session(id);
    auto live = live_consistency(s);
    if (!live.complete) {
      throw Error(Errc::MatrixIncomplete,
                  "judgment matrix has " + std::to_string(live.cells_remaining) + " unset cells");
    }
    if (!live.report->passed) {
      throw Error(Errc::InconsistentMatrix,
                  "consistency ratio " + text::format_fixed(live.report->cr, 4) + " is not below " +
                      text::format_fixed(live.report->threshold, 4));
    }
    auto tables = rating_tables(s);
    auto evaluation = scoring::evaluate(tables, *live.weights, *live.report);
    nlohmann::json j = evaluation;
    j["session"] = s.id;
    nlohmann::json judge = nlohmann::json::array();
    for (const auto& r : s.judge_results) {
      judge.push_back({{"job_id", r.at("job_id")},
                       {"labels", r.at("labels")},
                       {"means", r.at("means")},
                       {"runs_used", r.at("table").at("raters").size()},
                       {"failed", r.at("failed")}});
    }
    j["judge"] = judge;
    return j;
  }

  // Builds one complete rating grid per metric or throws MissingRatings
  // listing every gap.
  static std::vector<scoring::RatingTable> rating_tables(const Session& s) {
    std::vector<std::string> gaps;
    std::vector<scoring::RatingTable> tables;
    for (const auto& metric : s.metrics) {
      scoring::RatingTable t{metric, {}, s.subjects, {}};
      auto it = s.ratings.find(metric);
      if (it != s.ratings.end()) {
        for (const auto& [expert, scores] : it->second) {
          std::vector<double> row;
          for (const auto& subject : s.subjects) {
            auto sc = scores.find(subject);
            if (sc == scores.end()) {
              gaps.push_back(metric + "/" + subject + ": no rating from " + expert);
            } else {
              row.push_back(sc->second);
            }
          }
          if (row.size() == s.subjects.size()) {
            t.raters.push_back(expert);
            t.scores.push_back(std::move(row));
          }
        }
      }
      for (const auto& subject : s.subjects) {
        bool any = it != s.ratings.end() && std::any_of(it->second.begin(), it->second.end(), [&](const auto& e) {
                     return e.second.count(subject) > 0;
                   });
        if (!any) gaps.push_back(metric + "/" + subject + ": no ratings");
      }
      tables.push_back(std::move(t));
    }
    if (!gaps.empty()) throw Error(Errc::MissingRatings, std::to_string(gaps.size()) + " rating gaps", gaps);
    return tables;
  }

  // -- judge jobs -----------------------------------------------------------

  std::string start_judge_job(const std::string& session_id, JudgeJobRequest request) {
    find(session_id);
    request.task.validate();
    request.config.validate();
    auto backend = make_backend(request);

    auto job = std::make_shared<Job>();
    job->id = detail::random_id();
    job->session_id = session_id;
    {
      std::lock_guard lock(jobs_mu_);
      jobs_.emplace(job->id, job);
      workers_.emplace_back([this, job, request = std::move(request), backend = std::move(backend)]() mutable {
        run_job(*job, request, *backend);
      });
    }
    return job->id;
  }

  nlohmann::json poll_job(const std::string& job_id) const {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(jobs_mu_);
      auto it = jobs_.find(job_id);
      if (it == jobs_.end()) throw Error(Errc::UnknownJob, "no judge job '" + job_id + "'");
      job = it->second;
    }
    std::lock_guard lock(job->mu);
    nlohmann::json j{{"id", job->id}, {"session", job->session_id}, {"status", to_string(job->status)}};
    if (!job->result.is_null()) j["result"] = job->result;
    if (!job->errors.empty()) j["errors"] = job->errors;
    return j;
  }

  // Blocks until the job leaves the running state.
  nlohmann::json wait_job(const std::string& job_id) const {
    for (;;) {
      auto j = poll_job(job_id);
      if (j.at("status") != "running") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  std::filesystem::path snapshot_path(const std::string& id) const { return sessions_dir() / (id + ".json"); }

 private:
  struct Slot {
    mutable std::mutex mu;
    Session session;
  };

  struct Job {
    std::string id;
    std::string session_id;
    mutable std::mutex mu;
    JobStatus status = JobStatus::Running;
    nlohmann::json result;
    std::vector<std::string> errors;
  };

  std::filesystem::path sessions_dir() const { return options_.data_dir / "sessions"; }

  static void check_names(const std::vector<std::string>& names, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (text::trim(n).empty()) throw Error(Errc::BadRequest, what + " names must be non-empty");
      if (!seen.insert(n).second) throw Error(Errc::BadRequest, "duplicate " + what + " name '" + n + "'");
    }
  }

  static void validate_rating(const Session& s, const RatingInput& r) {
    if (text::trim(r.expert).empty()) throw Error(Errc::BadRequest, "expert name must be non-empty");
    if (detail::index_of(s.subjects, r.subject) == s.subjects.size()) {
      throw Error(Errc::UnknownName, "unknown subject '" + r.subject + "'");
    }
    if (detail::index_of(s.metrics, r.metric) == s.metrics.size()) {
      throw Error(Errc::UnknownName, "unknown metric '" + r.metric + "'");
    }
    if (!std::isfinite(r.score) || r.score < scoring::kScoreMin || r.score > scoring::kScoreMax) {
      throw Error(Errc::OutOfRange, "score " + text::format_fixed(r.score, 4, true) + " is outside [0, 100]");
    }
  }

  static LiveConsistency live_consistency(const Session& s) {
    LiveConsistency live;
    live.cells_remaining = s.cells_remaining();
    live.complete = live.cells_remaining == 0;
    if (live.complete) {
      auto result = ahp::derive_weights(s.matrix(), s.config.ahp_config());
      live.report = result.consistency;
      live.weights = std::move(result.weights);
    }
    return live;
  }

  static std::string workflow_state(const Session& s, const LiveConsistency& live) {
    if (!live.complete) return "draft";
    if (!live.report->passed) return "matrix-complete";
    try {
      rating_tables(s);
    } catch (const Error&) {
      return "consistent";
    }
    return "reportable";
  }

  std::shared_ptr<Slot> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  // Applies `fn` to a copy under the session lock; the copy replaces the
  // stored session only after it has been persisted.
  template <typename Fn>
  std::invoke_result_t<Fn&, Session&> mutate(const std::string& id, Fn&& fn) {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    Session draft = slot->session;
    auto result = fn(draft);
    persist(draft);
    slot->session = std::move(draft);
    return result;
  }

  void persist(const Session& s) const {
    const auto path = snapshot_path(s.id);
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << detail::snapshot_text(s);
      out.flush();
      if (!out) throw Error(Errc::Io, "failed to write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  void load_snapshots() {
    for (const auto& entry : std::filesystem::directory_iterator(sessions_dir())) {
      if (entry.path().extension() != ".json") continue;
      auto slot = std::make_shared<Slot>();
      try {
        nlohmann::json::parse(text::read_file(entry.path().string())).get_to(slot->session);
      } catch (const std::exception& e) {
        throw Error(Errc::Io, "corrupt session snapshot " + entry.path().string() + ": " + e.what());
      }
      sessions_.emplace(slot->session.id, slot);
    }
  }

  std::unique_ptr<judge::LlmClient> make_backend(const JudgeJobRequest& request) const {
    if (request.replay_dir) return std::make_unique<judge::ReplayBackend>(*request.replay_dir);
    if (request.backend) return std::make_unique<judge::HttpChatBackend>(*request.backend);
    if (options_.default_backend) return std::make_unique<judge::HttpChatBackend>(*options_.default_backend);
    throw Error(Errc::BackendUnavailable, "no judge backend configured and no replay_dir given");
  }

  void run_job(Job& job, const JudgeJobRequest& request, judge::LlmClient& backend) {
    nlohmann::json result;
    std::vector<std::string> errors;
    bool ok = false;
    try {
      auto runs = judge::run_judging(request.task, request.config, backend);
      auto agg = judge::aggregate_runs(runs);
      auto means = scoring::metric_means(agg.table);
      nlohmann::json run_json = nlohmann::json::array();
      for (const auto& r : runs.runs) {
        run_json.push_back(r);
        if (r.error) errors.push_back(r.id() + ": " + std::string(to_string(r.error->code)) + ": " + r.error->message);
      }
      result = {{"job_id", job.id},  {"task", request.task},   {"config", request.config},
                {"labels", runs.labels}, {"runs", run_json}, {"table", agg.table},
                {"means", means.means}, {"failed", agg.failed}};
      mutate(job.session_id, [&](Session& s) {
        s.judge_results.push_back(result);
        return 0;
      });
      ok = true;
    } catch (const Error& e) {
      errors = e.details();
      errors.insert(errors.begin(), std::string(to_string(e.code())) + ": " + e.what());
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
    std::lock_guard lock(job.mu);
    job.result = std::move(result);
    job.errors = std::move(errors);
    job.status = ok ? JobStatus::Completed : JobStatus::Failed;
  }

  ServiceOptions options_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  mutable std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::jthread> workers_;
};

}  // namespace llmeval::service
