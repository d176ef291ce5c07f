#pragma once

// Rating grids -> per-metric means -> weighted composite scores -> ranking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmeval/ahp.hpp"
#include "llmeval/error.hpp"
#include "llmeval/text.hpp"

namespace llmeval::scoring {

inline constexpr double kScoreMin = 0.0;
inline constexpr double kScoreMax = 100.0;

// raters x subjects grid of 0-100 scores for one metric.
struct RatingTable {
  std::string metric;
  std::vector<std::string> raters;
  std::vector<std::string> subjects;
  std::vector<std::vector<double>> scores;

  void validate() const {
    if (scores.size() != raters.size()) {
      throw Error(Errc::DimensionMismatch, metric + ": " + std::to_string(scores.size()) + " score rows for " +
                                               std::to_string(raters.size()) + " raters");
    }
    for (std::size_t r = 0; r < scores.size(); ++r) {
      if (scores[r].size() != subjects.size()) {
        throw Error(Errc::DimensionMismatch, metric + ": rater '" + raters[r] + "' has " +
                                                 std::to_string(scores[r].size()) + " scores for " +
                                                 std::to_string(subjects.size()) + " subjects");
      }
      for (std::size_t s = 0; s < subjects.size(); ++s) {
        const double v = scores[r][s];
        if (!std::isfinite(v) || v < kScoreMin || v > kScoreMax) {
          throw Error(Errc::OutOfRange, metric + ": score " + text::format_fixed(v, 2, true) + " by '" +
                                            raters[r] + "' for '" + subjects[s] + "' is outside [0, 100]");
        }
      }
    }
  }
};

struct MetricSummary {
  std::string metric;
  std::vector<std::string> subjects;
  std::vector<double> means;
};

struct Contribution {
  std::string metric;
  double weight = 0.0;
  double mean = 0.0;
  double value = 0.0;  // weight * mean
};

struct CompositeScore {
  std::string subject;
  double score = 0.0;
  std::vector<Contribution> contributions;
};

struct RankedScore {
  std::size_t rank = 0;
  std::string subject;
  double score = 0.0;
};

inline MetricSummary metric_means(const RatingTable& t) {
  if (t.raters.empty() || t.subjects.empty()) {
    throw Error(Errc::EmptyTable, "rating table '" + t.metric + "' has no raters or no subjects");
  }
  t.validate();
  MetricSummary summary{t.metric, t.subjects, std::vector<double>(t.subjects.size(), 0.0)};
  for (std::size_t s = 0; s < t.subjects.size(); ++s) {
    double sum = 0.0;
    for (const auto& row : t.scores) sum += row[s];
    summary.means[s] = sum / static_cast<double>(t.raters.size());
  }
  return summary;
}

// score(subject) = sum_i w_i * mean_i(subject). Summaries are matched to the
// weight labels by metric name; no renormalization is applied.
inline std::vector<CompositeScore> composite_scores(const std::vector<MetricSummary>& summaries,
                                                   const ahp::PriorityVector& weights) {
  if (summaries.size() != weights.labels.size()) {
    throw Error(Errc::MetricMismatch, std::to_string(summaries.size()) + " metric summaries for " +
                                          std::to_string(weights.labels.size()) + " weights");
  }
  std::vector<const MetricSummary*> ordered;
  for (const auto& label : weights.labels) {
    auto it = std::find_if(summaries.begin(), summaries.end(),
                           [&](const MetricSummary& s) { return s.metric == label; });
    if (it == summaries.end()) throw Error(Errc::MetricMismatch, "no ratings summary for metric '" + label + "'");
    ordered.push_back(&*it);
  }
  const auto& subjects = ordered.front()->subjects;
  for (const auto* s : ordered) {
    if (s->subjects != subjects || s->means.size() != subjects.size()) {
      throw Error(Errc::SubjectMismatch, "metric '" + s->metric + "' lists different subjects");
    }
  }

  std::vector<CompositeScore> out;
  out.reserve(subjects.size());
  for (std::size_t k = 0; k < subjects.size(); ++k) {
    CompositeScore c{subjects[k], 0.0, {}};
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      const double w = weights.weights[i];
      const double mean = ordered[i]->means[k];
      c.contributions.push_back({weights.labels[i], w, mean, w * mean});
      c.score += w * mean;
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Standard competition ranking (1, 1, 3). Scores within 1e-9 relative are
// treated as tied; tied subjects are listed by name.
inline std::vector<RankedScore> rank(const std::vector<CompositeScore>& composites) {
  std::vector<RankedScore> ranked;
  for (const auto& c : composites) ranked.push_back({0, c.subject, c.score});
  auto tied = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  std::sort(ranked.begin(), ranked.end(), [&](const RankedScore& a, const RankedScore& b) {
    if (!tied(a.score, b.score)) return a.score > b.score;
    return a.subject < b.subject;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    ranked[i].rank = (i > 0 && tied(ranked[i].score, ranked[i - 1].score)) ? ranked[i - 1].rank : i + 1;
  }
  return ranked;
}

// ---------------------------------------------------------------------------
// CSV ingest: header row = subjects (first cell names the rater column),
// then one row per rater.

inline RatingTable parse_rating_csv(std::string_view csv, std::string metric) {
  auto rows = text::parse_csv(text::strip_bom(csv));
  if (rows.empty()) throw Error(Errc::EmptyTable, "ratings CSV for '" + metric + "' is empty");
  RatingTable t;
  t.metric = std::move(metric);
  const auto& header = rows.front();
  if (header.size() < 2) throw Error(Errc::EmptyTable, "ratings CSV for '" + t.metric + "' has no subject columns");
  for (std::size_t c = 1; c < header.size(); ++c) t.subjects.push_back(std::string(text::trim(header[c])));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto line = std::to_string(r + 1);
    if (row.size() != header.size()) {
      throw Error(Errc::MissingRatings, t.metric + " line " + line + ": expected " +
                                            std::to_string(header.size()) + " fields, got " +
                                            std::to_string(row.size()));
    }
    std::vector<double> scores;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (text::trim(row[c]).empty()) {
        throw Error(Errc::MissingRatings, t.metric + " line " + line + ": missing score for '" +
                                              t.subjects[c - 1] + "'");
      }
      auto v = text::parse_double(row[c]);
      if (!v) throw Error(Errc::InvalidArgument, t.metric + " line " + line + ": bad score '" + row[c] + "'");
      scores.push_back(*v);
    }
    t.raters.push_back(std::string(text::trim(row[0])));
    t.scores.push_back(std::move(scores));
  }
  t.validate();
  return t;
}

inline std::string rating_csv(const RatingTable& t, std::string_view rater_header = "rater") {
  std::ostringstream out;
  out << text::csv_escape(rater_header);
  for (const auto& s : t.subjects) out << ',' << text::csv_escape(s);
  out << '\n';
  for (std::size_t r = 0; r < t.raters.size(); ++r) {
    out << text::csv_escape(t.raters[r]);
    for (double v : t.scores[r]) out << ',' << text::format_fixed(v, 4, true);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Presentation. Means print with 1 decimal, composites with 2, weights with
// 4, matching the published tables.

struct EvaluationReport {
  ahp::PriorityVector weights;
  ahp::ConsistencyReport consistency;
  std::vector<MetricSummary> summaries;
  std::vector<CompositeScore> composites;
  std::vector<RankedScore> ranking;
};

inline EvaluationReport evaluate(const std::vector<RatingTable>& tables, const ahp::PriorityVector& weights,
                                 const ahp::ConsistencyReport& consistency) {
  EvaluationReport report{weights, consistency, {}, {}, {}};
  for (const auto& t : tables) report.summaries.push_back(metric_means(t));
  report.composites = composite_scores(report.summaries, weights);
  report.ranking = rank(report.composites);
  return report;
}

inline void to_json(nlohmann::json& j, const RatingTable& t) {
  j = nlohmann::json{{"metric", t.metric}, {"raters", t.raters}, {"subjects", t.subjects}, {"scores", t.scores}};
}

inline void from_json(const nlohmann::json& j, RatingTable& t) {
  j.at("metric").get_to(t.metric);
  j.at("raters").get_to(t.raters);
  j.at("subjects").get_to(t.subjects);
  j.at("scores").get_to(t.scores);
}

inline void to_json(nlohmann::json& j, const MetricSummary& s) {
  j = nlohmann::json{{"metric", s.metric}, {"subjects", s.subjects}, {"means", s.means}};
}

inline void to_json(nlohmann::json& j, const CompositeScore& c) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : c.contributions) {
    parts.push_back({{"metric", p.metric}, {"weight", p.weight}, {"mean", p.mean}, {"value", p.value}});
  }
  j = nlohmann::json{{"subject", c.subject}, {"score", c.score}, {"contributions", parts}};
}

inline void to_json(nlohmann::json& j, const RankedScore& r) {
  j = nlohmann::json{{"rank", r.rank}, {"subject", r.subject}, {"score", r.score}};
}

inline void to_json(nlohmann::json& j, const EvaluationReport& r) {
  j = nlohmann::json{{"weights", r.weights},
                     {"consistency", r.consistency},
                     {"metrics", r.summaries},
                     {"composites", r.composites},
                     {"ranking", r.ranking}};
}

// Aligned plain-text report laid out like the published tables: one row per
// metric with its weight, then the composite row and the ranking.
inline std::string text_report(const EvaluationReport& r) {
  std::vector<std::string> subjects;
  if (!r.composites.empty()) {
    for (const auto& c : r.composites) subjects.push_back(c.subject);
  }
  std::size_t label_width = std::string("Composite").size();
  for (const auto& s : r.summaries) label_width = std::max(label_width, s.metric.size());
  std::size_t col = 8;
  for (const auto& s : subjects) col = std::max(col, s.size() + 2);

  std::ostringstream out;
  out << "lambda_max " << text::format_fixed(r.consistency.lambda_max, 4) << "  CI "
      << text::format_fixed(r.consistency.ci, 4) << "  RI " << text::format_fixed(r.consistency.ri, 2)
      << "  CR " << text::format_fixed(r.consistency.cr, 4) << "  "
      << (r.consistency.passed ? "PASS" : "FAIL") << " (CR < " << text::format_fixed(r.consistency.threshold, 2, true)
      << ")\n\n";
  out << std::left << std::setw(static_cast<int>(label_width)) << "" << std::right
      << std::setw(static_cast<int>(col)) << "weight";
  for (const auto& s : subjects) out << std::setw(static_cast<int>(col)) << s;
  out << '\n';
  for (std::size_t i = 0; i < r.summaries.size(); ++i) {
    const auto& s = r.summaries[i];
    double w = 0.0;
    for (std::size_t k = 0; k < r.weights.labels.size(); ++k) {
      if (r.weights.labels[k] == s.metric) w = r.weights.weights[k];
    }
    out << std::left << std::setw(static_cast<int>(label_width)) << s.metric << std::right
        << std::setw(static_cast<int>(col)) << text::format_fixed(w, 4);
    for (double m : s.means) out << std::setw(static_cast<int>(col)) << text::format_fixed(m, 1, true);
    out << '\n';
  }
  out << std::left << std::setw(static_cast<int>(label_width)) << "Composite" << std::right
      << std::setw(static_cast<int>(col)) << "";
  for (const auto& c : r.composites) out << std::setw(static_cast<int>(col)) << text::format_fixed(c.score, 2);
  out << "\n\nRanking\n";
  for (const auto& entry : r.ranking) {
    out << "  " << entry.rank << ". " << entry.subject << "  " << text::format_fixed(entry.score, 2) << '\n';
  }
  return out.str();
}

}  // namespace llmeval::scoring
