#pragma once
// Evaluation harness: scripted-world suite files, brute-force oracle,
// grading, suite runner with a bounded worker pool, duration sweep,
// ablation table, and report rendering.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/controller.hpp"
#include "qtr/core.hpp"

namespace qtr {

struct SuiteQuestion {
  std::string id;
  std::string video_id;
  Query query;  // video descriptor filled in at load
  std::string gold_answer;
  TemporalInterval gold_interval{0.0, 0.0};
  std::string mode;  // optional tag, e.g. breakpoint / global
};

struct ScriptedSuite {
  std::vector<ScriptedWorld> worlds;
  std::vector<SuiteQuestion> questions;

  const ScriptedWorld& world_for(const std::string& video_id) const;
  // Every gold interval must lie inside its video and coincide with a
  // scripted event.
  void validate() const;
};

// One structured document per world: descriptor + events + questions.
ScriptedSuite load_world_document(const json& doc);
ScriptedSuite load_suite(const std::vector<std::string>& paths);
json world_document(const ScriptedWorld& world,
                    const std::vector<SuiteQuestion>& questions);

struct OracleResult {
  TemporalInterval answer_interval{0.0, 0.0};
  std::int64_t frames_scanned = 0;
  bool found = false;
  double best_score = 0.0;
  double threshold = 0.0;
};

// Scans the whole timeline in consecutive cap-length windows at the same
// per-segment frame budget; flags not-found when the best score stays
// within 3 noise deviations of the background score.
OracleResult brute_force_oracle(const ScriptedWorld& world,
                                const SuiteQuestion& question,
                                const BudgetConfig& budget = {},
                                int budget_k = 16);

std::string normalize_answer(const std::string& text);
// "C", "C." and "Answer: C" all yield "C"; empty when no letter form.
std::string extract_choice_letter(const std::string& text);
bool grade_answer(const std::string& got, const std::string& gold);

struct QuestionOutcome {
  std::string id;
  std::string video_id;
  bool correct = false;
  std::int64_t frames = 0;
  std::int64_t embed_calls = 0;  // instrumented vision port count
  int iterations = 0;
  std::string terminated_by;
  std::string answer;
  std::string gold_answer;
  TemporalInterval answer_interval{0.0, 0.0};
  std::uint64_t trace_hash = 0;
  std::string error;  // per-question failure, never aborts the suite
};

void to_json(json& j, const QuestionOutcome& v);

struct RunReport {
  std::vector<QuestionOutcome> per_question;  // suite order
  double accuracy = 0.0;
  double mean_frames = 0.0;
  std::map<double, double> frame_fraction_by_duration;
  int failures = 0;
};

void to_json(json& j, const RunReport& v);

// Per-question session seed; decorrelates questions under one suite seed.
std::uint64_t question_seed(std::uint64_t suite_seed, std::size_t index);

// workers = 0 picks the hardware concurrency. When trace_dir is non-empty
// each session's trace lands in <trace_dir>/<question_id>/trace.ndjson.
RunReport run_suite(const ScriptedSuite& suite, const SessionConfig& cfg,
                    int workers = 0, const std::string& trace_dir = "");

// Stretches the first question's world to each duration (gold event at the
// proportional position) and reports frames/(duration*fps) per duration.
std::map<double, double> duration_sweep(const ScriptedSuite& base,
                                        const std::vector<double>& durations,
                                        const SessionConfig& cfg);

struct AblationRow {
  std::string name;  // full, no-tm, no-tcr, no-rtp
  double mean_accuracy = 0.0;
  double mean_frames = 0.0;
};

std::vector<AblationRow> ablation_table(const ScriptedSuite& suite,
                                        const SessionConfig& base_cfg,
                                        int seeds, int workers = 0);

enum class ReportFormat { kText, kDelimitedTable, kStructured };
ReportFormat report_format_from_string(const std::string& s);

std::string render_report(const RunReport& report, ReportFormat format);
std::string render_sweep(const std::map<double, double>& fractions,
                         ReportFormat format);
std::string render_ablation(const std::vector<AblationRow>& rows,
                            ReportFormat format);

}  // namespace qtr
