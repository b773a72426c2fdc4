#pragma once
// Session controller: plan -> ground -> answer -> verify -> memorize,
// with confidence-gated stopping, budget enforcement, ablation switches,
// NDJSON trace emission, and bit-exact replay from a trace.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"
#include "qtr/memory.hpp"
#include "qtr/perception.hpp"
#include "qtr/planner.hpp"
#include "qtr/tcr.hpp"

namespace qtr {

extern const std::set<std::string> kKnownAblations;  // no-rtp, no-tm, no-tcr

struct SessionConfig {
  BudgetConfig budget;
  std::set<std::string> ablation;
  std::uint64_t seed = 1;
  ConfidenceBand stop_band = ConfidenceBand::kHigh;
  int budget_k = 16;
  double bin_width_s = 0.0;  // 0 -> budget.max_segment_s / 6
  AggregateMode aggregate = AggregateMode::kMean;
  int retrieval_k = 4;
  int digest_max_chars = 600;

  bool ablated(const std::string& name) const { return ablation.count(name) > 0; }
  double effective_bin_width() const {
    return bin_width_s > 0.0 ? bin_width_s : budget.max_segment_s / 6.0;
  }
  void validate() const;
};

void to_json(json& j, const SessionConfig& v);
void from_json(const json& j, SessionConfig& v);

struct TraceRecord {
  int iteration = 0;
  std::string kind;  // proposal, validation, evidence, answer, alignment,
                     // memory-update, termination
  json payload;
  double wall_ms = 0.0;
};

struct SessionTrace {
  json header;  // engine tag + version, video, query, cfg
  std::vector<TraceRecord> records;
};

std::string trace_to_ndjson(const SessionTrace& trace);
SessionTrace trace_from_ndjson(const std::string& text);

// FNV-1a over the canonical serialization, wall times excluded.
std::uint64_t trace_hash(const SessionTrace& trace);

struct SessionResult {
  AgentAnswer final_answer;
  TemporalInterval answer_interval{0.0, 0.0};  // segment behind final_answer
  int iterations_used = 0;
  std::int64_t total_frames = 0;
  std::string terminated_by;
  std::vector<ReasoningEpisode> episodes;
  EventGraph graph;
  SessionTrace trace;
};

// Canonical wall-time-free serialization used for replay comparison.
json result_fingerprint(const SessionResult& result);

// Unrecoverable mid-session failure; carries everything traced so far.
class SessionAborted : public QtrError {
 public:
  SessionAborted(const std::string& what, SessionTrace trace)
      : QtrError(what), partial_trace(std::move(trace)) {}
  SessionTrace partial_trace;
};

PromptPair build_answer_prompt(const Query& query,
                               const std::string& memory_digest,
                               const std::string& clip_text);

// Throws QtrError "missing-field(<name>)" or "invalid-score".
AgentAnswer parse_agent_answer(const std::string& raw);

SessionResult run_session(const Query& query, const SessionConfig& cfg,
                          LLMPort& llm, VisionPort& vision);

// Re-executes the session substituting recorded port replies.
// Throws on engine-tag mismatch or trace truncation.
SessionResult replay_session(const SessionTrace& trace);

}  // namespace qtr
