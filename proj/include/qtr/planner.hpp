#pragma once
// Reason-Temporal Proxy: builds the segment-proposal prompt from templates,
// parses the LLM reply, validates it against the five constraints, retries
// with feedback, and applies TCR refinement deltas to planned intervals.

#include <optional>
#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"
#include "qtr/tcr.hpp"

namespace qtr {

struct PromptPair {
  std::string system;
  std::string user;
};

struct PlannerState {
  Query query;
  std::vector<TemporalInterval> reviewed;
  std::vector<bool> irrelevant;  // parallel to reviewed: low-band regions
  std::string memory_digest;
  std::optional<RefinementDelta> last_feedback;
};

// "None", or integer-rounded "[s, e]" entries, low-band ones annotated.
std::string render_reviewed_list(const PlannerState& state);

PromptPair build_rtp_prompt(const PlannerState& state,
                            const VideoDescriptor& video,
                            const BudgetConfig& cfg);

enum class ParseFailure { kNone, kNoArrayFound, kNonNumeric, kWrongArity };

struct ParsedSegment {
  std::optional<TemporalInterval> interval;
  ParseFailure failure = ParseFailure::kNone;
  std::string message;
};

// First two-element numeric bracket group in the reply, prose and code
// fences tolerated. Returns the interval unvalidated.
ParsedSegment parse_segment_reply(const std::string& raw);

struct ProposalAttempt {
  std::string raw_reply;
  std::optional<TemporalInterval> parsed;
  std::string rejection;  // empty when accepted
};

struct SegmentProposal {
  bool ok = false;
  TemporalInterval interval{0.0, 0.0};
  std::string raw_reply;
  int attempts = 0;
  std::vector<ProposalAttempt> attempt_log;
};

// Prompt, parse, validate; on failure reprompts with the failure reason
// appended, up to cfg.retry_limit attempts. ok=false means the controller
// must fall back.
SegmentProposal propose_next_segment(const PlannerState& state,
                                     const VideoDescriptor& video,
                                     const BudgetConfig& cfg, LLMPort& llm);

// Recenter on the delta and shrink by its scale, clamped to the timeline and
// the cap; valid against an empty reviewed list by construction.
TemporalInterval apply_refinement(const TemporalInterval& interval,
                                  const RefinementDelta& delta,
                                  const VideoDescriptor& video,
                                  const BudgetConfig& cfg);

// Leading cap-length slice of the longest unreviewed gap; nullopt when the
// timeline is fully reviewed.
std::optional<TemporalInterval> fallback_window(
    const VideoDescriptor& video,
    const std::vector<TemporalInterval>& reviewed, const BudgetConfig& cfg);

// "Purpose: ..." line from a reply, or empty.
std::string extract_purpose(const std::string& raw);

std::string synthesize_intent(const TemporalInterval& interval,
                              const Query& query);

}  // namespace qtr
