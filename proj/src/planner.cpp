#include "qtr/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "qtr/prompts_data.hpp"

namespace qtr {

std::string render_reviewed_list(const PlannerState& state) {
  if (state.reviewed.empty()) return "None";
  std::string out;
  for (std::size_t i = 0; i < state.reviewed.size(); ++i) {
    if (i) out += ", ";
    const auto& r = state.reviewed[i];
    out += "[" + format_seconds(std::llround(r.start_s)) + ", " +
           format_seconds(std::llround(r.end_s)) + "]";
    if (i < state.irrelevant.size() && state.irrelevant[i])
      out += " (irrelevant)";
  }
  return out;
}

PromptPair build_rtp_prompt(const PlannerState& state,
                            const VideoDescriptor& video,
                            const BudgetConfig& cfg) {
  PromptPair prompt;
  prompt.system = replace_all(prompts::kRtpSystem, "{reviewed_list}",
                              render_reviewed_list(state));
  prompt.user = replace_all(prompts::kRtpUser, "{question}",
                            format_question(state.query));
  prompt.user =
      replace_all(prompt.user, "{duration}", format_seconds(video.duration_s));
  if (cfg.max_segment_s != 180.0) {
    const auto cap = format_seconds(cfg.max_segment_s);
    prompt.user = replace_all(prompt.user, "180 seconds", cap + " seconds");
    prompt.user = replace_all(prompt.user, "<= 180", "<= " + cap);
  }
  return prompt;
}

ParsedSegment parse_segment_reply(const std::string& raw) {
  ParsedSegment result;
  bool saw_group = false;
  bool saw_wrong_arity = false;
  std::size_t pos = 0;
  while ((pos = raw.find('[', pos)) != std::string::npos) {
    const auto close = raw.find(']', pos);
    if (close == std::string::npos) break;
    const auto body = raw.substr(pos + 1, close - pos - 1);
    pos += 1;  // step inside so nested groups are scanned too

    std::vector<std::string> elements;
    std::size_t start = 0;
    while (start <= body.size()) {
      auto comma = body.find(',', start);
      if (comma == std::string::npos) comma = body.size();
      auto piece = body.substr(start, comma - start);
      const auto a = piece.find_first_not_of(" \t\n\r");
      const auto b = piece.find_last_not_of(" \t\n\r");
      elements.push_back(a == std::string::npos
                             ? std::string{}
                             : piece.substr(a, b - a + 1));
      start = comma + 1;
      if (comma == body.size()) break;
    }
    if (elements.size() == 1 && elements[0].empty()) continue;  // "[]"
    saw_group = true;

    std::vector<double> numbers;
    bool all_numeric = true;
    for (const auto& e : elements) {
      char* end = nullptr;
      const double v = std::strtod(e.c_str(), &end);
      if (e.empty() || end != e.c_str() + e.size()) {
        all_numeric = false;
        break;
      }
      numbers.push_back(v);
    }
    if (!all_numeric) continue;
    if (numbers.size() != 2) {
      saw_wrong_arity = true;
      continue;
    }
    result.interval = TemporalInterval{numbers[0], numbers[1]};
    return result;
  }

  if (saw_wrong_arity) {
    result.failure = ParseFailure::kWrongArity;
    result.message = "the array must have exactly two elements";
  } else if (saw_group) {
    result.failure = ParseFailure::kNonNumeric;
    result.message = "array elements must be numeric";
  } else {
    result.failure = ParseFailure::kNoArrayFound;
    result.message = "no numeric array found in the reply";
  }
  return result;
}

namespace {

std::string reject_feedback(RejectReason reason, const BudgetConfig& cfg) {
  switch (reason) {
    case RejectReason::kInverted:
      return "the end_time must be greater than the start_time";
    case RejectReason::kTooLong:
      return "the segment exceeds the " + format_seconds(cfg.max_segment_s) +
             " second cap";
    case RejectReason::kOutOfRange:
      return "the segment lies outside the video timeline";
    case RejectReason::kWholeVideo:
      return "do not select the entire video";
    case RejectReason::kAlreadyReviewed:
      return "the segment was already reviewed";
  }
  return "constraint violation";
}

// start + len can round a hair past the cap or the video end; nudge back.
TemporalInterval snap_window(double start, double len, double cap,
                             double duration) {
  TemporalInterval out{start, std::min(start + len, duration)};
  while (out.length() > cap)
    out.end_s = std::nextafter(out.end_s, out.start_s);
  return out;
}

}  // namespace

SegmentProposal propose_next_segment(const PlannerState& state,
                                     const VideoDescriptor& video,
                                     const BudgetConfig& cfg, LLMPort& llm) {
  SegmentProposal proposal;
  const auto base = build_rtp_prompt(state, video, cfg);
  std::string feedback;
  for (int attempt = 1; attempt <= cfg.retry_limit; ++attempt) {
    auto user = base.user;
    if (!feedback.empty())
      user += "\n\nYour previous reply was rejected: " + feedback +
              ". Follow the constraints and return ONLY the JSON array.";
    const auto raw = llm.complete(base.system, user);
    proposal.attempts = attempt;

    ProposalAttempt log;
    log.raw_reply = raw;
    const auto parsed = parse_segment_reply(raw);
    if (!parsed.interval) {
      log.rejection = parsed.message;
      feedback = parsed.message;
      proposal.attempt_log.push_back(std::move(log));
      continue;
    }
    log.parsed = parsed.interval;
    const auto verdict =
        validate_interval(*parsed.interval, video, state.reviewed, cfg);
    if (!verdict.accepted) {
      log.rejection = reject_feedback(*verdict.reason, cfg);
      feedback = log.rejection;
      proposal.attempt_log.push_back(std::move(log));
      continue;
    }
    proposal.attempt_log.push_back(std::move(log));
    proposal.ok = true;
    proposal.interval = *parsed.interval;
    proposal.raw_reply = raw;
    return proposal;
  }
  return proposal;
}

TemporalInterval apply_refinement(const TemporalInterval& interval,
                                  const RefinementDelta& delta,
                                  const VideoDescriptor& video,
                                  const BudgetConfig& cfg) {
  const double frame_period = 1.0 / video.fps;
  double len = std::min(interval.length() * delta.scale, cfg.max_segment_s);
  len = std::min(len, video.duration_s);
  const double start = std::clamp(delta.suggested_center_s - len / 2.0, 0.0,
                                  video.duration_s - len);
  auto out = snap_window(start, len, cfg.max_segment_s, video.duration_s);
  // A short video can clamp to the full timeline; back off one frame.
  if (out.start_s == 0.0 && out.end_s == video.duration_s)
    out.end_s = std::max(out.start_s + frame_period,
                         out.end_s - frame_period);
  return out;
}

std::optional<TemporalInterval> fallback_window(
    const VideoDescriptor& video,
    const std::vector<TemporalInterval>& reviewed, const BudgetConfig& cfg) {
  auto sorted = reviewed;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  TemporalInterval best{0.0, 0.0};
  double cursor = 0.0;
  for (const auto& r : sorted) {
    const double lo = std::clamp(r.start_s, 0.0, video.duration_s);
    if (lo - cursor > best.length()) best = {cursor, lo};
    cursor = std::max(cursor, std::clamp(r.end_s, 0.0, video.duration_s));
  }
  if (video.duration_s - cursor > best.length())
    best = {cursor, video.duration_s};
  if (best.length() <= 0.0) return std::nullopt;

  auto window = snap_window(best.start_s,
                            std::min(cfg.max_segment_s, best.length()),
                            cfg.max_segment_s, video.duration_s);
  if (window.start_s == 0.0 && window.end_s == video.duration_s)
    window.end_s = std::max(window.start_s + 1.0 / video.fps,
                            window.end_s - 1.0 / video.fps);
  return window;
}

std::string extract_purpose(const std::string& raw) {
  const auto pos = raw.find("Purpose:");
  if (pos == std::string::npos) return "";
  auto end = raw.find('\n', pos);
  if (end == std::string::npos) end = raw.size();
  auto text = raw.substr(pos + 8, end - pos - 8);
  const auto a = text.find_first_not_of(" \t");
  const auto b = text.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return text.substr(a, b - a + 1);
}

std::string synthesize_intent(const TemporalInterval& interval,
                              const Query& query) {
  return "inspect [" + format_seconds(std::llround(interval.start_s)) + ", " +
         format_seconds(std::llround(interval.end_s)) +
         "] for: " + query.text;
}

}  // namespace qtr
