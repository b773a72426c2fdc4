#include "qtr/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace qtr {

void VideoDescriptor::validate() const {
  if (id.empty()) throw QtrError("video id must be non-empty");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw QtrError("video '" + id + "': duration_s must be positive");
  if (!(fps > 0.0) || !std::isfinite(fps))
    throw QtrError("video '" + id + "': fps must be positive");
  if (frame_count <= 0) throw QtrError("video '" + id + "': frame_count must be positive");
  const auto expected = static_cast<std::int64_t>(std::floor(duration_s * fps));
  if (std::llabs(frame_count - expected) > 1)
    throw QtrError("video '" + id + "': frame_count " + std::to_string(frame_count) +
                   " inconsistent with duration*fps " + std::to_string(expected));
}

std::int64_t VideoDescriptor::frame_index_at(double time_s) const {
  auto idx = std::llround(time_s * fps);
  return std::clamp<std::int64_t>(idx, 0, frame_count - 1);
}

double intersection_length(const TemporalInterval& a, const TemporalInterval& b) {
  const double lo = std::max(a.start_s, b.start_s);
  const double hi = std::min(a.end_s, b.end_s);
  return std::max(0.0, hi - lo);
}

bool overlaps(const TemporalInterval& a, const TemporalInterval& b) {
  return intersection_length(a, b) > 0.0;
}

void Query::validate() const {
  if (text.empty()) throw QtrError("query text must be non-empty");
  std::set<std::string> labels;
  for (const auto& opt : options) {
    if (!labels.insert(opt.label).second)
      throw QtrError("duplicate option label '" + opt.label + "'");
  }
}

std::string format_question(const Query& query) {
  if (query.options.empty()) return query.text;
  std::string out = query.text + " Options:";
  for (const auto& opt : query.options) out += " " + opt.label + ". " + opt.text;
  return out;
}

std::string to_string(EpisodeOrigin origin) {
  switch (origin) {
    case EpisodeOrigin::kPlanned: return "planned";
    case EpisodeOrigin::kRefined: return "refined";
    case EpisodeOrigin::kRandomAblation: return "random-ablation";
  }
  return "planned";
}

EpisodeOrigin episode_origin_from_string(const std::string& s) {
  if (s == "planned") return EpisodeOrigin::kPlanned;
  if (s == "refined") return EpisodeOrigin::kRefined;
  if (s == "random-ablation") return EpisodeOrigin::kRandomAblation;
  throw QtrError("unknown episode origin '" + s + "'");
}

std::string to_string(ConfidenceBand band) {
  switch (band) {
    case ConfidenceBand::kLow: return "low";
    case ConfidenceBand::kMedium: return "medium";
    case ConfidenceBand::kHigh: return "high";
  }
  return "low";
}

ConfidenceBand confidence_band_from_string(const std::string& s) {
  if (s == "low") return ConfidenceBand::kLow;
  if (s == "medium") return ConfidenceBand::kMedium;
  if (s == "high") return ConfidenceBand::kHigh;
  throw QtrError("unknown confidence band '" + s + "'");
}

Confidence confidence_from_score(int score) {
  if (score < 1 || score > 100)
    throw QtrError("confidence score " + std::to_string(score) + " outside [1, 100]");
  Confidence c;
  c.score = score;
  if (score >= 90) {
    c.band = ConfidenceBand::kHigh;
  } else if (score >= 40) {
    c.band = ConfidenceBand::kMedium;
  } else {
    c.band = ConfidenceBand::kLow;
  }
  return c;
}

std::string to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kInverted: return "inverted";
    case RejectReason::kTooLong: return "too-long";
    case RejectReason::kOutOfRange: return "out-of-range";
    case RejectReason::kWholeVideo: return "whole-video";
    case RejectReason::kAlreadyReviewed: return "already-reviewed";
  }
  return "inverted";
}

ValidationVerdict validate_interval(const TemporalInterval& candidate,
                                    const VideoDescriptor& video,
                                    const std::vector<TemporalInterval>& reviewed,
                                    const BudgetConfig& cfg) {
  if (!(candidate.end_s > candidate.start_s))
    return ValidationVerdict::reject(RejectReason::kInverted);
  if (candidate.length() > cfg.max_segment_s)
    return ValidationVerdict::reject(RejectReason::kTooLong);
  if (candidate.start_s < 0.0 || candidate.end_s > video.duration_s)
    return ValidationVerdict::reject(RejectReason::kOutOfRange);
  if (candidate.start_s == 0.0 && candidate.end_s == video.duration_s)
    return ValidationVerdict::reject(RejectReason::kWholeVideo);
  for (const auto& prev : reviewed) {
    if (intersection_length(candidate, prev) > kReviewedOverlapToleranceS)
      return ValidationVerdict::reject(RejectReason::kAlreadyReviewed);
  }
  return ValidationVerdict::accept();
}

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& replacement) {
  if (needle.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
  return text;
}

std::string format_seconds(double value) {
  const auto rounded = std::llround(value);
  if (std::abs(value - static_cast<double>(rounded)) < 1e-9)
    return std::to_string(rounded);
  std::ostringstream oss;
  oss << value;
  return oss.str();
}

void to_json(json& j, const VideoDescriptor& v) {
  j = json{{"id", v.id},
           {"duration_s", v.duration_s},
           {"fps", v.fps},
           {"frame_count", v.frame_count}};
}

void from_json(const json& j, VideoDescriptor& v) {
  j.at("id").get_to(v.id);
  j.at("duration_s").get_to(v.duration_s);
  j.at("fps").get_to(v.fps);
  if (j.contains("frame_count")) {
    j.at("frame_count").get_to(v.frame_count);
  } else {
    v.frame_count = static_cast<std::int64_t>(std::floor(v.duration_s * v.fps)) + 1;
  }
}

void to_json(json& j, const TemporalInterval& v) {
  j = json{{"start_s", v.start_s}, {"end_s", v.end_s}};
}

void from_json(const json& j, TemporalInterval& v) {
  if (j.is_array()) {  // "[s, e]" shorthand accepted in suite files
    v.start_s = j.at(0).get<double>();
    v.end_s = j.at(1).get<double>();
    return;
  }
  j.at("start_s").get_to(v.start_s);
  j.at("end_s").get_to(v.end_s);
}

void to_json(json& j, const ChoiceOption& v) {
  j = json{{"label", v.label}, {"text", v.text}};
}

void from_json(const json& j, ChoiceOption& v) {
  j.at("label").get_to(v.label);
  j.at("text").get_to(v.text);
}

void to_json(json& j, const Query& v) {
  j = json{{"text", v.text}, {"options", v.options}, {"video", v.video}};
}

void from_json(const json& j, Query& v) {
  j.at("text").get_to(v.text);
  v.options.clear();
  if (j.contains("options")) j.at("options").get_to(v.options);
  if (j.contains("video")) j.at("video").get_to(v.video);
}

void to_json(json& j, const ReasoningEpisode& v) {
  j = json{{"iteration", v.iteration},
           {"intent", v.intent},
           {"interval", v.interval},
           {"origin", to_string(v.origin)}};
}

void from_json(const json& j, ReasoningEpisode& v) {
  j.at("iteration").get_to(v.iteration);
  j.at("intent").get_to(v.intent);
  j.at("interval").get_to(v.interval);
  v.origin = episode_origin_from_string(j.at("origin").get<std::string>());
}

void to_json(json& j, const Confidence& v) {
  j = json{{"score", v.score}, {"band", to_string(v.band)}};
}

void from_json(const json& j, Confidence& v) {
  j.at("score").get_to(v.score);
  v.band = confidence_band_from_string(j.at("band").get<std::string>());
}

void to_json(json& j, const AgentAnswer& v) {
  j = json{{"answer", v.answer},
           {"reason", v.reason},
           {"summary", v.summary},
           {"confidence", v.confidence}};
}

void from_json(const json& j, AgentAnswer& v) {
  j.at("answer").get_to(v.answer);
  j.at("reason").get_to(v.reason);
  j.at("summary").get_to(v.summary);
  j.at("confidence").get_to(v.confidence);
}

void to_json(json& j, const BudgetConfig& v) {
  j = json{{"max_iterations", v.max_iterations},
           {"max_segment_s", v.max_segment_s},
           {"max_total_frames", v.max_total_frames},
           {"retry_limit", v.retry_limit}};
}

void from_json(const json& j, BudgetConfig& v) {
  if (j.contains("max_iterations")) j.at("max_iterations").get_to(v.max_iterations);
  if (j.contains("max_segment_s")) j.at("max_segment_s").get_to(v.max_segment_s);
  if (j.contains("max_total_frames")) j.at("max_total_frames").get_to(v.max_total_frames);
  if (j.contains("retry_limit")) j.at("retry_limit").get_to(v.retry_limit);
}

}  // namespace qtr
