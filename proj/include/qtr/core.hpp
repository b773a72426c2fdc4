#pragma once
// Shared domain types: videos, intervals, queries, confidence bands, budgets.
// All types here are immutable values; they are safe to copy across sessions.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qtr {

using Vec = std::vector<double>;
using json = nlohmann::json;

// Thrown for contract violations (bad dimensions, malformed values).
class QtrError : public std::runtime_error {
 public:
  explicit QtrError(const std::string& what) : std::runtime_error(what) {}
};

// A video timeline addressed by time in seconds; frames are index-addressed.
struct VideoDescriptor {
  std::string id;
  double duration_s = 0.0;
  double fps = 0.0;
  std::int64_t frame_count = 0;

  // duration_s > 0, fps > 0, frame_count within 1 of floor(duration_s * fps).
  void validate() const;
  std::int64_t frame_index_at(double time_s) const;
};

// Closed time span [start_s, end_s] on a video timeline.
struct TemporalInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
  double center() const { return 0.5 * (start_s + end_s); }
  bool contains(double t) const { return t >= start_s && t <= end_s; }
  bool operator==(const TemporalInterval& other) const = default;
};

double intersection_length(const TemporalInterval& a, const TemporalInterval& b);
bool overlaps(const TemporalInterval& a, const TemporalInterval& b);

struct ChoiceOption {
  std::string label;
  std::string text;
  bool operator==(const ChoiceOption& other) const = default;
};

struct Query {
  std::string text;
  std::vector<ChoiceOption> options;  // empty = free-form
  VideoDescriptor video;

  void validate() const;
};

// Renders "text" or "text Options: A. foo B. bar" for prompt embedding.
std::string format_question(const Query& query);

enum class EpisodeOrigin { kPlanned, kRefined, kRandomAblation };

std::string to_string(EpisodeOrigin origin);
EpisodeOrigin episode_origin_from_string(const std::string& s);

// One iteration's plan: what to look for and when.
struct ReasoningEpisode {
  int iteration = 1;
  std::string intent;
  TemporalInterval interval;
  EpisodeOrigin origin = EpisodeOrigin::kPlanned;
};

enum class ConfidenceBand { kLow, kMedium, kHigh };

std::string to_string(ConfidenceBand band);
ConfidenceBand confidence_band_from_string(const std::string& s);

// Rubric-banded confidence: low 1-39, medium 40-89, high 90-100.
struct Confidence {
  int score = 1;
  ConfidenceBand band = ConfidenceBand::kLow;

  bool operator==(const Confidence& other) const = default;
};

// Maps a score to its band. Throws QtrError outside [1, 100].
Confidence confidence_from_score(int score);

struct AgentAnswer {
  std::string answer;
  std::string reason;
  std::string summary;
  Confidence confidence;

  bool operator==(const AgentAnswer& other) const = default;
};

struct BudgetConfig {
  int max_iterations = 12;
  double max_segment_s = 180.0;  // hard cap on one proposal's length
  int max_total_frames = 4096;
  int retry_limit = 3;
};

// Two intervals count as already-reviewed overlap only past this tolerance;
// boundary-touching proposals are legitimate progress.
inline constexpr double kReviewedOverlapToleranceS = 1.0;

enum class RejectReason {
  kInverted,
  kTooLong,
  kOutOfRange,
  kWholeVideo,
  kAlreadyReviewed,
};

std::string to_string(RejectReason reason);

struct ValidationVerdict {
  bool accepted = false;
  std::optional<RejectReason> reason;

  static ValidationVerdict accept() { return {true, std::nullopt}; }
  static ValidationVerdict reject(RejectReason r) { return {false, r}; }
};

// Checks a candidate segment against every proposal constraint: ordering,
// length cap, timeline bounds, whole-video ban, and reviewed overlap.
ValidationVerdict validate_interval(const TemporalInterval& candidate,
                                    const VideoDescriptor& video,
                                    const std::vector<TemporalInterval>& reviewed,
                                    const BudgetConfig& cfg);

// Renders seconds without trailing zeros: 600 -> "600", 29.5 -> "29.5".
std::string format_seconds(double value);

// Replaces every occurrence of needle (used for prompt placeholders).
std::string replace_all(std::string text, const std::string& needle,
                        const std::string& replacement);

// JSON serialization (canonical tagged-tree form shared by traces and suites).
void to_json(json& j, const VideoDescriptor& v);
void from_json(const json& j, VideoDescriptor& v);
void to_json(json& j, const TemporalInterval& v);
void from_json(const json& j, TemporalInterval& v);
void to_json(json& j, const ChoiceOption& v);
void from_json(const json& j, ChoiceOption& v);
void to_json(json& j, const Query& v);
void from_json(const json& j, Query& v);
void to_json(json& j, const ReasoningEpisode& v);
void from_json(const json& j, ReasoningEpisode& v);
void to_json(json& j, const Confidence& v);
void from_json(const json& j, Confidence& v);
void to_json(json& j, const AgentAnswer& v);
void from_json(const json& j, AgentAnswer& v);
void to_json(json& j, const BudgetConfig& v);
void from_json(const json& j, BudgetConfig& v);

}  // namespace qtr
