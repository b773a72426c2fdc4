#pragma once
// Port contracts plus the deterministic scripted implementations used for
// testing. The scripted world stands in for real videos and real MLLMs:
// a video is a list of timed events with embeddings, and the scripted LLM
// follows a rule policy over (prompt, world state).

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qtr/core.hpp"

namespace qtr {

class LLMPort {
 public:
  virtual ~LLMPort() = default;
  virtual std::string complete(const std::string& system_prompt,
                               const std::string& user_prompt) = 0;
  virtual Vec embed_text(const std::string& text) = 0;
  virtual bool ping() { return true; }
};

class VisionPort {
 public:
  virtual ~VisionPort() = default;
  // Deterministic per (video_id, time_s) for scripted implementations.
  virtual Vec embed(const std::string& video_id, double time_s) = 0;
  virtual std::string describe(const std::string& video_id,
                               const TemporalInterval& interval) = 0;
  virtual bool ping() { return true; }
  // Mean embedding of 3 evenly spaced probes per timeline bin. Consistency
  // scoring uses these; they are not part of evidence frame accounting.
  virtual std::vector<Vec> bin_features(const VideoDescriptor& video,
                                        double bin_width_s);
};

struct ScriptedEvent {
  TemporalInterval interval;
  std::string description;
  Vec embedding;
  std::string answer;           // statement a full view supports
  std::string partial_answer;   // degraded reading on a partial view
  double plan_offset_s = 0.0;   // scripted planner's localization bias
};

struct ScriptedVideo {
  VideoDescriptor descriptor;
  std::vector<ScriptedEvent> events;
  Vec background_embedding;
  double noise_scale = 1e-3;
};

// Policy-side metadata keyed by question text; lets the scripted agent know
// which video a prompt refers to and whether the answer needs prior context.
struct QuestionNote {
  std::string video_id;
  std::string question_text;
  int requires_context_event = -1;
};

struct ScriptedWorld {
  std::vector<ScriptedVideo> videos;
  std::vector<QuestionNote> question_notes;
  std::uint64_t noise_seed = 17;

  const ScriptedVideo* find_video(const std::string& id) const;
  const ScriptedVideo& video_or_throw(const std::string& id) const;
};

void to_json(json& j, const ScriptedEvent& v);
void from_json(const json& j, ScriptedEvent& v);
void to_json(json& j, const ScriptedVideo& v);
void from_json(const json& j, ScriptedVideo& v);

// Embedding of the event covering time_s (latest-starting wins on overlap),
// else the background embedding, plus seeded per-frame noise <= noise_scale.
Vec scripted_embed(const ScriptedWorld& world, const std::string& video_id,
                   double time_s);

enum class PlannerPolicy {
  kCompetent,       // covers the best unreviewed event
  kWholeVideo,      // always proposes [0, duration]
  kGarbage,         // no array at all
  kOverlong,        // exceeds the segment cap
  kInverted,        // end before start
  kRepeatReviewed,  // re-proposes an already reviewed segment
  kAdversarialMix,  // seeded mix of all of the above plus valid replies
};

// Builds the planner reply for a built RTP prompt under the given policy.
// rng is only consulted by kAdversarialMix.
std::string scripted_planner_reply(const ScriptedWorld& world,
                                   const std::string& system_prompt,
                                   const std::string& user_prompt,
                                   PlannerPolicy policy, std::mt19937_64& rng);

// Keyword embedding for free text: token overlap against event descriptions,
// normalized mix of the matching event embeddings.
Vec scripted_text_embedding(const ScriptedWorld& world, const std::string& text);

class ScriptedVision : public VisionPort {
 public:
  explicit ScriptedVision(std::shared_ptr<const ScriptedWorld> world)
      : world_(std::move(world)) {}

  Vec embed(const std::string& video_id, double time_s) override;
  std::string describe(const std::string& video_id,
                       const TemporalInterval& interval) override;

 private:
  std::shared_ptr<const ScriptedWorld> world_;
};

class ScriptedLLM : public LLMPort {
 public:
  ScriptedLLM(std::shared_ptr<const ScriptedWorld> world,
              PlannerPolicy policy = PlannerPolicy::kCompetent,
              std::uint64_t seed = 1)
      : world_(std::move(world)), policy_(policy), rng_(seed) {}

  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override;
  Vec embed_text(const std::string& text) override;

 private:
  std::shared_ptr<const ScriptedWorld> world_;
  PlannerPolicy policy_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

// Counts embed() calls; the frame-accounting checks compare this count with
// the session's reported total_frames.
class CountingVision : public VisionPort {
 public:
  explicit CountingVision(std::shared_ptr<VisionPort> inner)
      : inner_(std::move(inner)) {}

  Vec embed(const std::string& video_id, double time_s) override {
    embed_calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->embed(video_id, time_s);
  }
  std::string describe(const std::string& video_id,
                       const TemporalInterval& interval) override {
    return inner_->describe(video_id, interval);
  }
  std::vector<Vec> bin_features(const VideoDescriptor& video,
                                double bin_width_s) override {
    return inner_->bin_features(video, bin_width_s);
  }
  bool ping() override { return inner_->ping(); }

  std::int64_t embed_calls() const {
    return embed_calls_.load(std::memory_order_relaxed);
  }

 private:
  std::shared_ptr<VisionPort> inner_;
  std::atomic<std::int64_t> embed_calls_{0};
};

}  // namespace qtr
