#pragma once
// Shared fixtures for the unit tests: a tiny 4-dimensional scripted world
// plus fake ports with scriptable behavior.

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"

#ifndef QTR_ASSET_DIR
#define QTR_ASSET_DIR "assets"
#endif

namespace qtrtest {

inline std::string asset(const std::string& rel) {
  return std::string(QTR_ASSET_DIR) + "/" + rel;
}

inline std::vector<std::string> shipped_suite_paths() {
  return {asset("suite/city_day.json"), asset("suite/nature_doc.json"),
          asset("suite/household.json")};
}

inline qtr::VideoDescriptor make_video(const std::string& id, double duration_s,
                                       double fps = 1.0) {
  qtr::VideoDescriptor v;
  v.id = id;
  v.duration_s = duration_s;
  v.fps = fps;
  v.frame_count = static_cast<std::int64_t>(std::floor(duration_s * fps)) + 1;
  return v;
}

inline qtr::Vec axis(std::size_t dim, std::size_t index) {
  qtr::Vec v(dim, 0.0);
  v[index] = 1.0;
  return v;
}

// One 600s video: background on axis 0, a lone diver event (400, 430) on
// axis 1. The question wording overlaps the event description.
inline std::shared_ptr<qtr::ScriptedWorld> make_lone_event_world() {
  auto world = std::make_shared<qtr::ScriptedWorld>();
  qtr::ScriptedVideo video;
  video.descriptor = make_video("lone", 600.0);
  video.background_embedding = axis(4, 0);
  video.noise_scale = 1e-3;
  qtr::ScriptedEvent ev;
  ev.interval = {400.0, 430.0};
  ev.description = "a diver checks the coral buoy";
  ev.embedding = axis(4, 1);
  ev.answer = "The diver checks the coral buoy.";
  ev.partial_answer = "Someone swims near the buoy.";
  video.events.push_back(ev);
  world->videos.push_back(std::move(video));
  world->question_notes.push_back(
      {"lone", "What does the diver check underwater?", -1});
  return world;
}

inline qtr::Query lone_event_query(const qtr::ScriptedWorld& world) {
  qtr::Query q;
  q.text = "What does the diver check underwater?";
  q.video = world.videos.front().descriptor;
  return q;
}

// Replays a fixed list of completions, then repeats the last one.
class QueueLLM : public qtr::LLMPort {
 public:
  explicit QueueLLM(std::vector<std::string> replies)
      : replies_(std::move(replies)) {}

  std::string complete(const std::string&, const std::string&) override {
    const auto i = std::min(cursor_, replies_.size() - 1);
    ++cursor_;
    return replies_[i];
  }
  qtr::Vec embed_text(const std::string&) override { return axis(4, 1); }
  std::size_t calls() const { return cursor_; }

 private:
  std::vector<std::string> replies_;
  std::size_t cursor_ = 0;
};

// Competent planner, but every answer comes back at the given confidence.
class FixedScoreLLM : public qtr::LLMPort {
 public:
  FixedScoreLLM(std::shared_ptr<const qtr::ScriptedWorld> world, int score)
      : world_(std::move(world)), score_(score) {}

  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override {
    if (system_prompt.find("intelligent video analyst") != std::string::npos)
      return qtr::scripted_planner_reply(*world_, system_prompt, user_prompt,
                                         qtr::PlannerPolicy::kCompetent, rng_);
    return "Answer: A tentative reading.\nReason: The view is partial.\n"
           "Summary of this content: assorted activity\nConfidence Score: " +
           std::to_string(score_);
  }
  qtr::Vec embed_text(const std::string& text) override {
    return qtr::scripted_text_embedding(*world_, text);
  }

 private:
  std::shared_ptr<const qtr::ScriptedWorld> world_;
  int score_;
  std::mt19937_64 rng_{1};
};

// Fails every embed after the allowance runs out.
class FlakyVision : public qtr::VisionPort {
 public:
  FlakyVision(std::shared_ptr<const qtr::ScriptedWorld> world, int allowance)
      : world_(std::move(world)), allowance_(allowance) {}

  qtr::Vec embed(const std::string& video_id, double time_s) override {
    if (allowance_-- <= 0) throw qtr::QtrError("camera unplugged");
    return qtr::scripted_embed(*world_, video_id, time_s);
  }
  std::string describe(const std::string& video_id,
                       const qtr::TemporalInterval& interval) override {
    qtr::ScriptedVision inner(world_);
    return inner.describe(video_id, interval);
  }

 private:
  std::shared_ptr<const qtr::ScriptedWorld> world_;
  int allowance_;
};

}  // namespace qtrtest
