#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qtr/perception.hpp"
#include "support.hpp"

using namespace qtr;

namespace {

// Background on axis 0 with a sharp odd-one-out event; used to force the
// variance-based reselection path.
std::shared_ptr<ScriptedWorld> spike_world() {
  auto world = std::make_shared<ScriptedWorld>();
  ScriptedVideo video;
  video.descriptor = qtrtest::make_video("spike", 100.0);
  video.background_embedding = qtrtest::axis(4, 0);
  video.noise_scale = 0.0;
  ScriptedEvent ev;
  ev.interval = {42.0, 44.0};
  ev.description = "a flash";
  ev.embedding = qtrtest::axis(4, 1);
  video.events.push_back(ev);
  world->videos.push_back(std::move(video));
  return world;
}

}  // namespace

TEST_CASE("select_frames spreads evenly with both endpoints") {
  const auto video = qtrtest::make_video("v", 600.0);
  const auto times = select_frames({0.0, 10.0}, video, 5);
  REQUIRE(times.size() == 5);
  const std::vector<double> expected{0.0, 2.5, 5.0, 7.5, 10.0};
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(times[i] == doctest::Approx(expected[i]));
}

TEST_CASE("select_frames never exceeds the frames available") {
  const auto video = qtrtest::make_video("v", 600.0);
  // [0, 3] at 1 fps holds 4 distinct frames
  const auto times = select_frames({0.0, 3.0}, video, 16);
  CHECK(times.size() == 4);
  CHECK(std::is_sorted(times.begin(), times.end()));

  // distinct frames stay distinct after rounding to frame keys
  const auto keys = [&](const std::vector<double>& ts) {
    std::vector<long long> out;
    for (double t : ts) out.push_back(std::llround(t * video.fps));
    std::sort(out.begin(), out.end());
    return std::unique(out.begin(), out.end()) == out.end();
  };
  CHECK(keys(times));
  CHECK(keys(select_frames({100.0, 280.0}, video, 16)));
}

TEST_CASE("select_frames honors a density profile by inverse CDF") {
  const auto video = qtrtest::make_video("v", 600.0);
  // all mass in the second half pushes samples past the midpoint
  std::vector<double> profile(10, 0.0);
  for (std::size_t s = 5; s < 10; ++s) profile[s] = 1.0;
  const auto times = select_frames({0.0, 10.0}, video, 4, profile);
  REQUIRE(!times.empty());
  CHECK(times.front() >= 5.0);
  CHECK(times.back() <= 10.0);
}

TEST_CASE("select_frames rejects degenerate requests") {
  const auto video = qtrtest::make_video("v", 600.0);
  CHECK_THROWS_AS(select_frames({0.0, 10.0}, video, 1), QtrError);
  CHECK_THROWS_AS(select_frames({10.0, 0.0}, video, 8), QtrError);
}

TEST_CASE("semantic_variance is the squared gap between neighbours") {
  const std::vector<Vec> embeddings{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0},
                                    {2.0, 2.0}};
  const auto v = semantic_variance(embeddings);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[2] == doctest::Approx(2.0));
  CHECK_THROWS_AS(semantic_variance({{1.0}}), QtrError);
  CHECK_THROWS_AS(semantic_variance({{1.0}, {1.0, 2.0}}), QtrError);
}

TEST_CASE("gelu matches its closed form") {
  CHECK(gelu(0.0) == doctest::Approx(0.0));
  CHECK(gelu(1.0) == doctest::Approx(0.8413447461));
  CHECK(gelu(-1.0) == doctest::Approx(-0.1586552539));
  CHECK(std::abs(gelu(-6.0)) < 1e-8);  // saturates toward zero
  CHECK(gelu(6.0) == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("project_tokens applies W2 gelu(W1 z)") {
  const std::vector<Vec> w1{{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<Vec> w2{{2.0, 0.0}};
  const Vec z{1.0, -1.0};
  const auto t = project_tokens(z, w1, w2);
  REQUIRE(t.size() == 1);
  CHECK(t[0] == doctest::Approx(2.0 * gelu(1.0)));
  CHECK_THROWS_AS(project_tokens({1.0, 2.0, 3.0}, w1, w2), QtrError);
}

TEST_CASE("project_all passes identity projectors through untouched") {
  std::vector<FrameSample> samples{{0, 0.0, {1.0, 2.0}}, {1, 1.0, {3.0, 4.0}}};
  const auto out = project_all(samples, Projector{});
  REQUIRE(out.size() == 2);
  CHECK(out[0] == samples[0].embedding);
  CHECK(out[1] == samples[1].embedding);

  Projector proj;
  proj.w1 = {{1.0, 0.0}};
  proj.w2 = {{1.0}};
  const auto mapped = project_all(samples, proj);
  CHECK(mapped[0][0] == doctest::Approx(gelu(1.0)));
}

TEST_CASE("aggregate_segment mean and attention") {
  const std::vector<Vec> tokens{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  const auto mean = aggregate_segment(tokens, AggregateMode::kMean);
  CHECK(mean[0] == doctest::Approx(2.0 / 3.0));
  CHECK(mean[1] == doctest::Approx(1.0 / 3.0));

  // attention shifts weight toward tokens aligned with the mean
  const auto att = aggregate_segment(tokens, AggregateMode::kAttention);
  CHECK(att[0] > mean[0]);
  CHECK(att[0] + att[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(aggregate_segment({}, AggregateMode::kMean), QtrError);
}

TEST_CASE("aggregate mode strings round trip") {
  CHECK(aggregate_mode_from_string("mean") == AggregateMode::kMean);
  CHECK(aggregate_mode_from_string("attention") == AggregateMode::kAttention);
  CHECK(to_string(AggregateMode::kAttention) == "attention");
  CHECK_THROWS_AS(aggregate_mode_from_string("max"), QtrError);
}

TEST_CASE("reselection fires on a lopsided variance profile") {
  CHECK_FALSE(reselection_triggered({}));
  CHECK_FALSE(reselection_triggered({5.0}));
  CHECK_FALSE(reselection_triggered({1.0, 1.0, 1.0, 1.0}));
  CHECK(reselection_triggered({1.0, 1.0, 1.0, 4.1}));
  CHECK_FALSE(reselection_triggered({1.0, 1.0, 1.0, 4.0}));  // strict >
}

TEST_CASE("ground_segment produces budgeted deduplicated evidence") {
  const auto world = qtrtest::make_lone_event_world();
  ScriptedVision vision(world);
  const auto& video = world->videos.front().descriptor;

  const auto evidence = ground_segment(vision, video, {0.0, 180.0}, 16);
  CHECK(evidence.segment == TemporalInterval{0.0, 180.0});
  CHECK(evidence.samples.size() == 16);
  CHECK(evidence.projected.size() == 16);
  CHECK(evidence.frame_cost >= 16);
  CHECK(evidence.frame_cost <= 32);  // at most both passes
  CHECK(evidence.aggregate.size() == 4);
  CHECK(evidence.clip_text.find("Clip [0, 180] of video lone:") == 0);
  CHECK_THROWS_AS(ground_segment(vision, video, {10.0, 10.0}, 16), QtrError);
}

TEST_CASE("ground_segment reselects when one gap dominates") {
  const auto world = spike_world();
  ScriptedVision vision(world);
  const auto& video = world->videos.front().descriptor;

  // 8 frames over [0, 98] land on 0, 14, ..., 98; the 42s sample hits the
  // flash, so the two gaps around it dwarf the otherwise flat variance
  const auto evidence = ground_segment(vision, video, {0.0, 98.0}, 8);
  CHECK(evidence.reselected);
  CHECK(evidence.samples.size() == 8);
  const bool near_flash =
      std::any_of(evidence.samples.begin(), evidence.samples.end(),
                  [](const FrameSample& s) {
                    return s.time_s >= 40.0 && s.time_s <= 58.0;
                  });
  CHECK(near_flash);
  // distinct frames across both passes, each embedded once
  CHECK(evidence.frame_cost <= 16);
  CHECK(evidence.frame_cost > 8);
}

TEST_CASE("evidence json round trips") {
  const auto world = qtrtest::make_lone_event_world();
  ScriptedVision vision(world);
  const auto& video = world->videos.front().descriptor;
  const auto evidence = ground_segment(vision, video, {390.0, 450.0}, 8);

  const auto round = json(evidence).get<Evidence>();
  CHECK(round.segment == evidence.segment);
  CHECK(round.samples.size() == evidence.samples.size());
  CHECK(round.frame_cost == evidence.frame_cost);
  CHECK(round.reselected == evidence.reselected);
  CHECK(round.clip_text == evidence.clip_text);
  CHECK(round.aggregate == evidence.aggregate);
}
