#include "qtr/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <random>
#include <sstream>

#include "qtr/prompts_data.hpp"
#include "qtr/version.hpp"

namespace qtr {

const std::set<std::string> kKnownAblations = {"no-rtp", "no-tm", "no-tcr"};

void SessionConfig::validate() const {
  for (const auto& a : ablation) {
    if (!kKnownAblations.count(a))
      throw QtrError("unknown ablation '" + a + "'");
  }
  if (budget.max_iterations < 1) throw QtrError("max_iterations must be >= 1");
  if (budget.max_segment_s <= 0.0) throw QtrError("max_segment_s must be > 0");
  if (budget.retry_limit < 1) throw QtrError("retry_limit must be >= 1");
  if (budget_k < 2) throw QtrError("budget_k must be at least 2");
  if (retrieval_k < 1) throw QtrError("retrieval_k must be >= 1");
}

void to_json(json& j, const SessionConfig& v) {
  j = json{{"budget", v.budget},
           {"ablation", v.ablation},
           {"seed", v.seed},
           {"stop_band", to_string(v.stop_band)},
           {"budget_k", v.budget_k},
           {"bin_width_s", v.bin_width_s},
           {"aggregate", to_string(v.aggregate)},
           {"retrieval_k", v.retrieval_k},
           {"digest_max_chars", v.digest_max_chars}};
}

void from_json(const json& j, SessionConfig& v) {
  v.budget = j.value("budget", BudgetConfig{});
  v.ablation = j.value("ablation", std::set<std::string>{});
  v.seed = j.value("seed", std::uint64_t{1});
  v.stop_band = confidence_band_from_string(j.value("stop_band", "high"));
  v.budget_k = j.value("budget_k", 16);
  v.bin_width_s = j.value("bin_width_s", 0.0);
  v.aggregate = aggregate_mode_from_string(j.value("aggregate", "mean"));
  v.retrieval_k = j.value("retrieval_k", 4);
  v.digest_max_chars = j.value("digest_max_chars", 600);
}

// ---------------------------------------------------------------------------
// Trace plumbing

namespace {

json record_to_json(const TraceRecord& r, bool with_wall) {
  json j{{"iteration", r.iteration}, {"kind", r.kind}, {"payload", r.payload}};
  if (with_wall) j["wall_ms"] = r.wall_ms;
  return j;
}

}  // namespace

std::string trace_to_ndjson(const SessionTrace& trace) {
  std::string out;
  out += json{{"iteration", 0},
              {"kind", "header"},
              {"payload", trace.header},
              {"wall_ms", 0.0}}
             .dump();
  out += "\n";
  for (const auto& r : trace.records) {
    out += record_to_json(r, true).dump();
    out += "\n";
  }
  return out;
}

SessionTrace trace_from_ndjson(const std::string& text) {
  SessionTrace trace;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "header") {
      trace.header = j.at("payload");
      header_seen = true;
      continue;
    }
    TraceRecord r;
    r.iteration = j.at("iteration").get<int>();
    r.kind = kind;
    r.payload = j.at("payload");
    r.wall_ms = j.value("wall_ms", 0.0);
    trace.records.push_back(std::move(r));
  }
  if (!header_seen) throw QtrError("trace has no header record");
  return trace;
}

std::uint64_t trace_hash(const SessionTrace& trace) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  mix(trace.header.dump());
  for (const auto& r : trace.records) mix(record_to_json(r, false).dump());
  return h;
}

json result_fingerprint(const SessionResult& result) {
  return json{{"final_answer", result.final_answer},
              {"answer_interval", result.answer_interval},
              {"iterations_used", result.iterations_used},
              {"total_frames", result.total_frames},
              {"terminated_by", result.terminated_by},
              {"episodes", result.episodes},
              {"graph", result.graph},
              {"trace_hash", trace_hash(result.trace)}};
}

// ---------------------------------------------------------------------------
// Answer prompt + parse

PromptPair build_answer_prompt(const Query& query,
                               const std::string& memory_digest,
                               const std::string& clip_text) {
  PromptPair prompt;
  prompt.system = prompts::kAnswerSystem;
  prompt.user =
      replace_all(prompts::kAnswerUser, "{question}", format_question(query));
  prompt.user = replace_all(prompt.user, "{clip}", clip_text);
  prompt.user = replace_all(
      prompt.user, "{history_block}",
      memory_digest.empty() ? std::string{}
                            : "- History Record:\n" + memory_digest);
  return prompt;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

AgentAnswer parse_agent_answer(const std::string& raw) {
  static const std::vector<std::pair<std::string, std::string>> kKeys = {
      {"Answer:", "answer"},
      {"Reason:", "reason"},
      {"Summary of this content:", "summary"},
      {"Confidence Score:", "confidence-score"}};
  std::vector<std::optional<std::string>> fields(kKeys.size());

  std::istringstream in(raw);
  std::string line;
  int current = -1;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    int matched = -1;
    for (std::size_t k = 0; k < kKeys.size(); ++k) {
      if (stripped.rfind(kKeys[k].first, 0) == 0) {
        matched = static_cast<int>(k);
        break;
      }
    }
    if (matched >= 0) {
      fields[matched] = trim(stripped.substr(kKeys[matched].first.size()));
      current = matched;
    } else if (current >= 0 && !stripped.empty()) {
      *fields[current] += "\n" + stripped;
    }
  }
  for (std::size_t k = 0; k < kKeys.size(); ++k) {
    if (!fields[k]) throw QtrError("missing-field(" + kKeys[k].second + ")");
  }

  AgentAnswer out;
  out.answer = *fields[0];
  out.reason = *fields[1];
  out.summary = *fields[2];
  const auto& score_text = *fields[3];
  char* end = nullptr;
  const double value = std::strtod(score_text.c_str(), &end);
  if (end == score_text.c_str()) throw QtrError("invalid-score");
  try {
    out.confidence = confidence_from_score(
        static_cast<int>(std::floor(value)));  // fractional scores floored
  } catch (const QtrError&) {
    throw QtrError("invalid-score");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recording and replay ports

namespace {

struct VisionCallLog {
  struct EmbedCall {
    double time_s = 0.0;
    Vec embedding;
  };
  std::vector<EmbedCall> embeds;
  std::vector<std::string> clips;
  std::vector<std::vector<Vec>> bin_blocks;
};

class RecordingVision : public VisionPort {
 public:
  RecordingVision(VisionPort& inner, VisionCallLog& log)
      : inner_(inner), log_(log) {}

  Vec embed(const std::string& video_id, double time_s) override {
    auto v = inner_.embed(video_id, time_s);
    log_.embeds.push_back({time_s, v});
    return v;
  }
  std::string describe(const std::string& video_id,
                       const TemporalInterval& interval) override {
    auto s = inner_.describe(video_id, interval);
    log_.clips.push_back(s);
    return s;
  }
  std::vector<Vec> bin_features(const VideoDescriptor& video,
                                double bin_width_s) override {
    auto b = inner_.bin_features(video, bin_width_s);
    log_.bin_blocks.push_back(b);
    return b;
  }
  bool ping() override { return inner_.ping(); }

 private:
  VisionPort& inner_;
  VisionCallLog& log_;
};

struct LLMCallLog {
  std::vector<std::string> completions;
  std::vector<Vec> embeddings;
};

class RecordingLLM : public LLMPort {
 public:
  RecordingLLM(LLMPort& inner, LLMCallLog& log) : inner_(inner), log_(log) {}

  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override {
    auto s = inner_.complete(system_prompt, user_prompt);
    log_.completions.push_back(s);
    return s;
  }
  Vec embed_text(const std::string& text) override {
    auto v = inner_.embed_text(text);
    log_.embeddings.push_back(v);
    return v;
  }
  bool ping() override { return inner_.ping(); }

 private:
  LLMPort& inner_;
  LLMCallLog& log_;
};

class ReplayLLM : public LLMPort {
 public:
  std::deque<std::string> replies;
  std::deque<Vec> embeddings;

  std::string complete(const std::string&, const std::string&) override {
    if (replies.empty())
      throw QtrError("trace truncated: missing recorded completion");
    auto r = replies.front();
    replies.pop_front();
    return r;
  }
  Vec embed_text(const std::string&) override {
    if (embeddings.empty())
      throw QtrError("trace truncated: missing recorded text embedding");
    auto v = embeddings.front();
    embeddings.pop_front();
    return v;
  }
};

class ReplayVision : public VisionPort {
 public:
  std::deque<VisionCallLog::EmbedCall> embeds;
  std::deque<std::string> clips;
  std::deque<std::vector<Vec>> bin_blocks;

  Vec embed(const std::string&, double time_s) override {
    if (embeds.empty())
      throw QtrError("trace truncated: missing recorded frame embedding");
    auto call = embeds.front();
    embeds.pop_front();
    if (std::abs(call.time_s - time_s) > 1e-9)
      throw QtrError("trace divergence: frame request order changed");
    return call.embedding;
  }
  std::string describe(const std::string&, const TemporalInterval&) override {
    if (clips.empty())
      throw QtrError("trace truncated: missing recorded clip description");
    auto s = clips.front();
    clips.pop_front();
    return s;
  }
  std::vector<Vec> bin_features(const VideoDescriptor&, double) override {
    if (bin_blocks.empty())
      throw QtrError("trace truncated: missing recorded bin features");
    auto b = bin_blocks.front();
    bin_blocks.pop_front();
    return b;
  }
};

// Uniform draw over integer-second cap-length windows that pass validation.
std::optional<TemporalInterval> random_window(
    const VideoDescriptor& video,
    const std::vector<TemporalInterval>& reviewed, const BudgetConfig& budget,
    std::mt19937_64& rng) {
  const double len =
      std::min(budget.max_segment_s, 0.9 * video.duration_s);
  const auto max_start =
      static_cast<long long>(std::floor(video.duration_s - len));
  std::vector<double> starts;
  for (long long s = 0; s <= max_start; ++s) {
    const TemporalInterval w{static_cast<double>(s),
                             static_cast<double>(s) + len};
    if (validate_interval(w, video, reviewed, budget).accepted)
      starts.push_back(w.start_s);
  }
  if (starts.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  const double s = starts[pick(rng)];
  return TemporalInterval{s, s + len};
}

json embeds_to_json(const std::vector<VisionCallLog::EmbedCall>& calls) {
  json arr = json::array();
  for (const auto& c : calls)
    arr.push_back(json{{"time_s", c.time_s}, {"embedding", c.embedding}});
  return arr;
}

}  // namespace

// ---------------------------------------------------------------------------
// The session loop

SessionResult run_session(const Query& query, const SessionConfig& cfg,
                          LLMPort& llm_port, VisionPort& vision_port) {
  cfg.validate();
  query.validate();
  const auto& video = query.video;
  video.validate();
  if (!llm_port.ping() || !vision_port.ping())
    throw QtrError("port ping failed");

  LLMCallLog llm_log;
  VisionCallLog vision_log;
  RecordingLLM llm(llm_port, llm_log);
  RecordingVision vision(vision_port, vision_log);

  SessionResult result;
  auto& trace = result.trace;
  trace.header = json{{"engine", kTraceFormatTag},
                      {"engine_version", kEngineVersion},
                      {"video", video},
                      {"query", query},
                      {"cfg", cfg}};

  const auto t0 = std::chrono::steady_clock::now();
  auto now_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };
  auto emit = [&](int iteration, const std::string& kind, json payload) {
    trace.records.push_back(
        TraceRecord{iteration, kind, std::move(payload), now_ms()});
  };

  const bool use_rtp = !cfg.ablated("no-rtp");
  const bool use_tm = !cfg.ablated("no-tm");
  const bool use_tcr = !cfg.ablated("no-tcr");

  Vec query_embedding;
  if (use_tm) {
    query_embedding = llm.embed_text(format_question(query));
    trace.header["query_embedding"] = query_embedding;
  }

  std::mt19937_64 rng(cfg.seed);
  PlannerState state;
  state.query = query;
  EventGraph graph;
  TimelineBins bins;
  bool bins_built = false;
  std::optional<TemporalInterval> pending_refine;
  std::optional<RefinementDelta> pending_delta;

  int best_score = -1;
  result.terminated_by.clear();

  auto record_termination = [&](int iteration, const std::string& why) {
    result.terminated_by = why;
    emit(iteration, "termination",
         json{{"terminated_by", why},
              {"iterations_used", result.iterations_used},
              {"total_frames", result.total_frames},
              {"final_answer", result.final_answer},
              {"answer_interval", result.answer_interval}});
  };

  try {
    for (int iter = 1; iter <= cfg.budget.max_iterations; ++iter) {
      // (1) plan
      TemporalInterval segment{0.0, 0.0};
      auto origin = EpisodeOrigin::kPlanned;
      std::string purpose;
      bool reviewed_exempt = false;

      if (!use_rtp) {
        const auto w = random_window(video, state.reviewed, cfg.budget, rng);
        if (!w) {
          record_termination(iter, "retries-exhausted-fallback-exhausted");
          break;
        }
        segment = *w;
        origin = EpisodeOrigin::kRandomAblation;
        emit(iter, "proposal",
             json{{"mode", "random"}, {"interval", segment}});
      } else if (pending_refine) {
        segment = *pending_refine;
        origin = EpisodeOrigin::kRefined;
        reviewed_exempt = true;
        emit(iter, "proposal",
             json{{"mode", "refined"},
                  {"interval", segment},
                  {"delta", *pending_delta}});
        pending_refine.reset();
        pending_delta.reset();
      } else {
        state.memory_digest =
            use_tm ? render_memory_digest(
                         retrieve_context(graph, query_embedding,
                                          cfg.retrieval_k),
                         static_cast<std::size_t>(cfg.digest_max_chars))
                   : "";
        const auto prop =
            propose_next_segment(state, video, cfg.budget, llm);
        json attempts = json::array();
        for (const auto& a : prop.attempt_log) {
          json entry{{"raw_reply", a.raw_reply},
                     {"rejection", a.rejection}};
          if (a.parsed) entry["parsed"] = *a.parsed;
          attempts.push_back(std::move(entry));
        }
        if (prop.ok) {
          segment = prop.interval;
          purpose = extract_purpose(prop.raw_reply);
          emit(iter, "proposal",
               json{{"mode", "rtp"},
                    {"attempts", attempts},
                    {"fallback_used", false},
                    {"interval", segment}});
        } else {
          const auto fb = fallback_window(video, state.reviewed, cfg.budget);
          if (!fb) {
            emit(iter, "proposal",
                 json{{"mode", "rtp"},
                      {"attempts", attempts},
                      {"fallback_used", true}});
            record_termination(iter, "retries-exhausted-fallback-exhausted");
            break;
          }
          segment = *fb;
          emit(iter, "proposal",
               json{{"mode", "rtp"},
                    {"attempts", attempts},
                    {"fallback_used", true},
                    {"interval", segment}});
        }
      }

      {
        const auto verdict = validate_interval(
            segment, video,
            reviewed_exempt ? std::vector<TemporalInterval>{} : state.reviewed,
            cfg.budget);
        emit(iter, "validation",
             json{{"interval", segment},
                  {"accepted", verdict.accepted},
                  {"origin", to_string(origin)},
                  {"reviewed_exempt", reviewed_exempt}});
        if (!verdict.accepted) {
          // Refined/fallback windows are valid by construction; treat a
          // failure here as exhaustion rather than looping forever.
          record_termination(iter, "retries-exhausted-fallback-exhausted");
          break;
        }
      }

      // (2) budget gate, then ground
      if (result.total_frames + cfg.budget_k > cfg.budget.max_total_frames) {
        record_termination(iter, "frame-budget");
        break;
      }
      result.iterations_used = iter;

      ReasoningEpisode episode;
      episode.iteration = iter;
      episode.interval = segment;
      episode.origin = origin;
      episode.intent = purpose.empty() ? synthesize_intent(segment, query)
                                       : purpose;
      result.episodes.push_back(episode);

      const auto evidence =
          ground_segment(vision, video, segment, cfg.budget_k, Projector{},
                         cfg.aggregate);
      result.total_frames += evidence.frame_cost;
      json sample_times = json::array();
      for (const auto& s : evidence.samples) sample_times.push_back(s.time_s);
      emit(iter, "evidence",
           json{{"segment", evidence.segment},
                {"embeds", embeds_to_json(vision_log.embeds)},
                {"clip_text", evidence.clip_text},
                {"frame_cost", evidence.frame_cost},
                {"reselected", evidence.reselected},
                {"sample_times", sample_times}});
      vision_log.embeds.clear();
      vision_log.clips.clear();

      state.reviewed.push_back(segment);
      state.irrelevant.push_back(false);

      // (3) answer
      const auto digest =
          use_tm ? render_memory_digest(
                       retrieve_context(graph, query_embedding,
                                        cfg.retrieval_k),
                       static_cast<std::size_t>(cfg.digest_max_chars))
                 : "";
      const auto answer_prompt =
          build_answer_prompt(query, digest, evidence.clip_text);
      AgentAnswer answer;
      json raw_attempts = json::array();
      bool parsed_ok = false;
      std::string last_raw;
      for (int attempt = 1; attempt <= cfg.budget.retry_limit; ++attempt) {
        auto user = answer_prompt.user;
        if (attempt > 1)
          user += "\n\nYour previous reply did not follow the Output Format. "
                  "Reply again following it EXACTLY.";
        last_raw = llm.complete(answer_prompt.system, user);
        raw_attempts.push_back(last_raw);
        try {
          answer = parse_agent_answer(last_raw);
          parsed_ok = true;
          break;
        } catch (const QtrError&) {
        }
      }
      if (!parsed_ok) {
        answer.answer = trim(last_raw);
        answer.reason = "";
        answer.summary = "";
        answer.confidence = confidence_from_score(1);
      }
      emit(iter, "answer",
           json{{"raw_attempts", raw_attempts},
                {"answer", answer},
                {"digest", digest},
                {"parsed_ok", parsed_ok}});

      if (answer.confidence.band == ConfidenceBand::kLow)
        state.irrelevant.back() = true;
      if (answer.confidence.score >= best_score) {
        best_score = answer.confidence.score;
        result.final_answer = answer;
        result.answer_interval = segment;
      }

      // (4) verify
      RefinementDelta delta;  // identity (loss 0) when TCR is off
      if (use_tcr) {
        json alignment_payload;
        if (!bins_built) {
          bins = build_timeline_bins(vision, video, cfg.effective_bin_width());
          bins_built = true;
          alignment_payload["bin_features"] = bins.features;
          vision_log.bin_blocks.clear();
        }
        const auto intent_embedding = llm.embed_text(episode.intent);
        const auto alignment = alignment_distribution(
            intent_embedding, bins.features, bins.bin_width_s);
        const auto planned_bin = bins.bin_of(segment.center());
        const auto peak = argmax_bin(alignment.distribution);
        delta = make_refinement_delta(alignment, segment, video);

        const auto grad =
            tcr_loss_gradient({alignment.distribution}, {planned_bin});
        alignment_payload["intent"] = episode.intent;
        alignment_payload["intent_embedding"] = intent_embedding;
        alignment_payload["scores"] = alignment.scores;
        alignment_payload["distribution"] = alignment.distribution;
        alignment_payload["planned_bin"] = planned_bin;
        alignment_payload["argmax_bin"] = peak;
        alignment_payload["delta"] = delta;
        alignment_payload["loss_contribution"] = delta.loss_contribution;
        alignment_payload["gradient"] = grad.front().values;
        alignment_payload["gradient_degenerate"] = grad.front().degenerate;

        bool refine_next = false;
        if (peak != planned_bin) {
          auto candidate =
              apply_refinement(segment, delta, video, cfg.budget);
          const bool already_seen = std::any_of(
              state.reviewed.begin(), state.reviewed.end(),
              [&](const TemporalInterval& r) {
                return std::abs(r.start_s - candidate.start_s) < 1e-6 &&
                       std::abs(r.end_s - candidate.end_s) < 1e-6;
              });
          if (!already_seen &&
              validate_interval(candidate, video, {}, cfg.budget).accepted) {
            pending_refine = candidate;
            pending_delta = delta;
            refine_next = true;
            alignment_payload["refined_interval"] = candidate;
          }
        }
        alignment_payload["refine_next"] = refine_next;
        emit(iter, "alignment", std::move(alignment_payload));
      }

      // (5) memorize
      if (use_tm) {
        Finding finding;
        finding.interval = evidence.segment;
        finding.summary =
            answer.summary.empty() ? evidence.clip_text : answer.summary;
        finding.embedding = evidence.aggregate;
        finding.reason_text = answer.reason;
        const int node_id = update_graph(graph, finding, delta);
        emit(iter, "memory-update",
             json{{"node_id", node_id}, {"graph", graph}});
      }

      // (6) stop gate
      if (static_cast<int>(answer.confidence.band) >=
          static_cast<int>(cfg.stop_band)) {
        record_termination(iter, "high-confidence");
        break;
      }
      if (iter == cfg.budget.max_iterations)
        record_termination(iter, "iteration-budget");
    }
  } catch (const SessionAborted&) {
    throw;
  } catch (const std::exception& e) {
    emit(result.iterations_used, "termination",
         json{{"terminated_by", "aborted"}, {"error", e.what()}});
    throw SessionAborted(e.what(), std::move(trace));
  }

  if (result.terminated_by.empty())
    record_termination(result.iterations_used, "iteration-budget");
  result.graph = graph;
  return result;
}

// ---------------------------------------------------------------------------
// Replay

SessionResult replay_session(const SessionTrace& trace) {
  const auto engine = trace.header.value("engine", std::string{});
  if (engine != kTraceFormatTag)
    throw QtrError("engine version mismatch: trace tagged '" + engine +
                   "', this engine is '" + kTraceFormatTag + "'");

  Query query = trace.header.at("query").get<Query>();
  query.video = trace.header.at("video").get<VideoDescriptor>();
  const auto cfg = trace.header.at("cfg").get<SessionConfig>();

  ReplayLLM llm;
  ReplayVision vision;
  if (trace.header.contains("query_embedding"))
    llm.embeddings.push_back(trace.header.at("query_embedding").get<Vec>());

  for (const auto& r : trace.records) {
    if (r.kind == "proposal") {
      if (r.payload.value("mode", "") == "rtp") {
        for (const auto& a : r.payload.at("attempts"))
          llm.replies.push_back(a.at("raw_reply").get<std::string>());
      }
    } else if (r.kind == "evidence") {
      for (const auto& e : r.payload.at("embeds"))
        vision.embeds.push_back({e.at("time_s").get<double>(),
                                 e.at("embedding").get<Vec>()});
      vision.clips.push_back(r.payload.at("clip_text").get<std::string>());
    } else if (r.kind == "answer") {
      for (const auto& raw : r.payload.at("raw_attempts"))
        llm.replies.push_back(raw.get<std::string>());
    } else if (r.kind == "alignment") {
      if (r.payload.contains("bin_features"))
        vision.bin_blocks.push_back(
            r.payload.at("bin_features").get<std::vector<Vec>>());
      llm.embeddings.push_back(r.payload.at("intent_embedding").get<Vec>());
    }
  }

  return run_session(query, cfg, llm, vision);
}

}  // namespace qtr
