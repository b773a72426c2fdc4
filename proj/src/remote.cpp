#include "qtr/remote.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"

namespace qtr {

void to_json(json& j, const EndpointConfig& v) {
  j = json{{"base_url", v.base_url},       {"model", v.model},
           {"temperature", v.temperature}, {"timeout_ms", v.timeout_ms},
           {"retry_limit", v.retry_limit}, {"api_key_env", v.api_key_env}};
}

void from_json(const json& j, EndpointConfig& v) {
  v.base_url = j.at("base_url").get<std::string>();
  v.model = j.value("model", std::string{});
  v.temperature = j.value("temperature", 0.0);
  v.timeout_ms = j.value("timeout_ms", 30000);
  v.retry_limit = j.value("retry_limit", 3);
  v.api_key_env = j.value("api_key_env", std::string{"QTR_API_KEY"});
  if (j.contains("api_key") || j.contains("credential") || j.contains("token"))
    throw QtrError(
        "credentials must come from the environment variable named by "
        "api_key_env, not from config files");
}

std::string endpoint_credential(const EndpointConfig& cfg) {
  const char* value = std::getenv(cfg.api_key_env.c_str());
  if (value == nullptr || *value == '\0')
    throw QtrError("credential environment variable " + cfg.api_key_env +
                   " is not set");
  return value;
}

void to_json(json& j, const RequestLogEntry& v) {
  j = json{{"request_id", v.request_id},
           {"path", v.path},
           {"attempts", v.attempts},
           {"status", v.status},
           {"outcome", v.outcome}};
}

namespace {

struct WireResult {
  int status = 0;
  bool timed_out = false;
  bool transport_error = false;
  std::string body;
};

WireResult post_json(const EndpointConfig& cfg, const std::string& path,
                     const json& payload, const std::string& credential,
                     const std::string& request_id) {
  httplib::Client client(cfg.base_url);
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers{{"Authorization", "Bearer " + credential},
                           {"X-Request-Id", request_id}};
  auto res = client.Post(path, headers, payload.dump(), "application/json");

  WireResult out;
  if (!res) {
    out.transport_error = true;
    out.timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                    res.error() == httplib::Error::Read ||
                    res.error() == httplib::Error::Write;
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

// Retries transport errors and 5xx with exponential backoff; jitter comes
// from the seeded source so the schedule replays deterministically.
WireResult post_with_retry(const EndpointConfig& cfg, const std::string& path,
                           const json& payload, const std::string& credential,
                           const std::string& request_id,
                           std::uint64_t jitter_seed, int& attempts_out) {
  std::mt19937_64 jitter_rng(jitter_seed);
  std::uniform_int_distribution<int> jitter(0, 49);

  WireResult last;
  for (int attempt = 1; attempt <= std::max(1, cfg.retry_limit); ++attempt) {
    attempts_out = attempt;
    last = post_json(cfg, path, payload, credential, request_id);
    const bool retryable = last.transport_error || last.status >= 500;
    if (!retryable) return last;
    if (attempt < cfg.retry_limit) {
      const int delay_ms = (50 << (attempt - 1)) + jitter(jitter_rng);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }
  }
  return last;
}

[[noreturn]] void throw_wire_error(const WireResult& r,
                                   const std::string& request_id) {
  if (r.transport_error)
    throw QtrError((r.timed_out ? std::string("timeout") : "http-status(0)") +
                   " [request " + request_id + "]");
  throw QtrError("http-status(" + std::to_string(r.status) + ") [request " +
                 request_id + "]");
}

json parse_body_or_throw(const std::string& body,
                         const std::string& request_id) {
  auto parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded())
    throw QtrError("malformed-response [request " + request_id + "]");
  return parsed;
}

std::string run_completion(const EndpointConfig& cfg,
                           const std::string& system_prompt,
                           const std::string& user_prompt,
                           std::uint64_t jitter_seed,
                           const std::string& request_id,
                           RequestLogEntry* log_out) {
  const auto credential = endpoint_credential(cfg);
  const json payload{
      {"model", cfg.model},
      {"temperature", cfg.temperature},
      {"messages",
       json::array({json{{"role", "system"}, {"content", system_prompt}},
                    json{{"role", "user"}, {"content", user_prompt}}})}};

  RequestLogEntry entry;
  entry.request_id = request_id;
  entry.path = "/v1/chat/completions";

  WireResult r;
  try {
    r = post_with_retry(cfg, entry.path, payload, credential, request_id,
                        jitter_seed, entry.attempts);
  } catch (...) {
    if (log_out) *log_out = entry;
    throw;
  }
  entry.status = r.status;

  try {
    if (r.transport_error || r.status != 200) throw_wire_error(r, request_id);
    const auto body = parse_body_or_throw(r.body, request_id);
    if (!body.contains("choices") || body["choices"].empty() ||
        !body["choices"][0].contains("message") ||
        !body["choices"][0]["message"].contains("content"))
      throw QtrError("malformed-response [request " + request_id + "]");
    entry.outcome = "ok";
    if (log_out) *log_out = entry;
    return body["choices"][0]["message"]["content"].get<std::string>();
  } catch (const QtrError& e) {
    const std::string what = e.what();
    entry.outcome = what.substr(0, what.find(" [request"));
    if (log_out) *log_out = entry;
    throw;
  }
}

}  // namespace

std::string remote_complete(const EndpointConfig& cfg,
                            const std::string& system_prompt,
                            const std::string& user_prompt,
                            std::uint64_t jitter_seed,
                            RequestLogEntry* log_out) {
  return run_completion(cfg, system_prompt, user_prompt, jitter_seed, "r1",
                        log_out);
}

RemoteLLM::RemoteLLM(EndpointConfig cfg, std::uint64_t jitter_seed)
    : cfg_(std::move(cfg)), jitter_seed_(jitter_seed) {}

std::string RemoteLLM::complete(const std::string& system_prompt,
                                const std::string& user_prompt) {
  std::string request_id;
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    request_id = "r" + std::to_string(next_request_);
    seed = jitter_seed_ ^ (0x9e3779b97f4a7c15ULL * next_request_);
    ++next_request_;
  }
  RequestLogEntry entry;
  try {
    auto reply = run_completion(cfg_, system_prompt, user_prompt, seed,
                                request_id, &entry);
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(entry);
    return reply;
  } catch (...) {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(entry);
    throw;
  }
}

Vec RemoteLLM::embed_text(const std::string& text) {
  const auto credential = endpoint_credential(cfg_);
  std::string request_id;
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    request_id = "r" + std::to_string(next_request_);
    seed = jitter_seed_ ^ (0x9e3779b97f4a7c15ULL * next_request_);
    ++next_request_;
  }

  RequestLogEntry entry;
  entry.request_id = request_id;
  entry.path = "/v1/embeddings";
  const json payload{{"model", cfg_.model}, {"input", text}};

  auto finish = [this](RequestLogEntry e) {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(std::move(e));
  };

  WireResult r = post_with_retry(cfg_, entry.path, payload, credential,
                                 request_id, seed, entry.attempts);
  entry.status = r.status;
  try {
    if (r.transport_error || r.status != 200) throw_wire_error(r, request_id);
    const auto body = parse_body_or_throw(r.body, request_id);
    if (!body.contains("data") || body["data"].empty() ||
        !body["data"][0].contains("embedding"))
      throw QtrError("malformed-response [request " + request_id + "]");
    Vec out = body["data"][0]["embedding"].get<Vec>();
    entry.outcome = "ok";
    finish(entry);
    return out;
  } catch (const QtrError& e) {
    const std::string what = e.what();
    entry.outcome = what.substr(0, what.find(" [request"));
    finish(entry);
    throw;
  }
}

bool RemoteLLM::ping() {
  try {
    endpoint_credential(cfg_);
  } catch (const QtrError&) {
    return false;
  }
  return !cfg_.base_url.empty();
}

std::vector<RequestLogEntry> RemoteLLM::request_log() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return log_;
}

// ---------------------------------------------------------------------------
// FrameFileVision

FrameFileVision::FrameFileVision(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw QtrError("cannot open frame manifest " + manifest_path);
  json doc;
  in >> doc;
  for (const auto& v : doc.at("videos")) {
    VideoFrames vf;
    vf.id = v.at("id").get<std::string>();
    vf.fps = v.value("fps", 1.0);
    for (const auto& f : v.at("frames"))
      vf.frames.emplace_back(f.at("time_s").get<double>(),
                             f.at("embedding").get<Vec>());
    std::sort(vf.frames.begin(), vf.frames.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& c : v.value("clips", json::array()))
      vf.clips.emplace_back(c.at("interval").get<TemporalInterval>(),
                            c.at("text").get<std::string>());
    videos_.push_back(std::move(vf));
  }
}

const FrameFileVision::VideoFrames& FrameFileVision::video_or_throw(
    const std::string& id) const {
  for (const auto& v : videos_)
    if (v.id == id) return v;
  throw QtrError("unknown video " + id);
}

Vec FrameFileVision::embed(const std::string& video_id, double time_s) {
  const auto& v = video_or_throw(video_id);
  if (v.frames.empty()) throw QtrError("no frames for video " + video_id);
  // nearest stored frame; ties resolve to the earlier one
  auto best = v.frames.begin();
  double best_gap = std::abs(best->first - time_s);
  for (auto it = v.frames.begin(); it != v.frames.end(); ++it) {
    const double gap = std::abs(it->first - time_s);
    if (gap < best_gap) {
      best = it;
      best_gap = gap;
    }
  }
  return best->second;
}

std::string FrameFileVision::describe(const std::string& video_id,
                                      const TemporalInterval& interval) {
  const auto& v = video_or_throw(video_id);
  std::string joined;
  for (const auto& [span, text] : v.clips) {
    if (intersection_length(span, interval) <= 0.0) continue;
    if (!joined.empty()) joined += "; ";
    joined += text;
  }
  std::string head = "Clip [" + format_seconds(interval.start_s) + ", " +
                     format_seconds(interval.end_s) + "] of video " +
                     video_id + ": ";
  return head + (joined.empty() ? "background scenery" : joined);
}

}  // namespace qtr
