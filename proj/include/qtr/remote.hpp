#pragma once
// Remote chat-completion client and the frame-file vision reader. The
// credential is read from an environment variable and never appears in
// config files, logs, or traces.

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"

namespace qtr {

struct EndpointConfig {
  std::string base_url;
  std::string model;
  double temperature = 0.0;
  int timeout_ms = 30000;
  int retry_limit = 3;
  std::string api_key_env = "QTR_API_KEY";  // variable NAME, never the key
};

void to_json(json& j, const EndpointConfig& v);
void from_json(const json& j, EndpointConfig& v);

// Reads the credential from the configured environment variable.
// Throws QtrError naming the variable (not its value) when unset.
std::string endpoint_credential(const EndpointConfig& cfg);

struct RequestLogEntry {
  std::string request_id;
  std::string path;
  int attempts = 0;
  int status = 0;       // last HTTP status, 0 for transport failure
  std::string outcome;  // ok | http-status(<code>) | timeout | malformed-response
};

void to_json(json& j, const RequestLogEntry& v);

// One chat-completion round trip with exponential backoff on transport
// errors and 5xx, deterministic jitter from jitter_seed. Throws QtrError
// "http-status(<code>) [request <id>]", "timeout [request <id>]" or
// "malformed-response [request <id>]".
std::string remote_complete(const EndpointConfig& cfg,
                            const std::string& system_prompt,
                            const std::string& user_prompt,
                            std::uint64_t jitter_seed = 0,
                            RequestLogEntry* log_out = nullptr);

class RemoteLLM : public LLMPort {
 public:
  explicit RemoteLLM(EndpointConfig cfg, std::uint64_t jitter_seed = 0);

  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override;
  Vec embed_text(const std::string& text) override;
  bool ping() override;

  // Diagnostics safe to emit anywhere: ids, paths, statuses; no headers,
  // no payloads, no credentials.
  std::vector<RequestLogEntry> request_log() const;

 private:
  EndpointConfig cfg_;
  std::uint64_t jitter_seed_;
  mutable std::mutex mutex_;
  std::vector<RequestLogEntry> log_;
  std::uint64_t next_request_ = 1;
};

// Reads precomputed per-frame vectors from a manifest written by an
// external decode step. Document shape:
//   {"videos": [{"id", "fps", "frames": [{"time_s", "embedding"}...],
//                "clips": [{"interval": [a, b], "text"}...]}]}
class FrameFileVision : public VisionPort {
 public:
  explicit FrameFileVision(const std::string& manifest_path);

  Vec embed(const std::string& video_id, double time_s) override;
  std::string describe(const std::string& video_id,
                       const TemporalInterval& interval) override;

 private:
  struct VideoFrames {
    std::string id;
    double fps = 1.0;
    std::vector<std::pair<double, Vec>> frames;  // sorted by time
    std::vector<std::pair<TemporalInterval, std::string>> clips;
  };
  const VideoFrames& video_or_throw(const std::string& id) const;
  std::vector<VideoFrames> videos_;
};

}  // namespace qtr
