#include "qtr/perception.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace qtr {

void to_json(json& j, const FrameSample& v) {
  j = json{{"frame_index", v.frame_index},
           {"time_s", v.time_s},
           {"embedding", v.embedding}};
}

void from_json(const json& j, FrameSample& v) {
  v.frame_index = j.at("frame_index").get<long long>();
  v.time_s = j.at("time_s").get<double>();
  v.embedding = j.at("embedding").get<Vec>();
}

void to_json(json& j, const Evidence& v) {
  j = json{{"segment", v.segment},
           {"samples", v.samples},
           {"projected", v.projected},
           {"aggregate", v.aggregate},
           {"clip_text", v.clip_text},
           {"frame_cost", v.frame_cost},
           {"reselected", v.reselected}};
}

void from_json(const json& j, Evidence& v) {
  v.segment = j.at("segment").get<TemporalInterval>();
  v.samples = j.value("samples", std::vector<FrameSample>{});
  v.projected = j.value("projected", std::vector<Vec>{});
  v.aggregate = j.value("aggregate", Vec{});
  v.clip_text = j.value("clip_text", std::string{});
  v.frame_cost = j.value("frame_cost", 0);
  v.reselected = j.value("reselected", false);
}

namespace {

long long frame_key(double time_s, double fps) {
  return std::llround(time_s * fps);
}

// Inverts the piecewise-linear CDF of a per-second weight histogram.
double invert_cdf(const std::vector<double>& cumulative, double quantile,
                  double start_s, double end_s) {
  const double target = quantile * cumulative.back();
  double prev = 0.0;
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    const double mass = cumulative[i] - prev;
    // Zero-mass bins carry no samples; low quantiles land where mass starts.
    if (mass > 0.0 && target <= cumulative[i] + 1e-12) {
      const double frac = std::clamp((target - prev) / mass, 0.0, 1.0);
      return std::min(end_s, start_s + static_cast<double>(i) + frac);
    }
    prev = cumulative[i];
  }
  return end_s;
}

}  // namespace

std::vector<double> select_frames(const TemporalInterval& segment,
                                  const VideoDescriptor& video, int budget_k,
                                  const std::vector<double>& density_profile) {
  if (budget_k < 2) throw QtrError("budget_k must be at least 2");
  if (segment.length() < 0.0) throw QtrError("segment must not be inverted");
  const double fps = video.fps;
  const long long first = frame_key(segment.start_s, fps);
  const long long last = frame_key(segment.end_s, fps);
  const long long available = last - first + 1;
  const auto target = static_cast<std::size_t>(
      std::min<long long>(budget_k, std::max<long long>(1, available)));

  const double total_weight = std::accumulate(density_profile.begin(),
                                              density_profile.end(), 0.0);
  std::vector<double> cumulative;
  if (total_weight > 0.0) {
    cumulative.reserve(density_profile.size());
    double run = 0.0;
    for (double w : density_profile) {
      run += std::max(0.0, w);
      cumulative.push_back(run);
    }
  }

  auto time_at_quantile = [&](double q) {
    if (!cumulative.empty())
      return invert_cdf(cumulative, q, segment.start_s, segment.end_s);
    return segment.start_s + q * segment.length();
  };

  std::map<long long, double> by_frame;  // frame index -> earliest time
  if (target == 1) {
    by_frame[frame_key(segment.start_s, fps)] = segment.start_s;
  } else {
    for (std::size_t i = 0; i < target; ++i) {
      const double q =
          static_cast<double>(i) / static_cast<double>(target - 1);
      const double t = time_at_quantile(q);
      by_frame.emplace(frame_key(t, fps), t);
    }
  }

  // Quantiles can collide on a frame; fill from unused frames in order.
  for (long long f = first; f <= last && by_frame.size() < target; ++f) {
    if (by_frame.count(f)) continue;
    const double t = std::clamp(static_cast<double>(f) / fps, segment.start_s,
                                segment.end_s);
    by_frame.emplace(f, t);
  }

  std::vector<double> times;
  times.reserve(by_frame.size());
  for (const auto& [frame, t] : by_frame) times.push_back(t);
  std::sort(times.begin(), times.end());
  return times;
}

std::vector<double> semantic_variance(const std::vector<Vec>& embeddings) {
  if (embeddings.size() < 2)
    throw QtrError("semantic variance needs at least two embeddings");
  std::vector<double> out;
  out.reserve(embeddings.size() - 1);
  for (std::size_t i = 0; i + 1 < embeddings.size(); ++i) {
    const auto& a = embeddings[i];
    const auto& b = embeddings[i + 1];
    if (a.size() != b.size())
      throw QtrError("embedding dimensions differ between frames");
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = b[k] - a[k];
      d2 += d * d;
    }
    out.push_back(d2);
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

namespace {

Vec mat_vec(const std::vector<Vec>& m, const Vec& v) {
  Vec out(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (m[r].size() != v.size())
      throw QtrError("matrix row width does not match vector size");
    for (std::size_t c = 0; c < v.size(); ++c) out[r] += m[r][c] * v[c];
  }
  return out;
}

}  // namespace

Vec project_tokens(const Vec& z, const std::vector<Vec>& w1,
                   const std::vector<Vec>& w2) {
  Vec hidden = mat_vec(w1, z);
  for (double& h : hidden) h = gelu(h);
  return mat_vec(w2, hidden);
}

std::vector<Vec> project_all(const std::vector<FrameSample>& samples,
                             const Projector& proj) {
  std::vector<Vec> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (proj.is_identity())
      out.push_back(s.embedding);
    else
      out.push_back(project_tokens(s.embedding, proj.w1, proj.w2));
  }
  return out;
}

AggregateMode aggregate_mode_from_string(const std::string& s) {
  if (s == "mean") return AggregateMode::kMean;
  if (s == "attention") return AggregateMode::kAttention;
  throw QtrError("unknown aggregate mode '" + s + "'");
}

std::string to_string(AggregateMode mode) {
  return mode == AggregateMode::kMean ? "mean" : "attention";
}

Vec aggregate_segment(const std::vector<Vec>& projected, AggregateMode mode) {
  if (projected.empty()) throw QtrError("cannot aggregate zero tokens");
  const auto dim = projected.front().size();
  Vec mean(dim, 0.0);
  for (const auto& t : projected) {
    if (t.size() != dim) throw QtrError("token dimensions differ");
    for (std::size_t d = 0; d < dim; ++d) mean[d] += t[d];
  }
  for (double& x : mean) x /= static_cast<double>(projected.size());
  if (mode == AggregateMode::kMean) return mean;

  std::vector<double> scores(projected.size(), 0.0);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d)
      scores[i] += projected[i][d] * mean[d];
  }
  const double peak = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double& s : scores) {
    s = std::exp(s - peak);
    denom += s;
  }
  Vec out(dim, 0.0);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const double w = scores[i] / denom;
    for (std::size_t d = 0; d < dim; ++d) out[d] += w * projected[i][d];
  }
  return out;
}

bool reselection_triggered(const std::vector<double>& gap_variances) {
  if (gap_variances.size() < 2) return false;
  auto sorted = gap_variances;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const double median = (n % 2 == 1)
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return sorted.back() > 4.0 * median;
}

Evidence ground_segment(VisionPort& vision, const VideoDescriptor& video,
                        const TemporalInterval& segment, int budget_k,
                        const Projector& proj, AggregateMode mode) {
  if (segment.length() <= 0.0)
    throw QtrError("cannot ground an empty or inverted segment");
  Evidence evidence;
  evidence.segment = segment;

  std::map<long long, Vec> cache;
  auto embed_at = [&](double t) -> const Vec& {
    const auto key = frame_key(t, video.fps);
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, vision.embed(video.id, t)).first;
    return it->second;
  };

  const auto first_times = select_frames(segment, video, budget_k);
  std::vector<Vec> first_embeddings;
  first_embeddings.reserve(first_times.size());
  for (double t : first_times) first_embeddings.push_back(embed_at(t));

  auto final_times = first_times;
  if (first_embeddings.size() >= 2) {
    const auto variances = semantic_variance(first_embeddings);
    if (reselection_triggered(variances)) {
      evidence.reselected = true;
      // Spread each gap's variance over the seconds it spans.
      const auto seconds = static_cast<std::size_t>(
          std::max(1.0, std::ceil(segment.length())));
      std::vector<double> weights(seconds, 0.0);
      for (std::size_t g = 0; g < variances.size(); ++g) {
        const double a = first_times[g] - segment.start_s;
        const double b = first_times[g + 1] - segment.start_s;
        const double len = b - a;
        if (len <= 0.0) continue;
        for (std::size_t s = 0; s < seconds; ++s) {
          const double lo = std::max(a, static_cast<double>(s));
          const double hi = std::min(b, static_cast<double>(s + 1));
          if (hi > lo) weights[s] += variances[g] * (hi - lo) / len;
        }
      }
      final_times = select_frames(segment, video, budget_k, weights);
    }
  }

  evidence.samples.reserve(final_times.size());
  for (double t : final_times)
    evidence.samples.push_back(
        FrameSample{frame_key(t, video.fps), t, embed_at(t)});
  evidence.projected = project_all(evidence.samples, proj);
  evidence.aggregate = aggregate_segment(evidence.projected, mode);
  evidence.clip_text = vision.describe(video.id, segment);
  evidence.frame_cost = static_cast<int>(cache.size());
  return evidence;
}

}  // namespace qtr
