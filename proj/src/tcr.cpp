#include "qtr/tcr.hpp"

#include <algorithm>
#include <cmath>

namespace qtr {

void to_json(json& j, const AlignmentResult& v) {
  j = json{{"scores", v.scores},
           {"distribution", v.distribution},
           {"bin_width_s", v.bin_width_s}};
}

void from_json(const json& j, AlignmentResult& v) {
  v.scores = j.at("scores").get<std::vector<double>>();
  v.distribution = j.at("distribution").get<std::vector<double>>();
  v.bin_width_s = j.at("bin_width_s").get<double>();
}

void to_json(json& j, const RefinementDelta& v) {
  j = json{{"suggested_center_s", v.suggested_center_s},
           {"scale", v.scale},
           {"loss_contribution", v.loss_contribution}};
}

void from_json(const json& j, RefinementDelta& v) {
  v.suggested_center_s = j.at("suggested_center_s").get<double>();
  v.scale = j.at("scale").get<double>();
  v.loss_contribution = j.at("loss_contribution").get<double>();
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw QtrError("cosine similarity needs equal dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0)
    throw QtrError("cosine similarity undefined for zero vectors");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> stable_softmax(const std::vector<double>& scores) {
  if (scores.empty()) throw QtrError("softmax over empty scores");
  const double peak = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - peak);
    denom += out[i];
  }
  for (double& p : out) p /= denom;
  return out;
}

std::size_t TimelineBins::bin_of(double time_s) const {
  if (count() == 0) throw QtrError("empty timeline bins");
  const auto idx = static_cast<long long>(std::floor(time_s / bin_width_s));
  return static_cast<std::size_t>(
      std::clamp<long long>(idx, 0, static_cast<long long>(count()) - 1));
}

double TimelineBins::center_of(std::size_t bin) const {
  if (bin >= count()) throw QtrError("bin index out of range");
  const double a = static_cast<double>(bin) * bin_width_s;
  const double b = std::min(duration_s, a + bin_width_s);
  return 0.5 * (a + b);
}

TimelineBins build_timeline_bins(VisionPort& vision,
                                 const VideoDescriptor& video,
                                 double bin_width_s) {
  if (bin_width_s <= 0.0) throw QtrError("bin_width_s must be positive");
  TimelineBins bins;
  bins.bin_width_s = bin_width_s;
  bins.duration_s = video.duration_s;
  bins.features = vision.bin_features(video, bin_width_s);
  return bins;
}

AlignmentResult alignment_distribution(const Vec& episode_embedding,
                                       const std::vector<Vec>& bin_features,
                                       double bin_width_s) {
  if (bin_features.empty()) throw QtrError("alignment needs at least one bin");
  AlignmentResult result;
  result.bin_width_s = bin_width_s;
  result.scores.reserve(bin_features.size());
  for (const auto& phi : bin_features)
    result.scores.push_back(cosine_similarity(episode_embedding, phi));
  result.distribution = stable_softmax(result.scores);
  return result;
}

namespace {

double term_norm(const std::vector<double>& p, std::size_t planned) {
  if (planned >= p.size()) throw QtrError("planned bin index out of range");
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - (i == planned ? 1.0 : 0.0);
    sq += r * r;
  }
  return std::sqrt(sq);
}

}  // namespace

double tcr_loss(const std::vector<std::vector<double>>& distributions,
                const std::vector<std::size_t>& planned_bins) {
  if (distributions.empty() || distributions.size() != planned_bins.size())
    throw QtrError("tcr loss needs matching non-empty term lists");
  double total = 0.0;
  for (std::size_t t = 0; t < distributions.size(); ++t)
    total += term_norm(distributions[t], planned_bins[t]);
  return total / static_cast<double>(distributions.size());
}

std::vector<GradientTerm> tcr_loss_gradient(
    const std::vector<std::vector<double>>& distributions,
    const std::vector<std::size_t>& planned_bins) {
  if (distributions.empty() || distributions.size() != planned_bins.size())
    throw QtrError("tcr gradient needs matching non-empty term lists");
  const auto T = static_cast<double>(distributions.size());
  std::vector<GradientTerm> out;
  out.reserve(distributions.size());
  for (std::size_t t = 0; t < distributions.size(); ++t) {
    const auto& p = distributions[t];
    const auto norm = term_norm(p, planned_bins[t]);
    GradientTerm term;
    term.values.assign(p.size(), 0.0);
    if (norm == 0.0) {
      term.degenerate = true;
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - (i == planned_bins[t] ? 1.0 : 0.0);
        term.values[i] = r / (T * norm);
      }
    }
    out.push_back(std::move(term));
  }
  return out;
}

std::size_t argmax_bin(const std::vector<double>& distribution) {
  if (distribution.empty()) throw QtrError("argmax over empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < distribution.size(); ++i) {
    if (distribution[i] > distribution[best]) best = i;
  }
  return best;  // strict > keeps the earliest bin on ties
}

RefinementDelta make_refinement_delta(const AlignmentResult& alignment,
                                      const TemporalInterval& planned,
                                      const VideoDescriptor& video) {
  if (alignment.bin_width_s <= 0.0)
    throw QtrError("alignment carries no bin width");
  const auto bins = static_cast<long long>(alignment.distribution.size());
  const double w = alignment.bin_width_s;
  const auto planned_bin = static_cast<std::size_t>(std::clamp<long long>(
      static_cast<long long>(std::floor(planned.center() / w)), 0, bins - 1));
  const auto peak = argmax_bin(alignment.distribution);
  const double loss = term_norm(alignment.distribution, planned_bin);

  const double a = static_cast<double>(peak) * w;
  const double b = std::min(video.duration_s, a + w);

  RefinementDelta delta;
  delta.suggested_center_s = 0.5 * (a + b);
  delta.scale = std::max(0.25, 1.0 - loss / std::sqrt(2.0));
  delta.loss_contribution = loss;
  return delta;
}

}  // namespace qtr
