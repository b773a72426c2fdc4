#pragma once
// Frame selection and segment grounding. Grounding embeds a budgeted set of
// frames, and if the semantic variance between neighbours is lopsided it
// reselects once with variance-weighted sampling, then projects and
// aggregates the samples into segment evidence.

#include <string>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"

namespace qtr {

struct FrameSample {
  long long frame_index = 0;
  double time_s = 0.0;
  Vec embedding;
};

// t = W2 * gelu(W1 * z). Empty matrices mean identity passthrough.
struct Projector {
  std::vector<Vec> w1;
  std::vector<Vec> w2;
  bool is_identity() const { return w1.empty() && w2.empty(); }
};

struct Evidence {
  TemporalInterval segment{0.0, 0.0};
  std::vector<FrameSample> samples;
  std::vector<Vec> projected;
  Vec aggregate;
  std::string clip_text;
  int frame_cost = 0;      // distinct frames embedded, both passes
  bool reselected = false;
};

void to_json(json& j, const FrameSample& v);
void from_json(const json& j, FrameSample& v);
void to_json(json& j, const Evidence& v);
void from_json(const json& j, Evidence& v);

// Sample times inside `segment`, one per distinct frame, exactly
// min(budget_k, frames available). An empty density profile means even
// spacing with both endpoints included. A non-empty profile is a per-second
// weight histogram over the segment (entry i covers offset [i, i+1)); times
// come from inverting its piecewise-linear CDF at evenly spaced quantiles.
std::vector<double> select_frames(const TemporalInterval& segment,
                                  const VideoDescriptor& video, int budget_k,
                                  const std::vector<double>& density_profile = {});

// Squared Euclidean distance between consecutive embeddings; size n-1.
// Throws on fewer than two embeddings.
std::vector<double> semantic_variance(const std::vector<Vec>& embeddings);

double gelu(double x);

Vec project_tokens(const Vec& z, const std::vector<Vec>& w1,
                   const std::vector<Vec>& w2);

std::vector<Vec> project_all(const std::vector<FrameSample>& samples,
                             const Projector& proj);

enum class AggregateMode { kMean, kAttention };

AggregateMode aggregate_mode_from_string(const std::string& s);
std::string to_string(AggregateMode mode);

// Mean, or attention: softmax over dot(token, mean) weighting.
Vec aggregate_segment(const std::vector<Vec>& projected, AggregateMode mode);

// Reselection fires when max gap variance > 4x median gap variance.
bool reselection_triggered(const std::vector<double>& gap_variances);

Evidence ground_segment(VisionPort& vision, const VideoDescriptor& video,
                        const TemporalInterval& segment, int budget_k,
                        const Projector& proj = {},
                        AggregateMode mode = AggregateMode::kMean);

}  // namespace qtr
