#pragma once
// Temporal Consistency Refiner: aligns an episode's intent embedding against
// timeline bins, scores the consistency loss against the planned position,
// and emits a center/scale delta that steers the next planning step.

#include <cstddef>
#include <vector>

#include "qtr/backends.hpp"
#include "qtr/core.hpp"

namespace qtr {

struct AlignmentResult {
  std::vector<double> scores;        // cosine per bin
  std::vector<double> distribution;  // softmax(scores)
  double bin_width_s = 0.0;
};

struct RefinementDelta {
  double suggested_center_s = 0.0;
  double scale = 1.0;              // in [0.25, 1.0]
  double loss_contribution = 0.0;  // this episode's unnormalized loss term
};

void to_json(json& j, const AlignmentResult& v);
void from_json(const json& j, AlignmentResult& v);
void to_json(json& j, const RefinementDelta& v);
void from_json(const json& j, RefinementDelta& v);

// Throws on zero vectors or mismatched dimensions.
double cosine_similarity(const Vec& a, const Vec& b);

// Softmax with the max subtracted before exponentiation.
std::vector<double> stable_softmax(const std::vector<double>& scores);

struct TimelineBins {
  double bin_width_s = 0.0;
  double duration_s = 0.0;
  std::vector<Vec> features;  // mean embedding of 3 probes per bin

  std::size_t count() const { return features.size(); }
  std::size_t bin_of(double time_s) const;
  double center_of(std::size_t bin) const;
};

TimelineBins build_timeline_bins(VisionPort& vision,
                                 const VideoDescriptor& video,
                                 double bin_width_s);

AlignmentResult alignment_distribution(const Vec& episode_embedding,
                                       const std::vector<Vec>& bin_features,
                                       double bin_width_s);

// (1/T) sum of per-episode ||P_t - onehot(planned_bins[t])||_2.
double tcr_loss(const std::vector<std::vector<double>>& distributions,
                const std::vector<std::size_t>& planned_bins);

struct GradientTerm {
  Vec values;
  bool degenerate = false;  // zero residual: gradient reported as zeros
};

std::vector<GradientTerm> tcr_loss_gradient(
    const std::vector<std::vector<double>>& distributions,
    const std::vector<std::size_t>& planned_bins);

std::size_t argmax_bin(const std::vector<double>& distribution);

RefinementDelta make_refinement_delta(const AlignmentResult& alignment,
                                      const TemporalInterval& planned,
                                      const VideoDescriptor& video);

}  // namespace qtr
