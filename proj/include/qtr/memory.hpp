#pragma once
// Graph-based temporal memory: event hypotheses anchored to intervals, typed
// temporal/causal edges with confidences, merge-on-overlap updates, and
// retrieval with one round of confidence-weighted propagation.

#include <cstddef>
#include <string>
#include <vector>

#include "qtr/core.hpp"
#include "qtr/tcr.hpp"

namespace qtr {

enum class Relation { kBefore, kAfter, kOverlaps, kCausal };

std::string to_string(Relation r);
Relation relation_from_string(const std::string& s);

struct EventNode {
  int id = 0;
  TemporalInterval anchor{0.0, 0.0};
  std::string summary;
  Vec embedding;
  int support_count = 1;
  int created_iteration = 1;
};

struct EventEdge {
  int from = 0;
  int to = 0;
  Relation relation = Relation::kBefore;
  double confidence = 1.0;
};

struct EventGraph {
  std::vector<EventNode> nodes;
  std::vector<EventEdge> edges;
  int iteration = 0;
  int next_id = 1;

  const EventNode* find(int id) const;
};

void to_json(json& j, const EventNode& v);
void from_json(const json& j, EventNode& v);
void to_json(json& j, const EventEdge& v);
void from_json(const json& j, EventEdge& v);
void to_json(json& j, const EventGraph& v);
void from_json(const json& j, EventGraph& v);

// One grounded-and-answered episode, as the memory sees it.
struct Finding {
  TemporalInterval interval{0.0, 0.0};
  std::string summary;
  Vec embedding;
  std::string reason_text;  // scanned for causal markers
};

// intersection / shorter length at or above this merges into an existing node
constexpr double kMergeOverlapThreshold = 0.3;
constexpr double kPropagationLambda = 0.5;

// Merges or inserts the finding, recomputes temporal edges for the touched
// node, derives causal edges from the reason text, and reweights incident
// edge confidences by clamp(1 - delta.loss_contribution/sqrt(2), 0.25, 1).
// Returns the touched node's id.
int update_graph(EventGraph& graph, const Finding& finding,
                 const RefinementDelta& delta = {});

std::vector<const EventNode*> retrieve_context(const EventGraph& graph,
                                               const Vec& query_embedding,
                                               int k,
                                               double lambda = kPropagationLambda);

// Chronological "[s-e] summary (support n)" lines, truncated at an entry
// boundary. Pass the retrieval result to digest only selected nodes.
std::string render_memory_digest(const EventGraph& graph,
                                 std::size_t max_chars);
std::string render_memory_digest(const std::vector<const EventNode*>& nodes,
                                 std::size_t max_chars);

}  // namespace qtr
