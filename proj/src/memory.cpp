#include "qtr/memory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace qtr {

std::string to_string(Relation r) {
  switch (r) {
    case Relation::kBefore: return "before";
    case Relation::kAfter: return "after";
    case Relation::kOverlaps: return "overlaps";
    case Relation::kCausal: return "causal";
  }
  return "before";
}

Relation relation_from_string(const std::string& s) {
  if (s == "before") return Relation::kBefore;
  if (s == "after") return Relation::kAfter;
  if (s == "overlaps") return Relation::kOverlaps;
  if (s == "causal") return Relation::kCausal;
  throw QtrError("unknown relation '" + s + "'");
}

const EventNode* EventGraph::find(int id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

void to_json(json& j, const EventNode& v) {
  j = json{{"id", v.id},
           {"anchor", v.anchor},
           {"summary", v.summary},
           {"embedding", v.embedding},
           {"support_count", v.support_count},
           {"created_iteration", v.created_iteration}};
}

void from_json(const json& j, EventNode& v) {
  v.id = j.at("id").get<int>();
  v.anchor = j.at("anchor").get<TemporalInterval>();
  v.summary = j.at("summary").get<std::string>();
  v.embedding = j.at("embedding").get<Vec>();
  v.support_count = j.at("support_count").get<int>();
  v.created_iteration = j.at("created_iteration").get<int>();
}

void to_json(json& j, const EventEdge& v) {
  j = json{{"from", v.from},
           {"to", v.to},
           {"relation", to_string(v.relation)},
           {"confidence", v.confidence}};
}

void from_json(const json& j, EventEdge& v) {
  v.from = j.at("from").get<int>();
  v.to = j.at("to").get<int>();
  v.relation = relation_from_string(j.at("relation").get<std::string>());
  v.confidence = j.at("confidence").get<double>();
}

namespace {

bool edge_less(const EventEdge& a, const EventEdge& b) {
  return std::tuple(a.from, a.to, static_cast<int>(a.relation)) <
         std::tuple(b.from, b.to, static_cast<int>(b.relation));
}

}  // namespace

void to_json(json& j, const EventGraph& v) {
  auto nodes = v.nodes;
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  auto edges = v.edges;
  std::sort(edges.begin(), edges.end(), edge_less);
  j = json{{"nodes", nodes},
           {"edges", edges},
           {"iteration", v.iteration},
           {"next_id", v.next_id}};
}

void from_json(const json& j, EventGraph& v) {
  v.nodes = j.value("nodes", std::vector<EventNode>{});
  v.edges = j.value("edges", std::vector<EventEdge>{});
  v.iteration = j.value("iteration", 0);
  v.next_id = j.value("next_id", 1);
  std::sort(v.nodes.begin(), v.nodes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(v.edges.begin(), v.edges.end(), edge_less);
}

namespace {

double overlap_fraction(const TemporalInterval& a, const TemporalInterval& b) {
  const double shorter = std::min(a.length(), b.length());
  if (shorter <= 0.0) return 0.0;
  return intersection_length(a, b) / shorter;
}

double safe_cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool has_causal_marker(const std::string& text) {
  for (const char* marker : {"because", "so that", "in order to"}) {
    if (text.find(marker) != std::string::npos) return true;
  }
  return false;
}

void upsert_edge(EventGraph& graph, int from, int to, Relation rel,
                 double confidence) {
  for (auto& e : graph.edges) {
    if (e.from == from && e.to == to && e.relation == rel) return;
  }
  graph.edges.push_back(EventEdge{from, to, rel, confidence});
}

}  // namespace

int update_graph(EventGraph& graph, const Finding& finding,
                 const RefinementDelta& delta) {
  graph.iteration += 1;

  EventNode* touched = nullptr;
  double best_fraction = 0.0;
  for (auto& node : graph.nodes) {
    const double f = overlap_fraction(node.anchor, finding.interval);
    if (f >= kMergeOverlapThreshold && f > best_fraction) {
      best_fraction = f;
      touched = &node;
    }
  }

  if (touched) {
    touched->anchor.start_s =
        std::min(touched->anchor.start_s, finding.interval.start_s);
    touched->anchor.end_s =
        std::max(touched->anchor.end_s, finding.interval.end_s);
    if (!finding.summary.empty() &&
        touched->summary.find(finding.summary) == std::string::npos) {
      if (!touched->summary.empty()) touched->summary += "; ";
      touched->summary += finding.summary;
    }
    const auto n = static_cast<double>(touched->support_count);
    if (touched->embedding.size() == finding.embedding.size()) {
      for (std::size_t d = 0; d < touched->embedding.size(); ++d)
        touched->embedding[d] =
            (touched->embedding[d] * n + finding.embedding[d]) / (n + 1.0);
    }
    touched->support_count += 1;
  } else {
    EventNode node;
    node.id = graph.next_id++;
    node.anchor = finding.interval;
    node.summary = finding.summary;
    node.embedding = finding.embedding;
    node.support_count = 1;
    node.created_iteration = graph.iteration;
    graph.nodes.push_back(std::move(node));
    touched = &graph.nodes.back();
  }
  const int touched_id = touched->id;

  // Temporal edges for the touched node are recomputed from anchors;
  // confidences of surviving edges carry over.
  std::map<std::tuple<int, int, int>, double> kept;
  std::vector<EventEdge> rebuilt;
  rebuilt.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    const bool incident = e.from == touched_id || e.to == touched_id;
    if (incident && e.relation != Relation::kCausal) {
      kept[{e.from, e.to, static_cast<int>(e.relation)}] = e.confidence;
      continue;
    }
    rebuilt.push_back(e);
  }
  graph.edges = std::move(rebuilt);

  for (const auto& other : graph.nodes) {
    if (other.id == touched_id) continue;
    auto link = [&](int from, int to, Relation rel) {
      const auto it = kept.find({from, to, static_cast<int>(rel)});
      upsert_edge(graph, from, to, rel,
                  it != kept.end() ? it->second : 1.0);
    };
    if (touched->anchor.end_s <= other.anchor.start_s) {
      link(touched_id, other.id, Relation::kBefore);
      link(other.id, touched_id, Relation::kAfter);
    } else if (other.anchor.end_s <= touched->anchor.start_s) {
      link(other.id, touched_id, Relation::kBefore);
      link(touched_id, other.id, Relation::kAfter);
    } else if (intersection_length(touched->anchor, other.anchor) > 0.0) {
      link(touched_id, other.id, Relation::kOverlaps);
      link(other.id, touched_id, Relation::kOverlaps);
    }
  }

  if (has_causal_marker(finding.reason_text)) {
    for (const auto& other : graph.nodes) {
      if (other.id == touched_id || other.summary.empty()) continue;
      // The reason must quote the other node's summary (or one entry of it).
      std::size_t start = 0;
      bool mentioned = false;
      while (start < other.summary.size() && !mentioned) {
        auto end = other.summary.find("; ", start);
        if (end == std::string::npos) end = other.summary.size();
        const auto part = other.summary.substr(start, end - start);
        mentioned = !part.empty() &&
                    finding.reason_text.find(part) != std::string::npos;
        start = end + 2;
      }
      if (mentioned)
        upsert_edge(graph, other.id, touched_id, Relation::kCausal, 0.5);
    }
  }

  const double w =
      std::clamp(1.0 - delta.loss_contribution / std::sqrt(2.0), 0.25, 1.0);
  for (auto& e : graph.edges) {
    if (e.from == touched_id || e.to == touched_id)
      e.confidence = std::clamp(e.confidence * w, 0.0, 1.0);
  }
  return touched_id;
}

std::vector<const EventNode*> retrieve_context(const EventGraph& graph,
                                               const Vec& query_embedding,
                                               int k, double lambda) {
  if (k < 1) throw QtrError("retrieval k must be at least 1");
  if (graph.nodes.empty()) return {};

  std::map<int, double> base;
  for (const auto& n : graph.nodes)
    base[n.id] = safe_cosine(n.embedding, query_embedding);
  std::map<int, double> score = base;
  for (const auto& e : graph.edges)
    score[e.to] += lambda * e.confidence * base[e.from];

  std::vector<const EventNode*> ranked;
  ranked.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) ranked.push_back(&n);
  std::sort(ranked.begin(), ranked.end(), [&](const auto* a, const auto* b) {
    if (score[a->id] != score[b->id]) return score[a->id] > score[b->id];
    if (a->anchor.start_s != b->anchor.start_s)
      return a->anchor.start_s < b->anchor.start_s;
    return a->id < b->id;
  });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(k);
  return ranked;
}

namespace {

std::string digest_line(const EventNode& n) {
  return "[" + format_seconds(std::llround(n.anchor.start_s)) + "–" +
         format_seconds(std::llround(n.anchor.end_s)) + "] " + n.summary +
         " (support " + std::to_string(n.support_count) + ")";
}

}  // namespace

std::string render_memory_digest(const std::vector<const EventNode*>& nodes,
                                 std::size_t max_chars) {
  auto ordered = nodes;
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    if (a->anchor.start_s != b->anchor.start_s)
      return a->anchor.start_s < b->anchor.start_s;
    return a->id < b->id;
  });
  std::string out;
  for (const auto* n : ordered) {
    const auto line = digest_line(*n);
    const auto added = out.empty() ? line.size() : line.size() + 1;
    if (out.size() + added > max_chars) break;
    if (!out.empty()) out += "\n";
    out += line;
  }
  return out;
}

std::string render_memory_digest(const EventGraph& graph,
                                 std::size_t max_chars) {
  std::vector<const EventNode*> all;
  all.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) all.push_back(&n);
  return render_memory_digest(all, max_chars);
}

}  // namespace qtr
