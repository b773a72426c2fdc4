#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qtr/memory.hpp"
#include "support.hpp"

using namespace qtr;

namespace {

Finding make_finding(double a, double b, const std::string& summary,
                     Vec embedding = {1.0, 0.0},
                     const std::string& reason = "") {
  Finding f;
  f.interval = {a, b};
  f.summary = summary;
  f.embedding = std::move(embedding);
  f.reason_text = reason;
  return f;
}

bool has_edge(const EventGraph& g, int from, int to, Relation rel) {
  for (const auto& e : g.edges)
    if (e.from == from && e.to == to && e.relation == rel) return true;
  return false;
}

// The structural rules every update must preserve.
void check_temporal_invariants(const EventGraph& g) {
  for (const auto& e : g.edges) {
    const auto* from = g.find(e.from);
    const auto* to = g.find(e.to);
    REQUIRE(from != nullptr);
    REQUIRE(to != nullptr);
    CHECK(e.confidence >= 0.0);
    CHECK(e.confidence <= 1.0);
    switch (e.relation) {
      case Relation::kBefore:
        CHECK(from->anchor.end_s <= to->anchor.start_s);
        break;
      case Relation::kAfter:
        CHECK(to->anchor.end_s <= from->anchor.start_s);
        break;
      case Relation::kOverlaps:
        CHECK(intersection_length(from->anchor, to->anchor) > 0.0);
        break;
      case Relation::kCausal:
        break;
    }
  }
  // at most one edge per ordered (from, to, relation) triple
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    for (std::size_t j = i + 1; j < g.edges.size(); ++j) {
      const auto& a = g.edges[i];
      const auto& b = g.edges[j];
      CHECK((a.from != b.from || a.to != b.to || a.relation != b.relation));
    }
  for (const auto& n : g.nodes) CHECK(n.support_count >= 1);
}

}  // namespace

TEST_CASE("first insertion creates a lone node") {
  EventGraph g;
  const int id = update_graph(g, make_finding(240.0, 380.0, "cat rescue"));
  CHECK(g.nodes.size() == 1);
  CHECK(g.edges.empty());
  CHECK(g.iteration == 1);
  CHECK(g.find(id)->anchor == TemporalInterval{240.0, 380.0});
  CHECK(g.find(id)->support_count == 1);
}

TEST_CASE("touching anchors produce before/after edges") {
  EventGraph g;
  const int n1 = update_graph(g, make_finding(80.0, 240.0, "dog narrative"));
  const int n2 = update_graph(g, make_finding(240.0, 380.0, "cat rescue"));
  CHECK(g.nodes.size() == 2);
  CHECK(has_edge(g, n1, n2, Relation::kBefore));  // 240 <= 240
  CHECK(has_edge(g, n2, n1, Relation::kAfter));
  CHECK_FALSE(has_edge(g, n1, n2, Relation::kOverlaps));
  check_temporal_invariants(g);
}

TEST_CASE("overlapping finding merges into the existing node") {
  EventGraph g;
  update_graph(g, make_finding(100.0, 200.0, "first view", {1.0, 0.0}));
  // overlap 50 / shorter 100 = 0.5 >= 0.3 -> merge
  const int id =
      update_graph(g, make_finding(150.0, 250.0, "second view", {0.0, 1.0}));
  REQUIRE(g.nodes.size() == 1);
  const auto& node = *g.find(id);
  CHECK(node.anchor == TemporalInterval{100.0, 250.0});
  CHECK(node.support_count == 2);
  CHECK(node.summary == "first view; second view");
  // support-weighted mean embedding
  CHECK(node.embedding[0] == doctest::Approx(0.5));
  CHECK(node.embedding[1] == doctest::Approx(0.5));
}

TEST_CASE("sub-threshold overlap inserts a separate overlapping node") {
  EventGraph g;
  const int n1 = update_graph(g, make_finding(0.0, 100.0, "long scene"));
  // overlap 20 / shorter 80 = 0.25 < 0.3 -> new node
  const int n2 = update_graph(g, make_finding(80.0, 160.0, "tail scene"));
  CHECK(g.nodes.size() == 2);
  CHECK(has_edge(g, n1, n2, Relation::kOverlaps));
  CHECK(has_edge(g, n2, n1, Relation::kOverlaps));
  check_temporal_invariants(g);
}

TEST_CASE("merge idempotence") {
  EventGraph once, twice;
  const auto f = make_finding(100.0, 200.0, "same view");
  update_graph(once, f);
  update_graph(twice, f);
  update_graph(twice, f);
  REQUIRE(once.nodes.size() == 1);
  REQUIRE(twice.nodes.size() == 1);
  CHECK(twice.nodes[0].support_count == 2);
  CHECK(twice.nodes[0].anchor == once.nodes[0].anchor);
  CHECK(twice.nodes[0].summary == once.nodes[0].summary);
  CHECK(twice.edges.size() == once.edges.size());
}

TEST_CASE("causal edges come from reason text quoting a prior summary") {
  EventGraph g;
  const int cause = update_graph(g, make_finding(10.0, 40.0, "a dog barks"));
  const int effect = update_graph(
      g, make_finding(300.0, 360.0, "the cat bolts", {1.0, 0.0},
                      "The cat bolts because a dog barks."));
  CHECK(has_edge(g, cause, effect, Relation::kCausal));
  // causal confidence starts at 0.5 (then reweighted by a zero-loss delta)
  for (const auto& e : g.edges)
    if (e.relation == Relation::kCausal) CHECK(e.confidence ==
                                               doctest::Approx(0.5));

  // a marker without a quoted summary creates nothing
  EventGraph h;
  update_graph(h, make_finding(10.0, 40.0, "a dog barks"));
  update_graph(h, make_finding(300.0, 360.0, "the cat bolts", {1.0, 0.0},
                               "because somebody sneezed"));
  for (const auto& e : h.edges) CHECK(e.relation != Relation::kCausal);
}

TEST_CASE("lossy deltas down-weight incident edge confidences") {
  EventGraph g;
  update_graph(g, make_finding(0.0, 50.0, "early"));
  RefinementDelta noisy;
  noisy.loss_contribution = std::sqrt(2.0);  // w clamps to 0.25
  update_graph(g, make_finding(100.0, 150.0, "late"), noisy);
  REQUIRE(!g.edges.empty());
  for (const auto& e : g.edges) CHECK(e.confidence == doctest::Approx(0.25));

  // a clean delta leaves confidences at 1
  EventGraph h;
  update_graph(h, make_finding(0.0, 50.0, "early"));
  update_graph(h, make_finding(100.0, 150.0, "late"));
  for (const auto& e : h.edges) CHECK(e.confidence == doctest::Approx(1.0));
}

TEST_CASE("retrieve_context ranks by cosine with one propagation round") {
  EventGraph g;
  update_graph(g, make_finding(0.0, 50.0, "A", {1.0, 0.0, 0.0}));
  update_graph(g, make_finding(100.0, 150.0, "B", {0.0, 1.0, 0.0}));

  const auto top = retrieve_context(g, {1.0, 0.0, 0.0}, 1, 0.0);
  REQUIRE(top.size() == 1);
  CHECK(top[0]->summary == "A");

  // single node wins regardless of embedding
  EventGraph solo;
  update_graph(solo, make_finding(5.0, 15.0, "only", {0.0, 0.0, 1.0}));
  const auto got = retrieve_context(solo, {1.0, 0.0, 0.0}, 3);
  REQUIRE(got.size() == 1);
  CHECK(got[0]->summary == "only");

  CHECK(retrieve_context(EventGraph{}, {1.0, 0.0, 0.0}, 2).empty());
  CHECK_THROWS_AS(retrieve_context(g, {1.0, 0.0, 0.0}, 0), QtrError);
}

TEST_CASE("propagation lifts the neighbour of a matching node") {
  // A at (0,50) linked before B at (100,150); C at (300,350) disconnected
  // but with B's embedding. With lambda, B outranks C; with lambda=0 the
  // earlier-anchored twin wins the tie instead.
  EventGraph g;
  update_graph(g, make_finding(0.0, 50.0, "A", {1.0, 0.0, 0.0}));
  update_graph(g, make_finding(100.0, 150.0, "B", {0.0, 1.0, 0.0}));
  EventNode c;
  c.id = g.next_id++;
  c.anchor = {300.0, 350.0};
  c.summary = "C";
  c.embedding = {0.0, 1.0, 0.0};
  g.nodes.push_back(c);

  const auto with = retrieve_context(g, {1.0, 0.0, 0.0}, 2, 0.5);
  REQUIRE(with.size() == 2);
  CHECK(with[0]->summary == "A");
  CHECK(with[1]->summary == "B");

  const auto plain = retrieve_context(g, {1.0, 0.0, 0.0}, 3, 0.0);
  REQUIRE(plain.size() == 3);
  CHECK(plain[0]->summary == "A");
  CHECK(plain[1]->summary == "B");  // tie with C broken by earlier anchor
  CHECK(plain[2]->summary == "C");
}

TEST_CASE("retrieve_context with lambda zero is plain cosine top-k") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EventGraph g;
  for (int i = 0; i < 8; ++i) {
    Vec e{unit(rng), unit(rng), unit(rng)};
    update_graph(g, make_finding(i * 40.0, i * 40.0 + 30.0,
                                 "n" + std::to_string(i), e));
  }
  const Vec q{unit(rng), unit(rng), unit(rng)};
  const auto got = retrieve_context(g, q, 3, 0.0);

  auto cosine = [&](const EventNode& n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      dot += n.embedding[d] * q[d];
      na += n.embedding[d] * n.embedding[d];
      nb += q[d] * q[d];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  std::vector<double> scores;
  for (const auto& n : g.nodes) scores.push_back(cosine(n));
  std::sort(scores.rbegin(), scores.rend());
  REQUIRE(got.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(cosine(*got[i]) == doctest::Approx(scores[i]));
}

TEST_CASE("digest renders chronologically and truncates whole entries") {
  EventGraph g;
  CHECK(render_memory_digest(g, 600) == "");

  update_graph(g, make_finding(80.0, 240.0, "dog narrative"));
  CHECK(render_memory_digest(g, 600) ==
        "[80–240] dog narrative (support 1)");

  update_graph(g, make_finding(300.0, 400.0, "cat rescue"));
  const auto both = render_memory_digest(g, 600);
  CHECK(both == "[80–240] dog narrative (support 1)\n"
                "[300–400] cat rescue (support 1)");

  // a small cap drops the trailing entry, never splits one
  const auto tight = render_memory_digest(g, 40);
  CHECK(tight == "[80–240] dog narrative (support 1)");
  CHECK(render_memory_digest(g, 5) == "");
}

TEST_CASE("graph serialization round-trips losslessly") {
  EventGraph g;
  update_graph(g, make_finding(80.0, 240.0, "dog narrative", {1.0, 0.0}));
  update_graph(g, make_finding(240.0, 380.0, "cat rescue", {0.0, 1.0},
                               "the cat flees because dog narrative"));
  update_graph(g, make_finding(250.0, 390.0, "vet visit", {0.5, 0.5}));

  const json j = g;
  const auto back = j.get<EventGraph>();
  CHECK(json(back) == j);
  CHECK(back.nodes.size() == g.nodes.size());
  CHECK(back.edges.size() == g.edges.size());
  CHECK(back.iteration == g.iteration);
  CHECK(back.next_id == g.next_id);

  // canonical form is order independent
  auto shuffled = g;
  std::reverse(shuffled.nodes.begin(), shuffled.nodes.end());
  std::reverse(shuffled.edges.begin(), shuffled.edges.end());
  CHECK(json(shuffled) == j);
}

TEST_CASE("random update sequences preserve the temporal invariants") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> pos(0.0, 560.0);
  std::uniform_real_distribution<double> len(5.0, 60.0);
  std::uniform_int_distribution<int> reason_pick(0, 3);

  for (int seq = 0; seq < 60; ++seq) {
    EventGraph g;
    std::vector<std::string> summaries;
    for (int step = 0; step < 12; ++step) {
      const double a = pos(rng);
      const double b = a + len(rng);
      std::string reason;
      if (!summaries.empty() && reason_pick(rng) == 0)
        reason = "linked because " + summaries[rng() % summaries.size()];
      RefinementDelta delta;
      delta.loss_contribution =
          std::uniform_real_distribution<double>(0.0, std::sqrt(2.0))(rng);
      const auto summary = "s" + std::to_string(seq) + "-" +
                           std::to_string(step);
      update_graph(g, make_finding(a, b, summary, {1.0, 0.5}, reason), delta);
      summaries.push_back(summary);
      check_temporal_invariants(g);
    }
    // round trip after the whole sequence
    CHECK(json(json(g).get<EventGraph>()) == json(g));
  }
}
