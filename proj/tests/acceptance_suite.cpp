// Acceptance gate: each criterion prints exactly one [PASS]/[FAIL] line and
// the process exits with the number of failed criteria. Criteria carrying a
// runtime limit fail when they exceed it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "qtr/controller.hpp"
#include "qtr/harness.hpp"
#include "qtr/memory.hpp"
#include "qtr/planner.hpp"
#include "qtr/tcr.hpp"
#include "support.hpp"

using namespace qtr;

namespace {

std::shared_ptr<const ScriptedWorld> borrow(const ScriptedWorld& world) {
  return {&world, [](const ScriptedWorld*) {}};
}

std::string format_count(double v, int places = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(places) << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// 1. Planner constraint conformance under adversarial scripted policies.

std::string criterion_planner_fuzz() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());
  const PlannerPolicy policies[] = {
      PlannerPolicy::kWholeVideo,     PlannerPolicy::kGarbage,
      PlannerPolicy::kOverlong,       PlannerPolicy::kInverted,
      PlannerPolicy::kRepeatReviewed, PlannerPolicy::kAdversarialMix};
  const BudgetConfig budget;
  std::mt19937_64 rng(2024);
  int accepted = 0;

  for (int round = 0; round < 1000; ++round) {
    const auto& q = suite.questions[round % suite.questions.size()];
    const auto& world = suite.world_for(q.video_id);
    const double duration = q.query.video.duration_s;
    ScriptedLLM llm(borrow(world), policies[round % 6],
                    static_cast<std::uint64_t>(round) + 1000);

    PlannerState state;
    state.query = q.query;
    std::uniform_int_distribution<int> window_count(0, 3);
    const int n = window_count(rng);
    for (int i = 0; i < n; ++i) {
      std::uniform_real_distribution<double> start_at(0.0, duration * 0.8);
      std::uniform_real_distribution<double> length(5.0, 180.0);
      const double s = start_at(rng);
      state.reviewed.push_back({s, std::min(duration, s + length(rng))});
      state.irrelevant.push_back(false);
    }

    const auto violation = [&](const TemporalInterval& iv) -> std::string {
      if (!(iv.end_s > iv.start_s)) return "inverted";
      if (iv.length() > budget.max_segment_s) return "exceeds the 180s cap";
      if (iv.start_s < 0.0 || iv.end_s > duration) return "out of range";
      if (iv.start_s == 0.0 && iv.end_s == duration) return "whole video";
      for (const auto& r : state.reviewed)
        if (intersection_length(iv, r) > kReviewedOverlapToleranceS)
          return "re-reviews a covered window";
      return "";
    };

    const auto proposal = propose_next_segment(state, q.query.video, budget, llm);
    if (proposal.ok) {
      ++accepted;
      const auto why = violation(proposal.interval);
      if (!why.empty())
        return "round " + std::to_string(round) + ": accepted interval " + why;
    } else if (const auto fb =
                   fallback_window(q.query.video, state.reviewed, budget)) {
      const auto why = violation(*fb);
      if (!why.empty())
        return "round " + std::to_string(round) + ": fallback window " + why;
    }
  }
  if (accepted == 0) return "no proposal was ever accepted; fuzz is vacuous";
  return "";
}

// ---------------------------------------------------------------------------
// 2. TCR math: softmax normalization, exact loss extremes, gradient vs FD.

std::vector<double> fd_gradient(const std::vector<double>& p,
                                std::size_t planned, double T, double h) {
  std::vector<double> grad(p.size(), 0.0);
  const auto term = [&](const std::vector<double>& q) {
    double sq = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double r = q[i] - (i == planned ? 1.0 : 0.0);
      sq += r * r;
    }
    return std::sqrt(sq) / T;
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto hi = p, lo = p;
    hi[i] += h;
    lo[i] -= h;
    grad[i] = (term(hi) - term(lo)) / (2.0 * h);
  }
  return grad;
}

std::string criterion_tcr_math() {
  std::mt19937_64 rng(4242);

  for (int round = 0; round < 1000; ++round) {
    std::vector<double> scores;
    if (round == 0) {
      scores = {1e4, -1e4};
    } else if (round == 1) {
      scores = {-1e4, -1e4, -1e4};
    } else if (round == 2) {
      scores = {1e4, 1e4, 0.0};
    } else {
      scores.resize(2 + rng() % 31);
      std::uniform_real_distribution<double> unit(-10.0, 10.0);
      for (auto& s : scores) s = unit(rng);
      if (round % 10 == 3) scores[rng() % scores.size()] = 1e4;
      if (round % 10 == 7) scores[rng() % scores.size()] = -1e4;
    }
    const auto p = stable_softmax(scores);
    double sum = 0.0;
    for (const double v : p) {
      if (!std::isfinite(v) || v < 0.0)
        return "softmax emitted a non-finite or negative mass";
      sum += v;
    }
    if (std::abs(sum - 1.0) >= 1e-9)
      return "softmax sum drifted to " + format_count(sum, 12) + " on round " +
             std::to_string(round);
  }

  if (tcr_loss({{0.0, 1.0, 0.0}}, {1}) != 0.0)
    return "loss at perfect alignment is not exactly 0";
  if (tcr_loss({{1.0, 0.0}}, {1}) != std::sqrt(2.0))
    return "loss at maximal misalignment is not exactly sqrt(2)";

  for (int round = 0; round < 100; ++round) {
    const std::size_t bins = 2 + rng() % 15;  // B in [2, 16]
    const std::size_t T = 1 + rng() % 5;      // T in [1, 5]
    std::vector<std::vector<double>> dists;
    std::vector<std::size_t> planned;
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> scores(bins);
      for (auto& s : scores) s = unit(rng);
      dists.push_back(stable_softmax(scores));
      planned.push_back(rng() % bins);
    }
    const auto grads = tcr_loss_gradient(dists, planned);
    for (std::size_t t = 0; t < T; ++t) {
      if (grads[t].degenerate) continue;
      const auto fd =
          fd_gradient(dists[t], planned[t], static_cast<double>(T), 1e-6);
      for (std::size_t i = 0; i < fd.size(); ++i) {
        const double scale = std::max(1.0, std::abs(fd[i]));
        if (std::abs(grads[t].values[i] - fd[i]) / scale >= 1e-4)
          return "gradient/FD mismatch on round " + std::to_string(round) +
                 " episode " + std::to_string(t) + " bin " + std::to_string(i);
      }
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// 3. Engine interval agreement with the brute-force oracle, plus frame
//    economy on long videos.

std::string criterion_oracle_agreement() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());
  SessionConfig cfg;
  const auto report = run_suite(suite, cfg, 0);

  int found = 0;
  int hits = 0;
  for (std::size_t i = 0; i < suite.questions.size(); ++i) {
    const auto& q = suite.questions[i];
    const auto& out = report.per_question[i];
    if (!out.error.empty())
      return "session failed on " + q.id + ": " + out.error;

    const auto oracle = brute_force_oracle(suite.world_for(q.video_id), q,
                                           cfg.budget, cfg.budget_k);
    if (oracle.found) {
      ++found;
      if (overlaps(out.answer_interval, oracle.answer_interval)) ++hits;
    }
    if (q.query.video.duration_s >= 1200.0 &&
        out.frames > oracle.frames_scanned)
      return q.id + ": engine used " + std::to_string(out.frames) +
             " frames, oracle used " + std::to_string(oracle.frames_scanned);
  }
  if (found == 0) return "oracle located no questions; agreement is vacuous";
  if (static_cast<double>(hits) < 0.95 * static_cast<double>(found))
    return "interval overlap on " + std::to_string(hits) + "/" +
           std::to_string(found) + " oracle-found questions (< 95%)";
  return "";
}

// ---------------------------------------------------------------------------
// 4. Duration scaling: frame fraction non-increasing, generous 3000s bound.

std::string criterion_duration_scaling() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());
  const std::vector<double> durations = {30.0, 300.0, 1200.0, 3000.0};
  const auto fractions = duration_sweep(suite, durations, SessionConfig{});

  for (std::size_t i = 1; i < durations.size(); ++i) {
    const double prev = fractions.at(durations[i - 1]);
    const double cur = fractions.at(durations[i]);
    if (cur > prev)
      return "fraction grew from " + format_count(prev) + " at " +
             format_seconds(durations[i - 1]) + "s to " + format_count(cur) +
             " at " + format_seconds(durations[i]) + "s";
  }
  if (fractions.at(3000.0) > 0.25)
    return "fraction(3000s) = " + format_count(fractions.at(3000.0)) +
           " exceeds 0.25";
  return "";
}

// ---------------------------------------------------------------------------
// 5. Ablation ordering over 10 seeds.

std::string criterion_ablation_ordering() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());
  const auto rows = ablation_table(suite, SessionConfig{}, 10, 0);
  if (rows.size() != 4) return "expected 4 ablation rows";

  const char* expected[] = {"full", "no-tm", "no-tcr", "no-rtp"};
  for (std::size_t i = 0; i < 4; ++i)
    if (rows[i].name != expected[i])
      return "row " + std::to_string(i) + " is '" + rows[i].name + "'";
  for (std::size_t i = 1; i < 4; ++i)
    if (rows[i].mean_accuracy > rows[i - 1].mean_accuracy)
      return rows[i].name + " (" + format_count(rows[i].mean_accuracy) +
             ") outscored " + rows[i - 1].name + " (" +
             format_count(rows[i - 1].mean_accuracy) + ")";
  return "";
}

// ---------------------------------------------------------------------------
// 6. Memory-graph model test: invariants after every update, lossless
//    serialization, merge idempotence.

std::string graph_invariant_violation(const EventGraph& g) {
  for (const auto& e : g.edges) {
    const auto* from = g.find(e.from);
    const auto* to = g.find(e.to);
    if (!from || !to) return "edge references a missing node";
    if (e.confidence < 0.0 || e.confidence > 1.0)
      return "edge confidence outside [0, 1]";
    switch (e.relation) {
      case Relation::kBefore:
        if (!(from->anchor.end_s <= to->anchor.start_s))
          return "before-edge endpoints out of order";
        break;
      case Relation::kAfter:
        if (!(to->anchor.end_s <= from->anchor.start_s))
          return "after-edge endpoints out of order";
        break;
      case Relation::kOverlaps:
        if (!(intersection_length(from->anchor, to->anchor) > 0.0))
          return "overlaps-edge without anchor overlap";
        break;
      case Relation::kCausal:
        break;
    }
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& e : g.edges)
    if (!seen.insert({e.from, e.to, static_cast<int>(e.relation)}).second)
      return "duplicate (from, to, relation) edge";
  for (const auto& n : g.nodes)
    if (n.support_count < 1) return "node support below 1";
  return "";
}

std::string criterion_memory_model() {
  std::mt19937_64 rng(9001);
  std::uniform_real_distribution<double> pos(0.0, 560.0);
  std::uniform_real_distribution<double> len(5.0, 60.0);
  std::uniform_real_distribution<double> loss(0.0, std::sqrt(2.0));

  for (int seq = 0; seq < 500; ++seq) {
    EventGraph g;
    std::vector<std::string> summaries;
    const int steps = 6 + static_cast<int>(rng() % 10);
    for (int step = 0; step < steps; ++step) {
      Finding f;
      const double a = pos(rng);
      f.interval = {a, a + len(rng)};
      f.summary = "s" + std::to_string(seq) + "-" + std::to_string(step);
      f.embedding = {1.0, 0.5};
      if (!summaries.empty() && rng() % 4 == 0)
        f.reason_text = "linked because " + summaries[rng() % summaries.size()];
      RefinementDelta delta;
      delta.loss_contribution = loss(rng);
      update_graph(g, f, delta);
      summaries.push_back(f.summary);

      const auto why = graph_invariant_violation(g);
      if (!why.empty())
        return "sequence " + std::to_string(seq) + " step " +
               std::to_string(step) + ": " + why;
    }

    const json j = g;
    if (json(j.get<EventGraph>()) != j)
      return "sequence " + std::to_string(seq) + ": lossy round trip";

    // re-applying a finding must not change the structure
    Finding f;
    const double a = pos(rng);
    f.interval = {a, a + len(rng)};
    f.summary = "repeat-" + std::to_string(seq);
    f.embedding = {0.5, 1.0};
    auto once = g;
    update_graph(once, f);
    auto twice = once;
    update_graph(twice, f);
    if (twice.nodes.size() != once.nodes.size())
      return "sequence " + std::to_string(seq) + ": re-merge grew the graph";
    for (const auto& n : once.nodes) {
      const auto* m = twice.find(n.id);
      if (!m || !(m->anchor == n.anchor) || m->summary != n.summary)
        return "sequence " + std::to_string(seq) +
               ": re-merge moved a node anchor or summary";
    }
    auto triples = [](const EventGraph& graph) {
      std::set<std::tuple<int, int, int, double>> out;
      for (const auto& e : graph.edges)
        out.insert({e.from, e.to, static_cast<int>(e.relation), e.confidence});
      return out;
    };
    if (triples(once) != triples(twice))
      return "sequence " + std::to_string(seq) + ": re-merge altered edges";
  }
  return "";
}

// ---------------------------------------------------------------------------
// 7. Determinism and bit-for-bit replay.

std::string criterion_determinism_replay() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());

  std::vector<SuiteQuestion> picks;
  std::set<std::string> seen;
  for (const auto& q : suite.questions)
    if (seen.insert(q.video_id).second) picks.push_back(q);

  auto run_with = [&](const SuiteQuestion& q, const SessionConfig& cfg) {
    const auto& world = suite.world_for(q.video_id);
    ScriptedLLM llm(borrow(world));
    ScriptedVision vision(borrow(world));
    return run_session(q.query, cfg, llm, vision);
  };

  for (const auto& q : picks) {
    SessionConfig cfg;
    cfg.seed = 7;
    const auto first = run_with(q, cfg);
    const auto second = run_with(q, cfg);
    if (trace_hash(first.trace) != trace_hash(second.trace))
      return q.id + ": same-seed reruns hash differently";
    if (result_fingerprint(first) != result_fingerprint(second))
      return q.id + ": same-seed reruns differ";

    const auto replayed = replay_session(first.trace);
    if (result_fingerprint(replayed) != result_fingerprint(first))
      return q.id + ": replay diverged from the recorded result";
    if (trace_hash(replayed.trace) != trace_hash(first.trace))
      return q.id + ": replay trace hash diverged";
  }

  // the seeded random-window path must replay as well
  SessionConfig random_cfg;
  random_cfg.seed = 7;
  random_cfg.ablation = {"no-rtp"};
  random_cfg.budget.max_iterations = 3;
  const auto& q = picks.front();
  const auto first = run_with(q, random_cfg);
  const auto second = run_with(q, random_cfg);
  if (trace_hash(first.trace) != trace_hash(second.trace))
    return "no-rtp same-seed reruns hash differently";
  const auto replayed = replay_session(first.trace);
  if (result_fingerprint(replayed) != result_fingerprint(first))
    return "no-rtp replay diverged from the recorded result";
  return "";
}

// ---------------------------------------------------------------------------
// 8. Frame accounting: instrumented embed count == reported total frames.

std::string criterion_frame_accounting() {
  const auto suite = load_suite(qtrtest::shipped_suite_paths());
  const std::vector<std::set<std::string>> modes = {
      {}, {"no-tm"}, {"no-tcr"}, {"no-rtp"}};

  for (const auto& ablation : modes) {
    SessionConfig cfg;
    cfg.ablation = ablation;
    const auto report = run_suite(suite, cfg, 0);
    for (const auto& out : report.per_question) {
      if (!out.error.empty())
        return out.id + ": session failed: " + out.error;
      if (out.embed_calls != out.frames)
        return out.id + ": embed calls " + std::to_string(out.embed_calls) +
               " != reported frames " + std::to_string(out.frames);
      if (out.frames <= 0) return out.id + ": no frames accounted";
    }
  }
  return "";
}

struct Criterion {
  std::string name;
  double limit_s;  // 0 = no limit
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"planner constraint-conformance fuzz (1000 adversarial rounds)", 10.0,
       criterion_planner_fuzz},
      {"TCR math: softmax, loss extremes, gradient vs finite differences", 5.0,
       criterion_tcr_math},
      {"oracle agreement and long-video frame economy", 60.0,
       criterion_oracle_agreement},
      {"duration-scaling trend {30, 300, 1200, 3000}s", 0.0,
       criterion_duration_scaling},
      {"ablation ordering full >= no-tm >= no-tcr >= no-rtp over 10 seeds",
       300.0, criterion_ablation_ordering},
      {"memory-graph invariants, serialization, merge idempotence", 0.0,
       criterion_memory_model},
      {"determinism and bit-for-bit replay", 0.0,
       criterion_determinism_replay},
      {"frame accounting across every suite run", 0.0,
       criterion_frame_accounting},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (detail.empty() && c.limit_s > 0.0 && elapsed > c.limit_s)
      detail = "exceeded the " + format_count(c.limit_s, 0) + "s limit";

    std::ostringstream line;
    line << (detail.empty() ? "[PASS] " : "[FAIL] ") << (i + 1) << ". "
         << c.name << " (" << format_count(elapsed, 2) << "s)";
    if (!detail.empty()) line << ": " << detail;
    std::cout << line.str() << "\n";
    if (!detail.empty()) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size()
            << " criteria passed\n";
  return failed;
}
