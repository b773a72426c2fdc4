// Python surface: the main engine operations over JSON-string interfaces.
// Structured values cross the boundary as JSON text so the Python side needs
// no mirrored type definitions.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "qtr/controller.hpp"
#include "qtr/harness.hpp"
#include "qtr/version.hpp"

namespace py = pybind11;
using namespace qtr;

namespace {

SessionConfig config_from(const std::string& cfg_json) {
  if (cfg_json.empty()) return SessionConfig{};
  return json::parse(cfg_json).get<SessionConfig>();
}

const SuiteQuestion& question_or_throw(const ScriptedSuite& suite,
                                       const std::string& id) {
  for (const auto& q : suite.questions)
    if (q.id == id) return q;
  throw QtrError("unknown question id " + id);
}

std::string run_question(const std::string& world_doc_json,
                         const std::string& question_id,
                         const std::string& cfg_json) {
  const auto suite = load_world_document(json::parse(world_doc_json));
  suite.validate();
  const auto& q = question_or_throw(suite, question_id);
  const auto cfg = config_from(cfg_json);

  const auto world = std::make_shared<ScriptedWorld>(suite.worlds.front());
  ScriptedLLM llm(world, PlannerPolicy::kCompetent, cfg.seed);
  CountingVision vision(std::make_shared<ScriptedVision>(world));
  const auto result = run_session(q.query, cfg, llm, vision);

  json out{{"answer", result.final_answer.answer},
           {"confidence", result.final_answer.confidence.score},
           {"answer_interval", result.answer_interval},
           {"iterations", result.iterations_used},
           {"total_frames", result.total_frames},
           {"embed_calls", vision.embed_calls()},
           {"terminated_by", result.terminated_by},
           {"correct", grade_answer(result.final_answer.answer, q.gold_answer)},
           {"trace_hash", trace_hash(result.trace)},
           {"fingerprint", result_fingerprint(result)},
           {"trace_ndjson", trace_to_ndjson(result.trace)}};
  return out.dump();
}

std::string replay_trace(const std::string& trace_ndjson) {
  const auto trace = trace_from_ndjson(trace_ndjson);
  const auto result = replay_session(trace);
  json out{{"fingerprint", result_fingerprint(result)},
           {"trace_hash", trace_hash(result.trace)}};
  return out.dump();
}

std::string run_suite_files(const std::vector<std::string>& world_paths,
                            const std::string& cfg_json, int workers,
                            const std::string& trace_dir) {
  const auto suite = load_suite(world_paths);
  const auto report = run_suite(suite, config_from(cfg_json), workers,
                                trace_dir);
  return json(report).dump();
}

std::string oracle(const std::string& world_doc_json,
                   const std::string& question_id) {
  const auto suite = load_world_document(json::parse(world_doc_json));
  const auto& q = question_or_throw(suite, question_id);
  const auto r = brute_force_oracle(suite.worlds.front(), q);
  json out{{"found", r.found},
           {"answer_interval", r.answer_interval},
           {"frames_scanned", r.frames_scanned},
           {"best_score", r.best_score},
           {"threshold", r.threshold}};
  return out.dump();
}

std::string sweep_files(const std::vector<std::string>& world_paths,
                        const std::vector<double>& durations,
                        const std::string& cfg_json) {
  const auto suite = load_suite(world_paths);
  const auto fractions = duration_sweep(suite, durations, config_from(cfg_json));
  json out = json::object();
  for (const auto& [duration, fraction] : fractions)
    out[format_seconds(duration)] = fraction;
  return out.dump();
}

std::string ablate_files(const std::vector<std::string>& world_paths,
                         const std::string& cfg_json, int seeds, int workers) {
  const auto suite = load_suite(world_paths);
  const auto rows = ablation_table(suite, config_from(cfg_json), seeds, workers);
  json out = json::array();
  for (const auto& r : rows)
    out.push_back(json{{"name", r.name},
                       {"mean_accuracy", r.mean_accuracy},
                       {"mean_frames", r.mean_frames}});
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Iterative temporal planning engine for long-video QA";
  m.attr("__version__") = kEngineVersion;
  m.attr("ENGINE_NAME") = kEngineName;
  m.attr("TRACE_FORMAT") = kTraceFormatTag;

  m.def("run_question", &run_question, py::arg("world_doc_json"),
        py::arg("question_id"), py::arg("cfg_json") = "",
        py::call_guard<py::gil_scoped_release>(),
        "Run one suite question end to end; returns a JSON result string.");
  m.def("replay_trace", &replay_trace, py::arg("trace_ndjson"),
        py::call_guard<py::gil_scoped_release>(),
        "Re-execute a recorded trace; returns fingerprint and hash as JSON.");
  m.def("run_suite", &run_suite_files, py::arg("world_paths"),
        py::arg("cfg_json") = "", py::arg("workers") = 0,
        py::arg("trace_dir") = "",
        py::call_guard<py::gil_scoped_release>(),
        "Run every question in the given world files; returns a JSON report.");
  m.def("oracle", &oracle, py::arg("world_doc_json"), py::arg("question_id"),
        py::call_guard<py::gil_scoped_release>(),
        "Brute-force window scan for one question; returns JSON.");
  m.def("duration_sweep", &sweep_files, py::arg("world_paths"),
        py::arg("durations"), py::arg("cfg_json") = "",
        py::call_guard<py::gil_scoped_release>(),
        "Frame fraction per duration for the first question; returns JSON.");
  m.def("ablation_table", &ablate_files, py::arg("world_paths"),
        py::arg("cfg_json") = "", py::arg("seeds") = 1, py::arg("workers") = 0,
        py::call_guard<py::gil_scoped_release>(),
        "Mean accuracy and frames per ablation; returns a JSON array.");

  m.def("normalize_answer", &normalize_answer, py::arg("text"));
  m.def("extract_choice_letter", &extract_choice_letter, py::arg("text"));
  m.def("grade_answer", &grade_answer, py::arg("got"), py::arg("gold"));

  py::register_exception<QtrError>(m, "EngineError");
}
