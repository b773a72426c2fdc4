// videoqtr command line: run sessions over scripted worlds, evaluate
// suites, sweep durations, tabulate ablations, replay traces, and run the
// brute-force oracle.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qtr/harness.hpp"
#include "qtr/version.hpp"

namespace {

using qtr::json;

struct CliOptions {
  std::string config_path;
  std::vector<std::string> worlds;
  std::string sweep_world;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::vector<std::string> ablation;
  std::string out_dir;
  std::string format = "text";
  int workers = 0;
};

struct LoadedConfig {
  std::vector<std::string> worlds;
  std::string sweep_world;
  qtr::SessionConfig session;
  int workers = 0;
};

LoadedConfig resolve_config(const CliOptions& opts) {
  LoadedConfig cfg;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw qtr::QtrError("cannot open config " + opts.config_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw qtr::QtrError(std::string("config parse error: ") + e.what());
    }
    cfg.worlds = doc.value("worlds", std::vector<std::string>{});
    cfg.sweep_world = doc.value("sweep_world", std::string{});
    if (doc.contains("session")) cfg.session = doc["session"].get<qtr::SessionConfig>();
    cfg.workers = doc.value("workers", 0);
  }
  if (!opts.worlds.empty()) cfg.worlds = opts.worlds;
  if (cfg.worlds.empty())
    cfg.worlds = {"assets/suite/city_day.json", "assets/suite/nature_doc.json",
                  "assets/suite/household.json"};
  if (!opts.sweep_world.empty()) cfg.sweep_world = opts.sweep_world;
  if (cfg.sweep_world.empty()) cfg.sweep_world = "assets/suite/sweep_base.json";
  if (opts.seed_set) cfg.session.seed = opts.seed;
  for (const auto& a : opts.ablation) cfg.session.ablation.insert(a);
  if (opts.workers > 0) cfg.workers = opts.workers;
  cfg.session.validate();
  return cfg;
}

qtr::ScriptedSuite filter_question(const qtr::ScriptedSuite& suite,
                                   const std::string& id) {
  qtr::ScriptedSuite out;
  out.worlds = suite.worlds;
  for (const auto& q : suite.questions)
    if (q.id == id) out.questions.push_back(q);
  if (out.questions.empty()) throw qtr::QtrError("no question with id " + id);
  return out;
}

std::vector<double> parse_durations(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw qtr::QtrError("no durations given");
  return out;
}

int cmd_suite(const CliOptions& opts, const std::string& only_question) {
  const auto cfg = resolve_config(opts);
  auto suite = qtr::load_suite(cfg.worlds);
  if (!only_question.empty()) suite = filter_question(suite, only_question);
  const auto report =
      qtr::run_suite(suite, cfg.session, cfg.workers, opts.out_dir);
  std::cout << qtr::render_report(
      report, qtr::report_format_from_string(opts.format));
  return report.failures > 0 ? 1 : 0;
}

int cmd_sweep(const CliOptions& opts, const std::string& durations_csv) {
  const auto cfg = resolve_config(opts);
  const auto base = qtr::load_suite({cfg.sweep_world});
  const auto fractions =
      qtr::duration_sweep(base, parse_durations(durations_csv), cfg.session);
  std::cout << qtr::render_sweep(
      fractions, qtr::report_format_from_string(opts.format));
  return 0;
}

int cmd_ablate(const CliOptions& opts, int seeds) {
  const auto cfg = resolve_config(opts);
  const auto suite = qtr::load_suite(cfg.worlds);
  const auto rows =
      qtr::ablation_table(suite, cfg.session, seeds, cfg.workers);
  std::cout << qtr::render_ablation(
      rows, qtr::report_format_from_string(opts.format));
  return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& format) {
  std::ifstream in(trace_path);
  if (!in) throw qtr::QtrError("cannot open trace " + trace_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto trace = qtr::trace_from_ndjson(buffer.str());
  const auto result = qtr::replay_session(trace);
  const bool match = qtr::trace_hash(result.trace) == qtr::trace_hash(trace);
  if (format == "structured") {
    json j = qtr::result_fingerprint(result);
    j["hash_match"] = match;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "answer: " << result.final_answer.answer << "\n"
              << "terminated_by: " << result.terminated_by << "\n"
              << "iterations: " << result.iterations_used << "\n"
              << "frames: " << result.total_frames << "\n"
              << "trace hash match: " << (match ? "yes" : "no") << "\n";
  }
  return match ? 0 : 1;
}

int cmd_oracle(const CliOptions& opts, const std::string& only_question) {
  const auto cfg = resolve_config(opts);
  auto suite = qtr::load_suite(cfg.worlds);
  if (!only_question.empty()) suite = filter_question(suite, only_question);
  const auto format = qtr::report_format_from_string(opts.format);

  json rows = json::array();
  for (const auto& q : suite.questions) {
    const auto oracle = qtr::brute_force_oracle(
        suite.world_for(q.video_id), q, cfg.session.budget,
        cfg.session.budget_k);
    rows.push_back(json{{"id", q.id},
                        {"answer_interval", oracle.answer_interval},
                        {"frames_scanned", oracle.frames_scanned},
                        {"found", oracle.found},
                        {"best_score", oracle.best_score}});
  }
  if (format == qtr::ReportFormat::kStructured) {
    std::cout << rows.dump(2) << "\n";
    return 0;
  }
  const char* sep =
      format == qtr::ReportFormat::kDelimitedTable ? "\t" : "  ";
  std::cout << "id" << sep << "window" << sep << "frames" << sep << "found\n";
  for (const auto& r : rows) {
    const auto iv = r["answer_interval"].get<qtr::TemporalInterval>();
    std::cout << r["id"].get<std::string>() << sep << "["
              << qtr::format_seconds(iv.start_s) << ", "
              << qtr::format_seconds(iv.end_s) << "]" << sep
              << r["frames_scanned"].get<std::int64_t>() << sep
              << (r["found"].get<bool>() ? "yes" : "no") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"videoqtr: iterative temporal reasoning over long videos"};
  app.set_version_flag("--version", std::string(qtr::kEngineVersion));
  app.require_subcommand(1);

  CliOptions opts;
  std::string question_id;
  std::string durations_csv = "30,300,1200,3000";
  std::string trace_path;
  int seeds = 10;

  auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--world", opts.worlds, "world file (repeatable)");
    cmd->add_option("--seed", opts.seed, "session seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--ablation", opts.ablation,
                    "disable a component: no-rtp, no-tm, no-tcr");
    cmd->add_option("--format", opts.format,
                    "text, delimited-table, structured");
    cmd->add_option("--workers", opts.workers, "worker pool size");
    if (with_out)
      cmd->add_option("--out", opts.out_dir,
                      "directory for per-question traces");
  };

  auto* run = app.add_subcommand("run", "run one question");
  add_common(run);
  run->add_option("--question", question_id, "question id")->required();

  auto* suite = app.add_subcommand("suite", "run the full suite");
  add_common(suite);

  auto* sweep = app.add_subcommand("sweep", "frame fraction vs duration");
  add_common(sweep, false);
  sweep->add_option("--durations", durations_csv, "comma-separated seconds");
  sweep->add_option("--sweep-world", opts.sweep_world, "sweep base world");

  auto* ablate = app.add_subcommand("ablate", "component ablation table");
  add_common(ablate, false);
  ablate->add_option("--seeds", seeds, "seeds per config");

  auto* replay = app.add_subcommand("replay", "re-execute a recorded trace");
  replay->add_option("--trace", trace_path, "trace.ndjson path")->required();
  replay->add_option("--format", opts.format,
                     "text, delimited-table, structured");

  auto* oracle = app.add_subcommand("oracle", "brute-force reference scan");
  add_common(oracle, false);
  oracle->add_option("--question", question_id, "question id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_suite(opts, question_id);
    if (suite->parsed()) return cmd_suite(opts, "");
    if (sweep->parsed()) return cmd_sweep(opts, durations_csv);
    if (ablate->parsed()) return cmd_ablate(opts, seeds);
    if (replay->parsed()) return cmd_replay(trace_path, opts.format);
    if (oracle->parsed()) return cmd_oracle(opts, question_id);
  } catch (const qtr::QtrError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
