#include "qtr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "qtr/tcr.hpp"

namespace qtr {

const ScriptedWorld& ScriptedSuite::world_for(
    const std::string& video_id) const {
  for (const auto& w : worlds)
    if (w.find_video(video_id) != nullptr) return w;
  throw QtrError("no world contains video " + video_id);
}

void ScriptedSuite::validate() const {
  for (const auto& q : questions) {
    const auto& world = world_for(q.video_id);
    const auto& video = world.video_or_throw(q.video_id);
    if (q.gold_interval.start_s < 0.0 ||
        q.gold_interval.end_s > video.descriptor.duration_s ||
        q.gold_interval.start_s > q.gold_interval.end_s)
      throw QtrError("question " + q.id + ": gold interval outside video");
    const bool coincides = std::any_of(
        video.events.begin(), video.events.end(), [&](const ScriptedEvent& e) {
          return std::abs(e.interval.start_s - q.gold_interval.start_s) <
                     1e-6 &&
                 std::abs(e.interval.end_s - q.gold_interval.end_s) < 1e-6;
        });
    if (!coincides)
      throw QtrError("question " + q.id +
                     ": gold interval matches no scripted event");
    q.query.validate();
  }
}

ScriptedSuite load_world_document(const json& doc) {
  ScriptedSuite out;
  ScriptedWorld world;
  world.noise_seed = doc.value("noise_seed", std::uint64_t{17});
  world.videos.push_back(doc.at("video").get<ScriptedVideo>());
  const auto& video = world.videos.front();

  for (const auto& qj : doc.value("questions", json::array())) {
    SuiteQuestion q;
    q.id = qj.at("id").get<std::string>();
    q.video_id = video.descriptor.id;
    q.query.text = qj.at("text").get<std::string>();
    q.query.options = qj.value("options", std::vector<ChoiceOption>{});
    q.query.video = video.descriptor;
    q.gold_answer = qj.at("gold_answer").get<std::string>();
    q.gold_interval = qj.at("gold_interval").get<TemporalInterval>();
    q.mode = qj.value("mode", std::string{});

    QuestionNote note;
    note.video_id = q.video_id;
    note.question_text = q.query.text;
    note.requires_context_event = qj.value("requires_context_event", -1);
    world.question_notes.push_back(note);
    out.questions.push_back(std::move(q));
  }
  out.worlds.push_back(std::move(world));
  return out;
}

ScriptedSuite load_suite(const std::vector<std::string>& paths) {
  ScriptedSuite suite;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw QtrError("cannot open world file " + path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw QtrError("world file " + path + ": " + e.what());
    }
    auto part = load_world_document(doc);
    for (auto& w : part.worlds) suite.worlds.push_back(std::move(w));
    for (auto& q : part.questions) {
      for (const auto& existing : suite.questions)
        if (existing.id == q.id)
          throw QtrError("duplicate question id " + q.id);
      suite.questions.push_back(std::move(q));
    }
  }
  suite.validate();
  return suite;
}

json world_document(const ScriptedWorld& world,
                    const std::vector<SuiteQuestion>& questions) {
  if (world.videos.size() != 1)
    throw QtrError("world documents hold exactly one video");
  json qs = json::array();
  for (const auto& q : questions) {
    json qj{{"id", q.id},
            {"text", q.query.text},
            {"options", q.query.options},
            {"gold_answer", q.gold_answer},
            {"gold_interval", q.gold_interval}};
    if (!q.mode.empty()) qj["mode"] = q.mode;
    for (const auto& note : world.question_notes)
      if (note.question_text == q.query.text &&
          note.requires_context_event >= 0)
        qj["requires_context_event"] = note.requires_context_event;
    qs.push_back(std::move(qj));
  }
  return json{{"video", world.videos.front()},
              {"noise_seed", world.noise_seed},
              {"questions", qs}};
}

// ---------------------------------------------------------------------------
// Oracle

OracleResult brute_force_oracle(const ScriptedWorld& world,
                                const SuiteQuestion& question,
                                const BudgetConfig& budget, int budget_k) {
  const auto& video = world.video_or_throw(question.video_id);
  const auto& d = video.descriptor;
  const auto query_embedding =
      scripted_text_embedding(world, question.query.text);

  OracleResult out;
  const double cap = budget.max_segment_s;
  const auto window_count =
      static_cast<std::int64_t>(std::ceil(d.duration_s / cap));
  out.frames_scanned = window_count * budget_k;

  double best = -2.0;
  TemporalInterval best_window{0.0, 0.0};
  for (std::int64_t w = 0; w < window_count; ++w) {
    const double a = static_cast<double>(w) * cap;
    const double b = std::min(d.duration_s, a + cap);
    double score = -2.0;
    for (int i = 0; i < budget_k; ++i) {
      const double t =
          budget_k == 1 ? (a + b) / 2.0
                        : a + (b - a) * static_cast<double>(i) /
                                  static_cast<double>(budget_k - 1);
      const auto emb = scripted_embed(world, d.id, t);
      score = std::max(score, cosine_similarity(emb, query_embedding));
    }
    if (score > best) {
      best = score;
      best_window = {a, b};
    }
  }

  const double background =
      cosine_similarity(video.background_embedding, query_embedding);
  out.best_score = best;
  out.threshold = background + 3.0 * video.noise_scale;
  out.found = best >= out.threshold;
  out.answer_interval = best_window;
  return out;
}

// ---------------------------------------------------------------------------
// Grading

std::string normalize_answer(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::string extract_choice_letter(const std::string& text) {
  auto s = text;
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  std::string lowered = s;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lowered.rfind("answer:", 0) == 0) {
    s = s.substr(7);
    const auto again = s.find_first_not_of(" \t\r\n");
    if (again == std::string::npos) return "";
    s = s.substr(again);
  }
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return "";
  if (s.size() > 1 && s[1] != '.' && s[1] != ')' && s[1] != ':') return "";
  return std::string(1, static_cast<char>(
                            std::toupper(static_cast<unsigned char>(s[0]))));
}

bool grade_answer(const std::string& got, const std::string& gold) {
  const auto ng = normalize_answer(gold);
  const auto nt = normalize_answer(got);
  if (!ng.empty() && nt == ng) return true;
  const auto lg = extract_choice_letter(gold);
  if (lg.empty()) return false;
  const auto lt = extract_choice_letter(got);
  if (!lt.empty()) return lt == lg;
  // letter-less reply against a lettered gold: compare against the body
  const auto dot = gold.find_first_of(".):");
  if (dot == std::string::npos) return false;
  return nt == normalize_answer(gold.substr(dot + 1));
}

// ---------------------------------------------------------------------------
// Suite runner

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::shared_ptr<const ScriptedWorld> borrow(const ScriptedWorld& world) {
  return {&world, [](const ScriptedWorld*) {}};
}

}  // namespace

std::uint64_t question_seed(std::uint64_t suite_seed, std::size_t index) {
  return mix64(suite_seed ^ mix64(static_cast<std::uint64_t>(index) + 1));
}

void to_json(json& j, const QuestionOutcome& v) {
  j = json{{"id", v.id},
           {"video_id", v.video_id},
           {"correct", v.correct},
           {"frames", v.frames},
           {"embed_calls", v.embed_calls},
           {"iterations", v.iterations},
           {"terminated_by", v.terminated_by},
           {"answer", v.answer},
           {"gold_answer", v.gold_answer},
           {"answer_interval", v.answer_interval},
           {"trace_hash", v.trace_hash},
           {"error", v.error}};
}

void to_json(json& j, const RunReport& v) {
  json fractions = json::object();
  for (const auto& [duration, fraction] : v.frame_fraction_by_duration)
    fractions[format_seconds(duration)] = fraction;
  j = json{{"per_question", v.per_question},
           {"accuracy", v.accuracy},
           {"mean_frames", v.mean_frames},
           {"frame_fraction_by_duration", fractions},
           {"failures", v.failures}};
}

RunReport run_suite(const ScriptedSuite& suite, const SessionConfig& cfg,
                    int workers, const std::string& trace_dir) {
  suite.validate();
  cfg.validate();

  RunReport report;
  report.per_question.resize(suite.questions.size());
  if (suite.questions.empty()) return report;

  std::atomic<std::size_t> next{0};
  auto run_one = [&](std::size_t i) {
    const auto& q = suite.questions[i];
    QuestionOutcome out;
    out.id = q.id;
    out.video_id = q.video_id;
    out.gold_answer = q.gold_answer;
    try {
      const auto world = borrow(suite.world_for(q.video_id));
      ScriptedLLM llm(world, PlannerPolicy::kCompetent,
                      question_seed(cfg.seed, i));
      CountingVision vision(std::make_shared<ScriptedVision>(world));
      auto session_cfg = cfg;
      session_cfg.seed = question_seed(cfg.seed, i);

      const auto result = run_session(q.query, session_cfg, llm, vision);
      out.frames = result.total_frames;
      out.embed_calls = vision.embed_calls();
      out.iterations = result.iterations_used;
      out.terminated_by = result.terminated_by;
      out.answer = result.final_answer.answer;
      out.answer_interval = result.answer_interval;
      out.correct = grade_answer(out.answer, q.gold_answer);
      out.trace_hash = trace_hash(result.trace);
      if (!trace_dir.empty()) {
        const auto dir = std::filesystem::path(trace_dir) / q.id;
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "trace.ndjson");
        f << trace_to_ndjson(result.trace);
      }
    } catch (const SessionAborted& e) {
      out.error = e.what();
      if (!trace_dir.empty()) {
        const auto dir = std::filesystem::path(trace_dir) / q.id;
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "trace.ndjson");
        f << trace_to_ndjson(e.partial_trace);
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    report.per_question[i] = std::move(out);
  };

  int pool = workers > 0 ? workers
                         : static_cast<int>(std::thread::hardware_concurrency());
  pool = std::max(1, std::min<int>(pool, static_cast<int>(
                                             suite.questions.size())));
  if (pool == 1) {
    for (std::size_t i = 0; i < suite.questions.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int t = 0; t < pool; ++t)
      threads.emplace_back([&] {
        while (true) {
          const auto i = next.fetch_add(1);
          if (i >= suite.questions.size()) return;
          run_one(i);
        }
      });
    for (auto& t : threads) t.join();
  }

  // aggregate in suite order, independent of completion order
  std::size_t correct = 0;
  double frame_sum = 0.0;
  std::map<double, std::pair<double, std::pair<double, int>>> buckets;
  for (std::size_t i = 0; i < report.per_question.size(); ++i) {
    const auto& out = report.per_question[i];
    if (out.correct) ++correct;
    if (!out.error.empty()) ++report.failures;
    frame_sum += static_cast<double>(out.frames);
    const auto& d = suite.world_for(out.video_id)
                        .video_or_throw(out.video_id)
                        .descriptor;
    auto& bucket = buckets[d.duration_s];
    bucket.first = d.fps;
    bucket.second.first += static_cast<double>(out.frames);
    bucket.second.second += 1;
  }
  const auto n = static_cast<double>(report.per_question.size());
  report.accuracy = static_cast<double>(correct) / n;
  report.mean_frames = frame_sum / n;
  for (const auto& [duration, bucket] : buckets) {
    const double mean = bucket.second.first / bucket.second.second;
    report.frame_fraction_by_duration[duration] =
        mean / (duration * bucket.first);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Duration sweep

namespace {

ScriptedVideo stretch_video(const ScriptedVideo& base, double duration_s) {
  ScriptedVideo out = base;
  const double scale = duration_s / base.descriptor.duration_s;
  out.descriptor.duration_s = duration_s;
  out.descriptor.frame_count =
      static_cast<long long>(std::llround(duration_s * base.descriptor.fps)) +
      1;
  for (auto& ev : out.events) {
    const double len = ev.interval.length();
    if (len >= 0.8 * duration_s) {
      ev.interval = {0.1 * duration_s, 0.9 * duration_s};
      continue;
    }
    double center = ev.interval.center() * scale;
    center = std::clamp(center, len / 2.0, duration_s - len / 2.0);
    ev.interval = {center - len / 2.0, center + len / 2.0};
  }
  return out;
}

}  // namespace

std::map<double, double> duration_sweep(const ScriptedSuite& base,
                                        const std::vector<double>& durations,
                                        const SessionConfig& cfg) {
  if (base.questions.empty())
    throw QtrError("duration sweep needs a base question");
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] <= 0.0) throw QtrError("durations must be positive");
    if (i > 0 && durations[i] <= durations[i - 1])
      throw QtrError("durations must be ascending");
  }

  const auto& q0 = base.questions.front();
  const auto& world0 = base.world_for(q0.video_id);
  const auto& video0 = world0.video_or_throw(q0.video_id);

  std::size_t gold_event = video0.events.size();
  for (std::size_t i = 0; i < video0.events.size(); ++i) {
    if (std::abs(video0.events[i].interval.start_s -
                 q0.gold_interval.start_s) < 1e-6 &&
        std::abs(video0.events[i].interval.end_s - q0.gold_interval.end_s) <
            1e-6)
      gold_event = i;
  }
  if (gold_event == video0.events.size())
    throw QtrError("sweep question's gold interval matches no event");

  std::map<double, double> fractions;
  for (const double duration : durations) {
    ScriptedSuite stretched;
    ScriptedWorld world;
    world.noise_seed = world0.noise_seed;
    world.question_notes = world0.question_notes;
    world.videos.push_back(stretch_video(video0, duration));

    SuiteQuestion q = q0;
    q.query.video = world.videos.front().descriptor;
    q.gold_interval = world.videos.front().events[gold_event].interval;
    stretched.worlds.push_back(std::move(world));
    stretched.questions.push_back(std::move(q));

    const auto report = run_suite(stretched, cfg, 1);
    const auto& outcome = report.per_question.front();
    if (!outcome.error.empty())
      throw QtrError("sweep session failed at " + format_seconds(duration) +
                     "s: " + outcome.error);
    fractions[duration] = static_cast<double>(outcome.frames) /
                          (duration * stretched.worlds.front()
                                          .videos.front()
                                          .descriptor.fps);
  }
  return fractions;
}

// ---------------------------------------------------------------------------
// Ablation table

std::vector<AblationRow> ablation_table(const ScriptedSuite& suite,
                                        const SessionConfig& base_cfg,
                                        int seeds, int workers) {
  if (seeds < 1) throw QtrError("seeds must be >= 1");
  static const std::vector<
      std::pair<std::string, std::set<std::string>>>
      rows = {{"full", {}},
              {"no-tm", {"no-tm"}},
              {"no-tcr", {"no-tcr"}},
              {"no-rtp", {"no-rtp"}}};

  std::vector<AblationRow> out;
  for (const auto& [name, ablation] : rows) {
    AblationRow row;
    row.name = name;
    for (int s = 1; s <= seeds; ++s) {
      auto cfg = base_cfg;
      cfg.seed = static_cast<std::uint64_t>(s);
      cfg.ablation = ablation;
      const auto report = run_suite(suite, cfg, workers);
      row.mean_accuracy += report.accuracy;
      row.mean_frames += report.mean_frames;
    }
    row.mean_accuracy /= seeds;
    row.mean_frames /= seeds;
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "text") return ReportFormat::kText;
  if (s == "delimited-table") return ReportFormat::kDelimitedTable;
  if (s == "structured") return ReportFormat::kStructured;
  throw QtrError("unknown report format '" + s + "'");
}

namespace {

std::string fixed(double v, int places = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(places) << v;
  return out.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_report(const RunReport& report, ReportFormat format) {
  if (format == ReportFormat::kStructured) return json(report).dump(2) + "\n";

  const char* headers[] = {"id",     "video",         "correct",
                           "frames", "iterations",    "terminated_by",
                           "error"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& q : report.per_question)
    cells.push_back({q.id, q.video_id, q.correct ? "yes" : "no",
                     std::to_string(q.frames), std::to_string(q.iterations),
                     q.terminated_by, q.error});

  std::ostringstream out;
  if (format == ReportFormat::kDelimitedTable) {
    for (std::size_t c = 0; c < 7; ++c) out << (c ? "\t" : "") << headers[c];
    out << "\n";
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < row.size(); ++c)
        out << (c ? "\t" : "") << row[c];
      out << "\n";
    }
    out << "accuracy\t" << fixed(report.accuracy) << "\n";
    out << "mean_frames\t" << fixed(report.mean_frames, 2) << "\n";
    for (const auto& [duration, fraction] : report.frame_fraction_by_duration)
      out << "frame_fraction@" << format_seconds(duration) << "s\t"
          << fixed(fraction) << "\n";
    return out.str();
  }

  std::vector<std::size_t> widths(7);
  for (std::size_t c = 0; c < 7; ++c) widths[c] = std::string(headers[c]).size();
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  for (std::size_t c = 0; c < 7; ++c)
    out << pad(headers[c], widths[c] + 2);
  out << "\n";
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << pad(row[c], widths[c] + 2);
    out << "\n";
  }
  out << "\n";
  out << "accuracy      " << fixed(report.accuracy) << "\n";
  out << "mean frames   " << fixed(report.mean_frames, 2) << "\n";
  for (const auto& [duration, fraction] : report.frame_fraction_by_duration)
    out << "frame fraction @ " << format_seconds(duration) << "s: "
        << fixed(fraction) << "\n";
  if (report.failures > 0)
    out << "failures      " << report.failures << "\n";
  return out.str();
}

std::string render_sweep(const std::map<double, double>& fractions,
                         ReportFormat format) {
  if (format == ReportFormat::kStructured) {
    json j = json::object();
    for (const auto& [duration, fraction] : fractions)
      j[format_seconds(duration)] = fraction;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  const char* sep = format == ReportFormat::kDelimitedTable ? "\t" : "  ";
  out << "duration_s" << sep << "frame_fraction\n";
  for (const auto& [duration, fraction] : fractions)
    out << format_seconds(duration) << sep << fixed(fraction) << "\n";
  return out.str();
}

std::string render_ablation(const std::vector<AblationRow>& rows,
                            ReportFormat format) {
  if (format == ReportFormat::kStructured) {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back(json{{"name", r.name},
                       {"mean_accuracy", r.mean_accuracy},
                       {"mean_frames", r.mean_frames}});
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  const char* sep = format == ReportFormat::kDelimitedTable ? "\t" : "  ";
  out << "config" << sep << "mean_accuracy" << sep << "mean_frames\n";
  for (const auto& r : rows)
    out << pad(r.name, format == ReportFormat::kText ? 8 : 0) << sep
        << fixed(r.mean_accuracy) << sep << fixed(r.mean_frames, 2) << "\n";
  return out.str();
}

}  // namespace qtr
