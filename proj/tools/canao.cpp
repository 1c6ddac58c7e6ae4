#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "canao/bert.hpp"
#include "canao/error.hpp"
#include "canao/fusion.hpp"
#include "canao/graph_ir.hpp"
#include "canao/perf_model.hpp"
#include "canao/search.hpp"
#include "canao/serialize.hpp"

#ifndef CANAO_VERSION
#define CANAO_VERSION "0.0.0"
#endif

using namespace canao;
namespace fs = std::filesystem;

namespace {

// Every artifact names a manifest file written next to it. Artifacts stay
// byte-identical across runs; the manifest carries the timing.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)),
        start_(std::chrono::steady_clock::now()) {}

  Json config = Json::object();
  std::optional<std::uint64_t> seed;

  void input(const std::string& path) { inputs_.push_back(path); }

  void set_manifest(const std::string& path) { manifest_path_ = path; }

  std::string manifest_name() const { return fs::path(manifest_path_).filename().string(); }

  void write_json(const std::string& path, Json doc) {
    if (manifest_path_.empty()) set_manifest(path + ".manifest.json");
    doc["manifest"] = manifest_name();
    write_text_file(path, doc.dump(1) + "\n");
    outputs_.push_back(path);
  }

  void write_text(const std::string& path, const std::string& text) {
    if (manifest_path_.empty()) set_manifest(path + ".manifest.json");
    write_text_file(path, text);
    outputs_.push_back(path);
  }

  void produced(const std::string& path) { outputs_.push_back(path); }

  void finish() const {
    if (manifest_path_.empty()) return;
    Json m = make_document("run_manifest");
    m["command"] = command_;
    m["argv"] = argv_;
    m["tool_version"] = CANAO_VERSION;
    m["config"] = config;
    m["seed"] = seed ? Json(*seed) : Json(nullptr);
    m["inputs"] = absolute(inputs_);
    m["outputs"] = absolute(outputs_);
    m["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text_file(manifest_path_, m.dump(1) + "\n");
  }

 private:
  static Json absolute(const std::vector<std::string>& paths) {
    Json out = Json::array();
    for (const std::string& p : paths) out.push_back(fs::absolute(p).lexically_normal().string());
    return out;
  }

  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> inputs_, outputs_;
  std::string manifest_path_;
};

std::string ms(double seconds) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << seconds * 1e3 << " ms";
  return os.str();
}

std::string rl_text(double rL_ms) {
  if (std::isinf(rL_ms)) return "inf";
  std::ostringstream os;
  os << rL_ms << " ms";
  return os.str();
}

Json read_json_file(const std::string& path) {
  try {
    return parse_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path, e.what());
  }
}

std::string format_of(const Json& doc) {
  if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string()) return "";
  return doc["format"].get<std::string>();
}

DeviceProfile load_named_profile(const std::string& name, Run& run) {
  const std::string path = resolve_profile_path(name);
  run.input(path);
  return load_profile(path);
}

std::string arch_summary(const ArchitectureConfig& a) {
  std::ostringstream os;
  os << a.label() << " I-" << a.intermediate_size << " S-" << a.seq_len;
  return os.str();
}

// ---------------------------------------------------------------------------
// build

struct BuildOptions {
  std::int64_t blocks = 12, hidden = 768, intermediate = 0, seq = 128;
  std::string config, fixture, out;
};

int cmd_build(const BuildOptions& o, Run& run) {
  Graph g;
  std::string what;
  if (!o.fixture.empty()) {
    if (o.fixture != "seven-case") {
      throw ConfigError("unknown fixture \"" + o.fixture + "\" (expected seven-case)");
    }
    g = build_seven_case_fixture();
    what = "fixture seven-case";
    run.config = {{"fixture", o.fixture}};
  } else {
    ArchitectureConfig arch;
    if (!o.config.empty()) {
      run.input(o.config);
      Json doc = read_json_file(o.config);
      check_document(doc, "architecture");
      doc.erase("format");
      doc.erase("version");
      doc.erase("manifest");
      arch = architecture_from_json(doc, "");
    } else {
      arch = make_architecture(o.blocks, o.hidden, o.intermediate, o.seq);
    }
    check_architecture(arch);
    g = build_bert_graph(arch);
    what = arch_summary(arch);
    run.config = architecture_to_json(arch);
  }
  const LayerCensus c = census(g);
  std::cout << what << "\n"
            << "layers " << c.total << " (compute-intensive " << c.compute_intensive
            << ", memory-intensive " << c.memory_intensive << ")\n"
            << "flops " << flops(g) << "\n"
            << "intermediate bytes " << intermediate_bytes(g) << "\n";
  if (!o.out.empty()) {
    run.write_json(o.out, graph_to_json(g));
    std::cout << "wrote " << o.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fuse

int cmd_fuse(const std::string& in, const std::string& out, const std::string& report_out,
             bool json, Run& run) {
  run.input(in);
  const Graph g = graph_from_json(read_json_file(in));
  const FusionResult r = fuse(g);
  if (json) {
    std::cout << fusion_report_to_json(r.report).dump(1) << "\n";
  } else {
    std::cout << format_report_table(r.report);
  }
  if (!out.empty()) run.write_json(out, fused_graph_to_json(r.graph));
  if (!report_out.empty()) run.write_json(report_out, fusion_report_to_json(r.report));
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

int cmd_estimate(const std::string& in, const std::string& profile, const std::string& tuning_path,
                 bool json, const std::string& out, Run& run) {
  run.input(in);
  const DeviceProfile device = load_named_profile(profile, run);
  const Json doc = read_json_file(in);
  const std::string format = format_of(doc);
  LatencyEstimate est;
  std::string kind;
  if (format == "graph") {
    if (!tuning_path.empty()) throw ConfigError("a tuning file needs a fused graph");
    est = estimate_unfused(graph_from_json(doc), device);
    kind = "unfused";
  } else if (format == "fused_graph") {
    const FusedGraph fused = fused_graph_from_json(doc);
    const LatencyModel model(fused);
    TuningConfig tuning = model.default_tuning();
    if (!tuning_path.empty()) {
      run.input(tuning_path);
      tuning = tuning_from_json(read_json_file(tuning_path));
    }
    est = model.estimate(device, tuning);
    kind = "fused";
  } else {
    throw ParseError(in, "expected a graph or fused_graph document, got format \"" + format + "\"");
  }
  run.config = {{"profile", device.name}, {"input_kind", kind}};
  Json report = latency_to_json(est);
  report["device"] = device.name;
  report["input_kind"] = kind;
  if (json) {
    std::cout << report.dump(1) << "\n";
  } else {
    double compute = 0, memory = 0, overhead = 0;
    for (const BlockLatency& b : est.blocks) {
      compute += b.compute_s;
      memory += b.memory_s;
      overhead += b.overhead_s;
    }
    std::cout << kind << " latency on " << device.name << ": " << ms(est.total_s) << "\n"
              << "  blocks " << est.blocks.size() << ", compute " << ms(compute) << ", memory "
              << ms(memory) << ", overhead " << ms(overhead) << "\n";
  }
  if (!out.empty()) run.write_json(out, report);
  return 0;
}

// ---------------------------------------------------------------------------
// tune

int cmd_tune(const std::string& in, const std::string& profile, const GaConfig& ga,
             const std::string& out, Run& run) {
  run.input(in);
  const DeviceProfile device = load_named_profile(profile, run);
  const FusedGraph fused = fused_graph_from_json(read_json_file(in));
  const LatencyModel model(fused);
  const GaResult r = ga_tune(model, device, full_space(model), ga);
  run.seed = ga.seed;
  run.config = {{"profile", device.name},
                {"population", ga.population},
                {"generations", ga.generations},
                {"mutation_rate", ga.mutation_rate},
                {"seed", ga.seed}};
  const double before = model.estimate(device).total_s;
  std::cout << "default tuning " << ms(before) << "\n"
            << "tuned " << ms(r.best_latency_s) << " after " << r.history.size()
            << " generations\n";
  if (!out.empty()) {
    run.write_json(out, tuning_to_json(r.best));
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate

int cmd_calibrate(const std::string& csv, const std::string& tmpl, const std::string& out,
                  Run& run) {
  run.input(csv);
  const DeviceProfile base = load_named_profile(tmpl, run);
  const std::vector<Observation> obs = parse_observations_csv(read_text_file(csv));
  const CalibrationResult r = calibrate(base, obs);
  run.config = {{"template", base.name}, {"observations", obs.size()}};
  std::cout << std::setprecision(4) << "peak flops/s " << r.profile.peak_flops_per_s << "\n"
            << "bandwidth bytes/s " << r.profile.mem_bandwidth_bytes_per_s << "\n"
            << "per-block overhead s " << r.profile.per_block_overhead_s << "\n"
            << "max relative error " << r.max_relative_error << "\n";
  for (std::size_t i = 0; i < r.relative_residuals.size(); ++i) {
    std::cout << "  observation " << i + 1 << ": " << std::showpos << r.relative_residuals[i]
              << std::noshowpos << "\n";
  }
  if (!out.empty()) {
    run.write_json(out, profile_to_json(r.profile));
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// search

void print_best(const SearchTrace& t) {
  if (t.phase1_depth) std::cout << "phase 1 depth " << *t.phase1_depth << "\n";
  const Episode& b = t.episodes.at(static_cast<std::size_t>(*t.best_episode));
  std::cout << "best episode " << b.index << " (phase " << b.phase << "): " << arch_summary(b.arch)
            << "\n  latency " << ms(b.latency_s) << ", accuracy " << *b.accuracy << ", reward "
            << b.reward << "\n";
}

int cmd_search(const std::string& config_path, const std::string& out_dir,
               const std::string& replay_path, std::optional<std::uint64_t> seed, Run& run) {
  if (!replay_path.empty()) {
    run.input(replay_path);
    const SearchTrace recorded = trace_from_jsonl(read_text_file(replay_path));
    run.seed = recorded.config.seed;
    run.config = search_config_to_json(recorded.config);
    const SearchTrace again = replay_search(recorded);
    if (auto diff = first_difference(recorded, again)) {
      std::cout << "replay differs: " << *diff << "\n";
      return 1;
    }
    std::cout << "replay identical: " << trace_records(again).size() << " records, "
              << again.episodes.size() << " episodes\n";
    return 0;
  }
  if (config_path.empty()) throw ConfigError("search needs a config file or --replay");
  if (out_dir.empty()) throw ConfigError("search needs --out");
  run.input(config_path);
  SearchConfig config = search_config_from_json(read_json_file(config_path));
  if (seed) config.seed = *seed;
  run.seed = config.seed;
  run.config = search_config_to_json(config);

  const std::string base = fs::path(config_path).parent_path().string();
  const std::string profile_path = resolve_profile_path(config.profile, base);
  run.input(profile_path);
  const DeviceProfile device = load_profile(profile_path);
  const std::unique_ptr<AccuracyOracle> oracle = make_oracle(config.oracle);

  fs::create_directories(out_dir);
  run.set_manifest((fs::path(out_dir) / "manifest.json").string());
  const std::string trace_path = (fs::path(out_dir) / "trace.jsonl").string();
  std::ofstream trace_out(trace_path, std::ios::binary | std::ios::trunc);
  if (!trace_out) throw ConfigError("cannot write " + trace_path);
  const std::string manifest = run.manifest_name();
  LatencyEvaluator latency(device, config.ga);
  const SearchTrace t = run_search(config, device, *oracle, &latency, [&](const Json& r) {
    Json line = r;
    if (line.value("type", "") == "header") line["manifest"] = manifest;
    trace_out << line.dump() << '\n';
    trace_out.flush();
  });
  trace_out.close();
  run.produced(trace_path);

  Json summary = make_document("search_summary");
  summary["feasible"] = t.feasible();
  summary["rL_ms"] = std::isinf(config.rL_ms) ? Json("inf") : Json(config.rL_ms);
  summary["episodes"] = t.episodes.size();
  summary["latency_evaluations"] = latency.evaluations();
  summary["phase1_depth"] = t.phase1_depth ? Json(*t.phase1_depth) : Json(nullptr);
  std::cout << t.episodes.size() << " episodes, " << latency.evaluations()
            << " latency evaluations\n";
  if (!t.feasible()) {
    run.write_json((fs::path(out_dir) / "best.json").string(), summary);
    std::cout << "infeasible under rL = " << rl_text(config.rL_ms)
              << ": no episode met the latency budget\n";
    return 1;
  }
  const Episode& best = t.episodes.at(static_cast<std::size_t>(*t.best_episode));
  // Independent re-check of the reported architecture.
  const double recheck = LatencyEvaluator::compute(best.arch, device, config.ga);
  const bool ok = recheck <= config.rL_ms / 1e3;
  summary["best_episode"] = best.index;
  summary["best_architecture"] = architecture_to_json(best.arch);
  summary["best_latency_s"] = best.latency_s;
  summary["best_accuracy"] = *best.accuracy;
  summary["best_reward"] = best.reward;
  summary["reverified_latency_s"] = recheck;
  summary["reverified"] = ok;
  run.write_json((fs::path(out_dir) / "best.json").string(), summary);
  print_best(t);
  std::cout << "re-verified latency " << ms(recheck) << (ok ? " <= " : " > ") << "rL "
            << rl_text(config.rL_ms) << "\n"
            << "wrote " << trace_path << "\n";
  return ok ? 0 : 2;
}

// ---------------------------------------------------------------------------
// report

std::string svg_plot(const SearchTrace& t, const std::string& manifest) {
  const double w = 720, h = 360, left = 60, right = 20, top = 30, bottom = 45;
  double lo = 0, hi = 0;
  for (const Episode& e : t.episodes) {
    lo = std::min(lo, e.reward);
    hi = std::max(hi, e.reward);
  }
  if (hi - lo < 1e-9) hi = lo + 1;
  const double n = static_cast<double>(std::max<std::size_t>(t.episodes.size() - 1, 1));
  auto x = [&](double i) { return left + (w - left - right) * i / n; };
  auto y = [&](double r) { return top + (h - top - bottom) * (hi - r) / (hi - lo); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<!-- manifest: " << manifest << " -->\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">reward per episode</text>\n";
  // Axes and zero line.
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << h - bottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right
     << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << w - right << "\" y2=\""
     << y(0) << "\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double r = lo + (hi - lo) * k / 4;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y(r) + 4 << "\" text-anchor=\"end\">" << r
       << "</text>\n";
  }
  os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10
     << "\" text-anchor=\"middle\">episode</text>\n"
     << "<text x=\"" << left << "\" y=\"" << h - bottom + 15 << "\" text-anchor=\"middle\">0</text>\n"
     << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 15 << "\" text-anchor=\"middle\">"
     << t.episodes.size() - 1 << "</text>\n";
  for (const PhaseSummary& p : t.phases) {
    if (p.phase == 1 || p.episode_count == 0) continue;
    const double px = x(p.first_episode - 0.5);
    os << "<line x1=\"" << px << "\" y1=\"" << top << "\" x2=\"" << px << "\" y2=\"" << h - bottom
       << "\" stroke=\"#888\" stroke-dasharray=\"6,4\"/>\n"
       << "<text x=\"" << px + 4 << "\" y=\"" << top + 12 << "\">phase " << p.phase << "</text>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"#4a7ab5\" stroke-width=\"1\" points=\"";
  for (const Episode& e : t.episodes) os << x(e.index) << ',' << y(e.reward) << ' ';
  os << "\"/>\n";
  for (const Episode& e : t.episodes) {
    const char* colour = e.failed ? "#999" : e.terminated_early ? "#c0392b" : "#1f5f9f";
    os << "<circle cx=\"" << x(e.index) << "\" cy=\"" << y(e.reward) << "\" r=\"2\" fill=\""
       << colour << "\"/>\n";
  }
  if (t.best_episode) {
    const Episode& b = t.episodes.at(static_cast<std::size_t>(*t.best_episode));
    os << "<circle cx=\"" << x(b.index) << "\" cy=\"" << y(b.reward)
       << "\" r=\"6\" fill=\"none\" stroke=\"#e67e22\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int cmd_report(const std::string& in, std::string plot, Run& run) {
  run.input(in);
  const SearchTrace t = trace_from_jsonl(read_text_file(in));
  run.seed = t.config.seed;
  run.config = search_config_to_json(t.config);
  if (t.episodes.empty()) {
    std::cout << "no episodes\n";
    return 0;
  }
  std::cout << t.episodes.size() << " episodes, rL = " << rl_text(t.config.rL_ms) << ", device "
            << t.device.name << "\n";
  for (const PhaseSummary& p : t.phases) {
    int early = 0, failed = 0;
    for (int i = 0; i < p.episode_count; ++i) {
      const Episode& e = t.episodes[static_cast<std::size_t>(p.first_episode + i)];
      early += e.terminated_early;
      failed += e.failed;
    }
    std::cout << "phase " << p.phase << ": " << p.episode_count << " episodes, " << early
              << " over budget, " << failed << " failed\n";
    if (p.best_episode) {
      const Episode& b = t.episodes.at(static_cast<std::size_t>(*p.best_episode));
      std::cout << "  best episode " << b.index << ": " << arch_summary(b.arch) << ", reward "
                << b.reward << ", latency " << ms(b.latency_s) << ", accuracy " << *b.accuracy
                << "\n";
    } else {
      std::cout << "  no feasible episode\n";
    }
  }
  if (t.feasible()) {
    print_best(t);
  } else {
    std::cout << "infeasible under rL = " << rl_text(t.config.rL_ms) << "\n";
  }

  // Mean reward per window of episodes.
  const std::size_t window = std::max<std::size_t>(1, t.episodes.size() / 10);
  std::cout << "reward curve (mean per " << window << " episodes):\n";
  for (std::size_t s = 0; s < t.episodes.size(); s += window) {
    const std::size_t e = std::min(t.episodes.size(), s + window);
    double sum = 0;
    for (std::size_t i = s; i < e; ++i) sum += t.episodes[i].reward;
    std::cout << "  " << std::setw(4) << s << "-" << std::setw(4) << e - 1 << "  " << std::showpos
              << std::fixed << std::setprecision(4) << sum / static_cast<double>(e - s)
              << std::noshowpos << std::defaultfloat << "\n";
  }

  if (plot.empty()) plot = fs::path(in).replace_extension(".svg").string();
  run.set_manifest(plot + ".manifest.json");
  run.write_text(plot, svg_plot(t, run.manifest_name()));
  std::cout << "wrote " << plot << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compiler-aware transformer architecture optimization"};
  app.set_version_flag("--version", CANAO_VERSION);
  app.require_subcommand(1);

  BuildOptions build;
  auto* b = app.add_subcommand("build", "Build a BERT-style graph");
  b->add_option("--L", build.blocks, "transformer blocks");
  b->add_option("--H", build.hidden, "hidden size");
  b->add_option("--I", build.intermediate, "feedforward size (default 4H)");
  b->add_option("--seq", build.seq, "sequence length");
  b->add_option("--config", build.config, "architecture JSON instead of flags");
  b->add_option("--fixture", build.fixture, "named test graph (seven-case)");
  b->add_option("-o,--out", build.out, "graph output path");

  std::string fuse_in, fuse_out, fuse_report;
  bool fuse_json = false;
  auto* f = app.add_subcommand("fuse", "Run the fusion pass");
  f->add_option("graph", fuse_in, "graph file")->required();
  f->add_option("-o,--out", fuse_out, "fused graph output path");
  f->add_option("--report", fuse_report, "fusion report output path");
  f->add_flag("--json", fuse_json, "print the report as JSON");

  std::string est_in, est_profile = "cpu.json", est_tuning, est_out;
  bool est_json = false;
  auto* e = app.add_subcommand("estimate", "Estimate latency of a graph or fused graph");
  e->add_option("input", est_in, "graph or fused graph file")->required();
  e->add_option("--profile", est_profile, "device profile (path or bundled name)");
  e->add_option("--tuning", est_tuning, "tuning file for a fused graph");
  e->add_flag("--json", est_json, "print JSON");
  e->add_option("-o,--out", est_out, "estimate output path");

  std::string tune_in, tune_profile = "cpu.json", tune_out;
  GaConfig ga;
  auto* t = app.add_subcommand("tune", "Autotune a fused graph");
  t->add_option("fused", tune_in, "fused graph file")->required();
  t->add_option("--profile", tune_profile, "device profile (path or bundled name)");
  t->add_option("--population", ga.population, "GA population");
  t->add_option("--generations", ga.generations, "GA generations, counting the first");
  t->add_option("--mutation", ga.mutation_rate, "per-gene mutation rate");
  t->add_option("--seed", ga.seed, "random seed");
  t->add_option("--threads", ga.threads, "fitness threads (0: all cores)");
  t->add_option("-o,--out", tune_out, "tuning output path");

  std::string cal_in, cal_template = "cpu.json", cal_out;
  auto* c = app.add_subcommand("calibrate", "Fit a device profile to measured latencies");
  c->add_option("observations", cal_in, "CSV of measurements")->required();
  c->add_option("--template", cal_template, "profile supplying penalties and cache settings");
  c->add_option("-o,--out", cal_out, "fitted profile output path");

  std::string search_config, search_out, search_replay;
  std::optional<std::uint64_t> search_seed;
  auto* s = app.add_subcommand("search", "Run the two-phase architecture search");
  s->add_option("config", search_config, "search config file");
  s->add_option("--out", search_out, "output directory");
  s->add_option("--replay", search_replay, "rerun a recorded trace and compare");
  s->add_option("--seed", search_seed, "override the config seed");

  std::string report_in, report_plot;
  auto* r = app.add_subcommand("report", "Summarize a search trace");
  r->add_option("trace", report_in, "trace file")->required();
  r->add_option("--plot", report_plot, "SVG output (default: trace path with .svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  try {
    int code = 0;
    if (sub == b) code = cmd_build(build, run);
    else if (sub == f) code = cmd_fuse(fuse_in, fuse_out, fuse_report, fuse_json, run);
    else if (sub == e) code = cmd_estimate(est_in, est_profile, est_tuning, est_json, est_out, run);
    else if (sub == t) code = cmd_tune(tune_in, tune_profile, ga, tune_out, run);
    else if (sub == c) code = cmd_calibrate(cal_in, cal_template, cal_out, run);
    else if (sub == s) code = cmd_search(search_config, search_out, search_replay, search_seed, run);
    else if (sub == r) code = cmd_report(report_in, report_plot, run);
    run.finish();
    return code;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
}
