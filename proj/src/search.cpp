#include "canao/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "canao/error.hpp"
#include "canao/fusion.hpp"
#include "canao/rng.hpp"

#ifndef CANAO_BUNDLED_PROFILE_DIR
#define CANAO_BUNDLED_PROFILE_DIR "profiles"
#endif

namespace canao {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Action space and reward

ActionSpace ActionSpace::defaults() {
  ActionSpace s;
  for (std::int64_t l = 4; l <= 28; l += 2) s.depths.push_back(l);
  for (std::int64_t h = 256; h <= 1024; h += 64) s.hidden_sizes.push_back(h);
  s.intermediate_multipliers = {2, 3, 4};
  return s;
}

void check_action_space(const ActionSpace& space) {
  if (space.depths.empty()) throw ConfigError("action space: no depth choices");
  if (space.hidden_sizes.empty()) throw ConfigError("action space: no hidden size choices");
  if (space.intermediate_multipliers.empty()) {
    throw ConfigError("action space: no intermediate multiplier choices");
  }
  for (std::int64_t l : space.depths) {
    if (l < 1) throw ConfigError("action space: depth " + std::to_string(l) + " must be >= 1");
  }
  for (std::int64_t m : space.intermediate_multipliers) {
    if (m < 1) throw ConfigError("action space: multiplier must be >= 1");
  }
  if (space.phase1_multiplier < 1) throw ConfigError("action space: phase-1 multiplier must be >= 1");
  const std::int64_t depth = space.depths.front();
  check_architecture(make_architecture(depth, space.phase1_hidden,
                                       space.phase1_hidden * space.phase1_multiplier,
                                       space.seq_len));
  for (std::int64_t h : space.hidden_sizes) {
    check_architecture(make_architecture(depth, h, h, space.seq_len));
  }
}

double reward(std::optional<double> accuracy, double latency_s, double rL_s, double baseline) {
  if (!(rL_s > 0.0)) throw ConfigError("latency budget rL must be positive");
  if (!(latency_s > 0.0) || !std::isfinite(latency_s)) {
    throw NumericError("latency must be positive and finite");
  }
  if (latency_s > rL_s) return (rL_s - latency_s) / rL_s - 1.0;
  if (!accuracy) throw NumericError("accuracy is required when the latency meets the budget");
  if (!(*accuracy >= 0.0 && *accuracy <= 1.0)) throw NumericError("accuracy must lie in [0, 1]");
  if (!std::isfinite(baseline)) throw NumericError("baseline must be finite");
  return (*accuracy - baseline) + latency_s / rL_s;
}

double update_baseline(double baseline, double accuracy, double decay) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("baseline decay must lie in (0, 1)");
  return decay * baseline + (1.0 - decay) * accuracy;
}

// ---------------------------------------------------------------------------
// Latency feedback

LatencyEvaluator::LatencyEvaluator(DeviceProfile device, GaConfig ga)
    : device_(std::move(device)), ga_(ga) {
  check_profile(device_);
}

LatencyEvaluator::Key LatencyEvaluator::key(const ArchitectureConfig& a) {
  return {a.num_blocks, a.hidden_size, a.num_heads, a.intermediate_size, a.seq_len, a.vocab_size};
}

double LatencyEvaluator::compute(const ArchitectureConfig& arch, const DeviceProfile& device,
                                 const GaConfig& ga) {
  const FusedGraph fused = fuse(build_bert_graph(arch)).graph;
  return ga_tune(fused, device, ga).best_latency_s;
}

std::optional<double> LatencyEvaluator::cached(const ArchitectureConfig& arch) const {
  std::lock_guard lock(mu_);
  auto it = cache_.find(key(arch));
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

double LatencyEvaluator::operator()(const ArchitectureConfig& arch) {
  if (auto hit = cached(arch)) return *hit;
  const double latency = compute(arch, device_, ga_);
  std::lock_guard lock(mu_);
  if (cache_.emplace(key(arch), latency).second) ++evaluations_;
  return latency;
}

std::size_t LatencyEvaluator::evaluations() const {
  std::lock_guard lock(mu_);
  return evaluations_;
}

// ---------------------------------------------------------------------------
// Episodes

Episode evaluate_episode(const ArchitectureConfig& arch, const AccuracyOracle& oracle,
                         LatencyEvaluator& latency, double rL_s, std::optional<double> baseline,
                         std::uint64_t seed, EvalMode mode) {
  check_architecture(arch);
  if (!(rL_s > 0.0)) throw ConfigError("latency budget rL must be positive");

  Episode e;
  e.arch = arch;
  e.seed = seed;

  std::optional<double> accuracy;
  bool oracle_failed = false;
  std::string oracle_error;
  auto run_oracle = [&](std::stop_token stop) {
    try {
      accuracy = oracle.evaluate(arch, seed, stop);
    } catch (const std::exception& ex) {
      oracle_failed = true;
      oracle_error = ex.what();
    }
  };

  const std::optional<double> known = latency.cached(arch);
  const bool overlap = mode == EvalMode::Concurrent && !(known && *known > rL_s);
  double measured = 0.0;
  {
    std::jthread worker;
    if (overlap) worker = std::jthread(run_oracle);
    try {
      measured = latency(arch);
    } catch (const Error& ex) {
      worker.request_stop();
      e.failed = true;
      e.error = std::string("latency: ") + ex.what();
      return e;
    }
    if (measured > rL_s) {
      worker.request_stop();
    } else if (overlap) {
      worker.join();  // the destructor would request a stop first
    } else {
      run_oracle(std::stop_token{});
    }
  }
  e.latency_s = measured;

  if (measured > rL_s) {
    e.terminated_early = true;
    e.baseline = baseline.value_or(0.0);
    e.reward = reward(std::nullopt, measured, rL_s, e.baseline);
    return e;
  }
  if (oracle_failed) {
    e.failed = true;
    e.error = "oracle: " + oracle_error;
    return e;
  }
  if (!accuracy || !(*accuracy >= 0.0 && *accuracy <= 1.0)) {
    e.failed = true;
    e.error = "oracle: no accuracy in [0, 1]";
    return e;
  }
  e.accuracy = accuracy;
  e.baseline = baseline.value_or(*accuracy);
  e.reward = reward(accuracy, measured, rL_s, e.baseline);
  return e;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    const std::string& path) {
  if (!obj.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ParseError(child_path(path, it.key()), "unknown field");
    }
  }
}

template <typename T>
void read_opt(const Json& obj, std::string_view key, const std::string& path, T& out) {
  auto it = obj.find(key);
  if (it != obj.end()) out = get_as<T>(*it, child_path(path, key));
}

std::string_view mode_name(EvalMode m) {
  return m == EvalMode::Concurrent ? "concurrent" : "sequential";
}

EvalMode mode_from_string(const std::string& s) {
  if (s == "concurrent") return EvalMode::Concurrent;
  if (s == "sequential") return EvalMode::Sequential;
  throw ConfigError("unknown evaluation mode \"" + s + "\" (expected concurrent or sequential)");
}

Json budget_to_json(double rL_ms) {
  if (std::isinf(rL_ms) && rL_ms > 0) return "inf";
  return rL_ms;
}

double budget_from_json(const Json& v, const std::string& path) {
  if (v.is_null()) return kUnbounded;
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kUnbounded;
    throw ParseError(path, "expected a number, null or \"inf\"");
  }
  return get_as<double>(v, path);
}

void check_search_config(const SearchConfig& c) {
  if (!(c.rL_ms > 0.0)) throw ConfigError("rL_ms must be positive");
  if (c.phase1_episodes < 0 || c.phase2_episodes < 0) {
    throw ConfigError("episode budgets must be non-negative");
  }
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate must be positive and finite");
  }
  if (!(c.baseline_decay > 0.0 && c.baseline_decay < 1.0)) {
    throw ConfigError("baseline_decay must lie in (0, 1)");
  }
  if (c.controller_hidden < 1) throw ConfigError("controller hidden width must be >= 1");
  check_action_space(c.space);
}

}  // namespace

Json search_config_to_json(const SearchConfig& c) {
  Json doc = make_document("search_config");
  doc["rL_ms"] = budget_to_json(c.rL_ms);
  doc["seed"] = c.seed;
  doc["mode"] = std::string(mode_name(c.mode));
  doc["seq_len"] = c.space.seq_len;
  doc["phase1"] = {{"episodes", c.phase1_episodes},
                   {"depths", c.space.depths},
                   {"hidden", c.space.phase1_hidden},
                   {"multiplier", c.space.phase1_multiplier}};
  doc["phase2"] = {{"episodes", c.phase2_episodes},
                   {"hidden_sizes", c.space.hidden_sizes},
                   {"intermediate_multipliers", c.space.intermediate_multipliers}};
  doc["controller"] = {{"hidden", c.controller_hidden},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"baseline_decay", c.baseline_decay}};
  doc["oracle"] = {{"type", c.oracle.type},
                   {"task", std::string(to_string(c.oracle.task))},
                   {"epochs", c.oracle.epochs},
                   {"full_epochs", c.oracle.full_epochs},
                   {"sigma", c.oracle.sigma},
                   {"command", c.oracle.command}};
  doc["ga"] = {{"population", c.ga.population},
               {"generations", c.ga.generations},
               {"mutation_rate", c.ga.mutation_rate},
               {"seed", c.ga.seed},
               {"threads", c.ga.threads}};
  doc["profile"] = c.profile;
  return doc;
}

SearchConfig search_config_from_json(const Json& doc) {
  check_document(doc, "search_config");
  reject_unknown(doc,
                 {"format", "version", "rL_ms", "seed", "mode", "seq_len", "phase1", "phase2",
                  "controller", "oracle", "ga", "profile"},
                 "");
  SearchConfig c;
  if (auto it = doc.find("rL_ms"); it != doc.end()) c.rL_ms = budget_from_json(*it, "/rL_ms");
  read_opt(doc, "seed", "", c.seed);
  if (auto it = doc.find("mode"); it != doc.end()) {
    c.mode = mode_from_string(get_as<std::string>(*it, "/mode"));
  }
  read_opt(doc, "seq_len", "", c.space.seq_len);
  read_opt(doc, "profile", "", c.profile);

  if (auto it = doc.find("phase1"); it != doc.end()) {
    reject_unknown(*it, {"episodes", "depths", "hidden", "multiplier"}, "/phase1");
    read_opt(*it, "episodes", "/phase1", c.phase1_episodes);
    read_opt(*it, "depths", "/phase1", c.space.depths);
    read_opt(*it, "hidden", "/phase1", c.space.phase1_hidden);
    read_opt(*it, "multiplier", "/phase1", c.space.phase1_multiplier);
  }
  if (auto it = doc.find("phase2"); it != doc.end()) {
    reject_unknown(*it, {"episodes", "hidden_sizes", "intermediate_multipliers"}, "/phase2");
    read_opt(*it, "episodes", "/phase2", c.phase2_episodes);
    read_opt(*it, "hidden_sizes", "/phase2", c.space.hidden_sizes);
    read_opt(*it, "intermediate_multipliers", "/phase2", c.space.intermediate_multipliers);
  }
  if (auto it = doc.find("controller"); it != doc.end()) {
    reject_unknown(*it, {"hidden", "batch_size", "learning_rate", "baseline_decay"}, "/controller");
    read_opt(*it, "hidden", "/controller", c.controller_hidden);
    read_opt(*it, "batch_size", "/controller", c.batch_size);
    read_opt(*it, "learning_rate", "/controller", c.learning_rate);
    read_opt(*it, "baseline_decay", "/controller", c.baseline_decay);
  }
  if (auto it = doc.find("oracle"); it != doc.end()) {
    reject_unknown(*it, {"type", "task", "epochs", "full_epochs", "sigma", "command"}, "/oracle");
    read_opt(*it, "type", "/oracle", c.oracle.type);
    if (auto t = it->find("task"); t != it->end()) {
      c.oracle.task = task_from_string(get_as<std::string>(*t, "/oracle/task"));
    }
    read_opt(*it, "epochs", "/oracle", c.oracle.epochs);
    read_opt(*it, "full_epochs", "/oracle", c.oracle.full_epochs);
    read_opt(*it, "sigma", "/oracle", c.oracle.sigma);
    read_opt(*it, "command", "/oracle", c.oracle.command);
  }
  if (auto it = doc.find("ga"); it != doc.end()) {
    reject_unknown(*it, {"population", "generations", "mutation_rate", "seed", "threads"}, "/ga");
    read_opt(*it, "population", "/ga", c.ga.population);
    read_opt(*it, "generations", "/ga", c.ga.generations);
    read_opt(*it, "mutation_rate", "/ga", c.ga.mutation_rate);
    read_opt(*it, "seed", "/ga", c.ga.seed);
    read_opt(*it, "threads", "/ga", c.ga.threads);
  }
  check_search_config(c);
  if (c.oracle.type != "surrogate" && c.oracle.type != "command") {
    throw ConfigError("unknown oracle type \"" + c.oracle.type + "\" (expected surrogate or command)");
  }
  return c;
}

SearchConfig load_search_config(const std::string& path) {
  return search_config_from_json(parse_json(read_text_file(path)));
}

std::string resolve_profile_path(const std::string& path, const std::string& base_dir) {
  const fs::path p(path);
  if (p.is_absolute()) return path;
  if (!base_dir.empty() && fs::exists(fs::path(base_dir) / p)) {
    return (fs::path(base_dir) / p).string();
  }
  if (fs::exists(p)) return path;
  if (const char* env = std::getenv("CANAO_PROFILE_DIR"); env && *env) {
    if (fs::exists(fs::path(env) / p)) return (fs::path(env) / p).string();
  }
  const fs::path bundled = fs::path(CANAO_BUNDLED_PROFILE_DIR) / p;
  if (fs::exists(bundled)) return bundled.string();
  throw ConfigError("device profile \"" + path + "\" not found");
}

std::unique_ptr<AccuracyOracle> make_oracle(const OracleConfig& c) {
  if (c.type == "surrogate") {
    return std::make_unique<SurrogateOracle>(c.task, c.epochs, c.full_epochs, c.sigma);
  }
  if (c.type == "command") return std::make_unique<ExternalCommandOracle>(c.command);
  throw ConfigError("unknown oracle type \"" + c.type + "\" (expected surrogate or command)");
}

// ---------------------------------------------------------------------------
// Two-phase search

std::optional<std::int64_t> select_depth(std::span<const Episode> phase1) {
  std::map<std::int64_t, std::pair<double, int>> stats;
  for (const Episode& e : phase1) {
    if (!e.feasible() || !e.accuracy) continue;
    auto& [sum, n] = stats[e.arch.num_blocks];
    sum += *e.accuracy;
    ++n;
  }
  std::optional<std::int64_t> best;
  double best_mean = 0.0;
  // Ascending depth order, so >= hands ties to the deeper model.
  for (const auto& [depth, s] : stats) {
    const double mean = s.first / s.second;
    if (!best || mean >= best_mean) {
      best = depth;
      best_mean = mean;
    }
  }
  return best;
}

namespace {

Json header_record(const SearchConfig& config, const DeviceProfile& device) {
  Json r = make_document("search_trace");
  r["type"] = "header";
  r["config"] = search_config_to_json(config);
  r["device"] = profile_to_json(device);
  return r;
}

Json phase_start_record(int phase) { return {{"type", "phase_start"}, {"phase", phase}}; }

Json optional_int(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }

Json phase_end_record(const PhaseSummary& p) {
  return {{"type", "phase_end"},
          {"phase", p.phase},
          {"first_episode", p.first_episode},
          {"episode_count", p.episode_count},
          {"best_episode", optional_int(p.best_episode)}};
}

Json summary_record(const SearchTrace& t) {
  Json r = {{"type", "summary"},
            {"feasible", t.feasible()},
            {"best_episode", optional_int(t.best_episode)},
            {"phase1_depth", t.phase1_depth ? Json(*t.phase1_depth) : Json(nullptr)}};
  if (t.best_episode) {
    const Episode& b = t.episodes.at(static_cast<std::size_t>(*t.best_episode));
    r["best_architecture"] = architecture_to_json(b.arch);
    r["best_reward"] = b.reward;
    r["best_latency_s"] = b.latency_s;
    r["best_accuracy"] = b.accuracy ? Json(*b.accuracy) : Json(nullptr);
  }
  return r;
}

}  // namespace

SearchTrace run_search(const SearchConfig& config, const DeviceProfile& device,
                       const AccuracyOracle& oracle, LatencyEvaluator* shared_latency,
                       const TraceObserver& observer) {
  check_search_config(config);
  check_profile(device);
  std::optional<LatencyEvaluator> own;
  LatencyEvaluator* latency = shared_latency;
  if (!latency) latency = &own.emplace(device, config.ga);

  auto emit = [&](const Json& record) {
    if (observer) observer(record);
  };

  SearchTrace trace;
  trace.config = config;
  trace.device = device;
  emit(header_record(config, device));

  const ActionSpace& space = config.space;
  const double rL_s = config.rL_ms / 1000.0;
  Controller controller =
      Controller::for_space(space, config.controller_hidden, derive_seed(config.seed, 0, 0));
  // One early-stage run per architecture: every episode shares the oracle seed.
  const std::uint64_t oracle_seed = derive_seed(config.seed, 2, 0);
  std::optional<double> baseline;
  std::vector<Rollout> batch;
  int next = 0;

  auto run_phase = [&](int phase, int count, const auto& make_arch) {
    const std::size_t sequence = static_cast<std::size_t>(phase - 1);
    PhaseSummary summary{phase, next, 0, std::nullopt};
    emit(phase_start_record(phase));
    for (int i = 0; i < count; ++i, ++next) {
      const auto idx = static_cast<std::uint64_t>(next);
      std::mt19937_64 rng(derive_seed(config.seed, 1, idx));
      Controller::Sample s = controller.sample(sequence, rng);
      Episode e = evaluate_episode(make_arch(s.actions), oracle, *latency, rL_s, baseline,
                                   oracle_seed, config.mode);
      e.index = next;
      e.phase = phase;
      e.actions = std::move(s.actions);
      e.log_probs = std::move(s.log_probs);

      if (e.accuracy) {
        baseline = update_baseline(baseline.value_or(*e.accuracy), *e.accuracy,
                                   config.baseline_decay);
      }
      if (!e.failed) batch.push_back({sequence, e.actions, e.reward});
      if (batch.size() == static_cast<std::size_t>(config.batch_size)) {
        reinforce_update(controller, batch, config.learning_rate);
        batch.clear();
      }
      if (e.feasible() &&
          (!summary.best_episode ||
           e.reward > trace.episodes[static_cast<std::size_t>(*summary.best_episode)].reward)) {
        summary.best_episode = next;
      }
      trace.episodes.push_back(e);
      ++summary.episode_count;
      emit(episode_to_json(trace.episodes.back()));
    }
    if (!batch.empty()) {
      reinforce_update(controller, batch, config.learning_rate);
      batch.clear();
    }
    trace.phases.push_back(summary);
    emit(phase_end_record(summary));
  };

  run_phase(1, config.phase1_episodes, [&](const std::vector<int>& a) {
    return make_architecture(space.depths.at(static_cast<std::size_t>(a.at(0))),
                             space.phase1_hidden, space.phase1_hidden * space.phase1_multiplier,
                             space.seq_len);
  });
  trace.phase1_depth = select_depth(trace.episodes);

  if (trace.phase1_depth) {
    const std::int64_t depth = *trace.phase1_depth;
    run_phase(2, config.phase2_episodes, [&](const std::vector<int>& a) {
      const std::int64_t h = space.hidden_sizes.at(static_cast<std::size_t>(a.at(0)));
      const std::int64_t m = space.intermediate_multipliers.at(static_cast<std::size_t>(a.at(1)));
      return make_architecture(depth, h, h * m, space.seq_len);
    });
  }

  for (const PhaseSummary& p : trace.phases) {
    if (!p.best_episode) continue;
    const double r = trace.episodes[static_cast<std::size_t>(*p.best_episode)].reward;
    if (!trace.best_episode ||
        r > trace.episodes[static_cast<std::size_t>(*trace.best_episode)].reward) {
      trace.best_episode = p.best_episode;
    }
  }
  emit(summary_record(trace));
  return trace;
}

SearchTrace run_search(const SearchConfig& config, const std::string& base_dir) {
  const DeviceProfile device = load_profile(resolve_profile_path(config.profile, base_dir));
  const std::unique_ptr<AccuracyOracle> oracle = make_oracle(config.oracle);
  return run_search(config, device, *oracle);
}

SearchTrace replay_search(const SearchTrace& recorded) {
  const std::unique_ptr<AccuracyOracle> oracle = make_oracle(recorded.config.oracle);
  return run_search(recorded.config, recorded.device, *oracle);
}

// ---------------------------------------------------------------------------
// Trace records

Json architecture_to_json(const ArchitectureConfig& a) {
  return {{"blocks", a.num_blocks},          {"hidden", a.hidden_size},
          {"heads", a.num_heads},            {"intermediate", a.intermediate_size},
          {"seq_len", a.seq_len},            {"vocab", a.vocab_size}};
}

ArchitectureConfig architecture_from_json(const Json& v, const std::string& path) {
  reject_unknown(v, {"blocks", "hidden", "heads", "intermediate", "seq_len", "vocab"}, path);
  ArchitectureConfig a =
      make_architecture(get_as<std::int64_t>(require(v, "blocks", path), child_path(path, "blocks")),
                        get_as<std::int64_t>(require(v, "hidden", path), child_path(path, "hidden")));
  read_opt(v, "heads", path, a.num_heads);
  read_opt(v, "intermediate", path, a.intermediate_size);
  read_opt(v, "seq_len", path, a.seq_len);
  read_opt(v, "vocab", path, a.vocab_size);
  check_architecture(a);
  return a;
}

Json episode_to_json(const Episode& e) {
  return {{"type", "episode"},
          {"index", e.index},
          {"phase", e.phase},
          {"actions", e.actions},
          {"log_probs", e.log_probs},
          {"arch", architecture_to_json(e.arch)},
          {"accuracy", e.accuracy ? Json(*e.accuracy) : Json(nullptr)},
          {"latency_s", e.latency_s},
          {"reward", e.reward},
          {"baseline", e.baseline},
          {"terminated_early", e.terminated_early},
          {"failed", e.failed},
          {"error", e.error},
          {"seed", e.seed}};
}

Episode episode_from_json(const Json& r, const std::string& path) {
  auto field = [&](std::string_view k) -> const Json& { return require(r, k, path); };
  auto at = [&](std::string_view k) { return child_path(path, k); };
  Episode e;
  e.index = get_as<int>(field("index"), at("index"));
  e.phase = get_as<int>(field("phase"), at("phase"));
  e.actions = get_as<std::vector<int>>(field("actions"), at("actions"));
  e.log_probs = get_as<std::vector<double>>(field("log_probs"), at("log_probs"));
  e.arch = architecture_from_json(field("arch"), at("arch"));
  if (const Json& a = field("accuracy"); !a.is_null()) e.accuracy = get_as<double>(a, at("accuracy"));
  e.latency_s = get_as<double>(field("latency_s"), at("latency_s"));
  e.reward = get_as<double>(field("reward"), at("reward"));
  e.baseline = get_as<double>(field("baseline"), at("baseline"));
  e.terminated_early = get_as<bool>(field("terminated_early"), at("terminated_early"));
  e.failed = get_as<bool>(field("failed"), at("failed"));
  e.error = get_as<std::string>(field("error"), at("error"));
  e.seed = get_as<std::uint64_t>(field("seed"), at("seed"));
  if (e.actions.size() != e.log_probs.size()) {
    throw ParseError(at("log_probs"), "expected one log-probability per action");
  }
  if (e.terminated_early && e.accuracy) {
    throw ParseError(at("accuracy"), "early-terminated episode carries an accuracy");
  }
  return e;
}

std::vector<Json> trace_records(const SearchTrace& t) {
  std::vector<Json> out;
  out.push_back(header_record(t.config, t.device));
  for (const PhaseSummary& p : t.phases) {
    out.push_back(phase_start_record(p.phase));
    for (int i = 0; i < p.episode_count; ++i) {
      out.push_back(episode_to_json(t.episodes.at(static_cast<std::size_t>(p.first_episode + i))));
    }
    out.push_back(phase_end_record(p));
  }
  out.push_back(summary_record(t));
  return out;
}

std::string trace_to_jsonl(const SearchTrace& t) {
  std::string out;
  for (const Json& r : trace_records(t)) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

SearchTrace trace_from_jsonl(std::string_view text) {
  SearchTrace t;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_header = false, have_summary = false;
  int open_phase = 0;  // 0: between phases
  auto where = [&] { return "line " + std::to_string(line_no); };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json r;
    try {
      r = parse_json(line);
    } catch (const ParseError& e) {
      throw ParseError(where(), e.what());
    }
    if (have_summary) throw ParseError(where(), "record after the summary");
    if (!have_header) {
      check_document(r, "search_trace");
      if (get_as<std::string>(require(r, "type", where()), where()) != "header") {
        throw ParseError(where(), "first record must be the header");
      }
      t.config = search_config_from_json(require(r, "config", where()));
      t.device = profile_from_json(require(r, "device", where()));
      have_header = true;
      continue;
    }
    const std::string type = get_as<std::string>(require(r, "type", where()), where() + "/type");
    if (type == "phase_start") {
      if (open_phase != 0) throw ParseError(where(), "phase_start inside an open phase");
      PhaseSummary p;
      p.phase = get_as<int>(require(r, "phase", where()), where() + "/phase");
      p.first_episode = static_cast<int>(t.episodes.size());
      t.phases.push_back(p);
      open_phase = p.phase;
      if (open_phase < 1) throw ParseError(where() + "/phase", "phase must be >= 1");
    } else if (type == "episode") {
      if (open_phase == 0) throw ParseError(where(), "episode outside a phase");
      Episode e = episode_from_json(r, where());
      if (e.index != static_cast<int>(t.episodes.size()) || e.phase != open_phase) {
        throw ParseError(where(), "episode index or phase out of sequence");
      }
      t.episodes.push_back(std::move(e));
      ++t.phases.back().episode_count;
    } else if (type == "phase_end") {
      if (open_phase == 0) throw ParseError(where(), "phase_end without phase_start");
      const Json& best = require(r, "best_episode", where());
      if (!best.is_null()) t.phases.back().best_episode = get_as<int>(best, where() + "/best_episode");
      open_phase = 0;
    } else if (type == "summary") {
      if (open_phase != 0) throw ParseError(where(), "summary inside an open phase");
      const Json& best = require(r, "best_episode", where());
      if (!best.is_null()) {
        const int b = get_as<int>(best, where() + "/best_episode");
        if (b < 0 || b >= static_cast<int>(t.episodes.size())) {
          throw ParseError(where() + "/best_episode", "no such episode");
        }
        t.best_episode = b;
      }
      const Json& depth = require(r, "phase1_depth", where());
      if (!depth.is_null()) t.phase1_depth = get_as<std::int64_t>(depth, where() + "/phase1_depth");
      have_summary = true;
    } else {
      throw ParseError(where() + "/type", "unknown record type \"" + type + "\"");
    }
  }
  if (!have_header) throw ParseError("line 1", "empty trace");
  if (!have_summary) throw ParseError(where(), "trace ends without a summary record");
  return t;
}

std::optional<std::string> first_difference(const SearchTrace& a, const SearchTrace& b) {
  const std::vector<Json> ra = trace_records(a);
  const std::vector<Json> rb = trace_records(b);
  const std::size_t n = std::min(ra.size(), rb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ra[i] != rb[i]) return "record " + std::to_string(i + 1) + " differs";
  }
  if (ra.size() != rb.size()) {
    return "record counts differ (" + std::to_string(ra.size()) + " vs " +
           std::to_string(rb.size()) + ")";
  }
  return std::nullopt;
}

}  // namespace canao
