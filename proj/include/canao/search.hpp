#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "canao/bert.hpp"
#include "canao/json_io.hpp"
#include "canao/perf_model.hpp"

namespace canao {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Action space and reward

struct ActionSpace {
  std::vector<std::int64_t> depths;                    // phase 1
  std::vector<std::int64_t> hidden_sizes;              // phase 2
  std::vector<std::int64_t> intermediate_multipliers;  // phase 2, times hidden
  std::int64_t phase1_hidden = 512;
  std::int64_t phase1_multiplier = 4;
  std::int64_t seq_len = 128;

  // Depths 4..28 step 2; hidden 256..1024 step 64; multipliers {2, 3, 4}.
  static ActionSpace defaults();
  bool operator==(const ActionSpace&) const = default;
};

// Throws ConfigError when a choice list is empty or a hidden size breaks the
// architecture constraints.
void check_action_space(const ActionSpace& space);

// Accuracy is ignored above the latency budget. Throws ConfigError for a
// non-positive budget and NumericError when a required input is missing or
// out of range.
double reward(std::optional<double> accuracy, double latency_s, double rL_s, double baseline);

// decay * b + (1 - decay) * accuracy. Throws ConfigError unless 0 < decay < 1.
double update_baseline(double baseline, double accuracy, double decay);

// ---------------------------------------------------------------------------
// Recurrent policy

// Tanh RNN emitting one categorical decision per slot. A sequence is an
// ordered list of slots sampled in one rollout; the first input is a start
// token and each later input is the previous decision.
class Controller {
 public:
  Controller(std::vector<int> slot_sizes, std::vector<std::vector<int>> sequences,
             int hidden_width, std::uint64_t seed);
  // Sequence 0: depth. Sequence 1: hidden size, then intermediate multiplier.
  static Controller for_space(const ActionSpace& space, int hidden_width, std::uint64_t seed);

  struct Sample {
    std::vector<int> actions;
    std::vector<double> log_probs;
  };

  std::size_t sequence_count() const { return sequences_.size(); }
  const std::vector<int>& sequence(std::size_t s) const { return sequences_.at(s); }
  int slot_size(int slot) const { return slot_sizes_.at(static_cast<std::size_t>(slot)); }

  Sample sample(std::size_t sequence, std::mt19937_64& rng) const;
  // Distribution over the next slot given the decisions made so far.
  std::vector<double> probabilities(std::size_t sequence, std::span<const int> prefix) const;
  double log_prob(std::size_t sequence, std::span<const int> actions) const;
  // Gradient of the summed log-probabilities with respect to parameters().
  std::vector<double> log_prob_gradient(std::size_t sequence, std::span<const int> actions) const;

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

 private:
  struct Layout {
    std::size_t wx, wh, bh;
    std::vector<std::size_t> head_w, head_b;
  };
  struct Forward;

  Forward forward(std::size_t sequence, std::span<const int> actions) const;
  int token(int slot, int choice) const;

  std::vector<int> slot_sizes_;
  std::vector<std::vector<int>> sequences_;
  std::vector<int> token_offset_;
  int hidden_ = 0;
  int vocab_ = 0;
  Layout layout_;
  std::vector<double> params_;
};

struct Rollout {
  std::size_t sequence = 0;
  std::vector<int> actions;
  double reward = 0.0;
};

// Mean over rollouts of sum_t log p(a_t) * R.
double reinforce_objective(const Controller& controller, std::span<const Rollout> batch);
std::vector<double> reinforce_gradient(const Controller& controller, std::span<const Rollout> batch);
// One ascent step. Throws NumericError on a non-finite gradient or an empty batch.
void reinforce_update(Controller& controller, std::span<const Rollout> batch, double learning_rate);

// ---------------------------------------------------------------------------
// Accuracy oracles

enum class Task { MRPC, STSB, RTE };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);  // throws ConfigError

struct AccuracyAnchor {
  std::int64_t blocks = 0;
  std::int64_t hidden = 0;
  int flops_group = 0;  // GFLOPs label shared by the pair compared
  double mrpc = 0.0, stsb = 0.0, rte = 0.0;

  double accuracy(Task task) const;
};

// Eight architectures, two per FLOPs group, deep-narrow first.
std::span<const AccuracyAnchor> accuracy_anchors();

// a(L, H) = a_max - c1 exp(-alpha L) - c2 exp(-beta H)
struct SurrogateModel {
  double a_max = 0.0, c1 = 0.0, alpha = 0.0, c2 = 0.0, beta = 0.0;
  double rms_error = 0.0;

  double mean(std::int64_t blocks, std::int64_t hidden) const;
};

// Least-squares fit over an (alpha, beta) grid with c1 > 0 and c2 >= 0,
// restricted to fits that keep every within-group ordering. Cached per task.
const SurrogateModel& fit_surrogate(Task task);

// Zero-mean noise of magnitude sigma * (1 - epochs / full_epochs), seeded
// from (architecture, task, epochs, seed); clamped to [0, 1].
double surrogate_accuracy(const ArchitectureConfig& arch, Task task, int epochs, int full_epochs,
                          std::uint64_t seed, double sigma = 0.005);

class AccuracyOracle {
 public:
  virtual ~AccuracyOracle() = default;
  // nullopt when stopped before producing a result. Throws OracleError.
  virtual std::optional<double> evaluate(const ArchitectureConfig& arch, std::uint64_t seed,
                                         std::stop_token stop) const = 0;
};

class SurrogateOracle final : public AccuracyOracle {
 public:
  SurrogateOracle(Task task, int epochs, int full_epochs, double sigma);
  std::optional<double> evaluate(const ArchitectureConfig& arch, std::uint64_t seed,
                                 std::stop_token stop) const override;

 private:
  Task task_;
  int epochs_, full_epochs_;
  double sigma_;
};

// Runs `<command> <blocks> <hidden> <intermediate> <seed>` through the shell
// and reads one accuracy in [0, 1] from its standard output.
class ExternalCommandOracle final : public AccuracyOracle {
 public:
  explicit ExternalCommandOracle(std::string command);
  std::optional<double> evaluate(const ArchitectureConfig& arch, std::uint64_t seed,
                                 std::stop_token stop) const override;

 private:
  std::string command_;
};

// ---------------------------------------------------------------------------
// Latency feedback

// Build, fuse, tune and estimate; memoized per architecture, thread safe.
class LatencyEvaluator {
 public:
  LatencyEvaluator(DeviceProfile device, GaConfig ga);

  double operator()(const ArchitectureConfig& arch);
  std::optional<double> cached(const ArchitectureConfig& arch) const;
  std::size_t evaluations() const;
  const DeviceProfile& device() const { return device_; }
  const GaConfig& ga() const { return ga_; }

  static double compute(const ArchitectureConfig& arch, const DeviceProfile& device,
                        const GaConfig& ga);

 private:
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, std::int64_t,
                         std::int64_t>;
  static Key key(const ArchitectureConfig& arch);
  DeviceProfile device_;
  GaConfig ga_;
  mutable std::mutex mu_;
  std::map<Key, double> cache_;
  std::size_t evaluations_ = 0;
};

// ---------------------------------------------------------------------------
// Episodes and the two-phase search

struct Episode {
  int index = 0;
  int phase = 1;
  std::vector<int> actions;
  std::vector<double> log_probs;
  ArchitectureConfig arch;
  std::optional<double> accuracy;
  double latency_s = 0.0;
  double reward = 0.0;
  double baseline = 0.0;  // baseline the reward was computed against
  bool terminated_early = false;
  bool failed = false;
  std::string error;
  std::uint64_t seed = 0;

  bool feasible() const { return !terminated_early && !failed; }
  bool operator==(const Episode&) const = default;
};

// Concurrent runs latency and accuracy side by side and cancels the accuracy
// branch once the latency misses the budget (an already cached miss skips the
// oracle); Sequential only consults the oracle for feasible architectures.
enum class EvalMode { Concurrent, Sequential };

// Fills arch, accuracy, latency, reward, baseline and the status flags. An
// unset baseline is initialised from the episode's own accuracy.
Episode evaluate_episode(const ArchitectureConfig& arch, const AccuracyOracle& oracle,
                         LatencyEvaluator& latency, double rL_s, std::optional<double> baseline,
                         std::uint64_t seed, EvalMode mode = EvalMode::Concurrent);

struct OracleConfig {
  std::string type = "surrogate";  // or "command"
  Task task = Task::MRPC;
  int epochs = 2;
  int full_epochs = 3;
  double sigma = 0.005;
  std::string command;

  bool operator==(const OracleConfig&) const = default;
};

struct SearchConfig {
  double rL_ms = kUnbounded;
  ActionSpace space = ActionSpace::defaults();
  int phase1_episodes = 100;
  int phase2_episodes = 100;
  int batch_size = 5;
  double learning_rate = 0.05;
  double baseline_decay = 0.9;
  int controller_hidden = 32;
  OracleConfig oracle;
  GaConfig ga{8, 4, 0.1, 0, 0};
  std::string profile = "cpu.json";
  std::uint64_t seed = 0;
  EvalMode mode = EvalMode::Concurrent;

  bool operator==(const SearchConfig&) const = default;
};

Json search_config_to_json(const SearchConfig& config);
SearchConfig search_config_from_json(const Json& doc);
SearchConfig load_search_config(const std::string& path);

// Absolute or existing relative paths are kept; bare names fall back to
// $CANAO_PROFILE_DIR and then the bundled profile directory.
std::string resolve_profile_path(const std::string& path, const std::string& base_dir = "");

std::unique_ptr<AccuracyOracle> make_oracle(const OracleConfig& config);

struct PhaseSummary {
  int phase = 1;
  int first_episode = 0;
  int episode_count = 0;
  std::optional<int> best_episode;  // highest reward among feasible episodes
};

struct SearchTrace {
  SearchConfig config;
  DeviceProfile device;
  std::vector<Episode> episodes;
  std::vector<PhaseSummary> phases;
  std::optional<std::int64_t> phase1_depth;
  std::optional<int> best_episode;

  bool feasible() const { return best_episode.has_value(); }
};

// Phase-1 winner: the depth with the highest mean accuracy over its feasible
// episodes (ties go to the deeper model).
std::optional<std::int64_t> select_depth(std::span<const Episode> phase1);

using TraceObserver = std::function<void(const Json& record)>;

// Runs phase 1 then phase 2. A shared evaluator lets several searches reuse
// latency results.
SearchTrace run_search(const SearchConfig& config, const DeviceProfile& device,
                       const AccuracyOracle& oracle, LatencyEvaluator* shared_latency = nullptr,
                       const TraceObserver& observer = {});
SearchTrace run_search(const SearchConfig& config, const std::string& base_dir = "");

// One JSON record per line: header, phase markers, episodes, summary.
std::vector<Json> trace_records(const SearchTrace& trace);
std::string trace_to_jsonl(const SearchTrace& trace);
SearchTrace trace_from_jsonl(std::string_view text);

Json episode_to_json(const Episode& episode);
Episode episode_from_json(const Json& record, const std::string& path);

// Reruns the recorded configuration on the recorded device profile.
SearchTrace replay_search(const SearchTrace& recorded);
// Description of the first record that differs, or nullopt when identical.
std::optional<std::string> first_difference(const SearchTrace& a, const SearchTrace& b);

Json architecture_to_json(const ArchitectureConfig& arch);
ArchitectureConfig architecture_from_json(const Json& value, const std::string& path);

}  // namespace canao
