#include <algorithm>
#include <numeric>
#include <random>
#include <thread>

#include "canao/error.hpp"
#include "canao/perf_model.hpp"
#include "canao/rng.hpp"

namespace canao {

namespace {

using Genome = std::vector<int>;

constexpr int kDuplicateRetries = 4;

struct Slot {
  const LatencyModel::Block* block = nullptr;
  const BlockSpace* space = nullptr;
  std::size_t offset = 0;  // version, tiles..., unroll
};

class Tuner {
 public:
  Tuner(const LatencyModel& model, const DeviceProfile& device, const TuningSpace& space)
      : model_(model), device_(device), base_(model.default_tuning()) {
    for (const BlockSpace& s : space.blocks) {
      if (s.versions.empty() || s.unrolls.empty() ||
          std::any_of(s.tiles.begin(), s.tiles.end(), [](const auto& t) { return t.empty(); })) {
        throw TuningError("empty search space for block " + std::to_string(s.block_id));
      }
      const auto it = std::find_if(model.blocks().begin(), model.blocks().end(),
                                   [&](const auto& b) { return b.nest.block_id == s.block_id; });
      if (it == model.blocks().end()) {
        throw TuningError("search space names unknown block " + std::to_string(s.block_id));
      }
      if (s.tiles.size() != it->nest.extents.size()) {
        throw TuningError("block " + std::to_string(s.block_id) + ": tile lists do not match loops");
      }
      slots_.push_back({&*it, &s, width_});
      width_ += 2 + s.tiles.size();
    }
    if (slots_.empty()) throw TuningError("empty search space");
    arity_.assign(width_, 0);
    for (const Slot& s : slots_) {
      arity_[s.offset] = static_cast<int>(s.space->versions.size());
      for (std::size_t l = 0; l < s.space->tiles.size(); ++l) {
        arity_[s.offset + 1 + l] = static_cast<int>(s.space->tiles[l].size());
      }
      arity_[s.offset + 1 + s.space->tiles.size()] = static_cast<int>(s.space->unrolls.size());
    }
    model_.check(base_);
    fixed_s_ = 0.0;
    for (const auto& b : model.blocks()) {
      const bool tuned = std::any_of(slots_.begin(), slots_.end(),
                                     [&](const Slot& s) { return s.block == &b; });
      if (!tuned) fixed_s_ += total(model.block_latency(b, base_.blocks.at(b.nest.block_id), device));
    }
  }

  std::size_t width() const { return width_; }
  int arity(std::size_t gene) const { return arity_[gene]; }

  // Genes pointing at the untuned choice, or the first option when the
  // default is not in the space.
  Genome default_genome() const {
    Genome g(width_, 0);
    for (const Slot& s : slots_) {
      const BlockTuning& t = base_.blocks.at(s.block->nest.block_id);
      g[s.offset] = index_of(s.space->versions, t.version);
      for (std::size_t l = 0; l < s.space->tiles.size(); ++l) {
        g[s.offset + 1 + l] = index_of(s.space->tiles[l], t.tiles[l]);
      }
      g[s.offset + 1 + s.space->tiles.size()] = index_of(s.space->unrolls, t.unroll);
    }
    return g;
  }

  TuningConfig decode(const Genome& g) const {
    TuningConfig t = base_;
    for (const Slot& s : slots_) t.blocks[s.block->nest.block_id] = choice(s, g);
    return t;
  }

  double fitness(const Genome& g) const {
    double sum = fixed_s_;
    for (const Slot& s : slots_) sum += total(model_.block_latency(*s.block, choice(s, g), device_));
    return sum;
  }

 private:
  static double total(const BlockLatency& l) { return std::max(l.compute_s, l.memory_s) + l.overhead_s; }

  template <typename T, typename U>
  static int index_of(const std::vector<T>& options, U value) {
    const auto it = std::find(options.begin(), options.end(), static_cast<T>(value));
    return it == options.end() ? 0 : static_cast<int>(it - options.begin());
  }

  static BlockTuning choice(const Slot& s, const Genome& g) {
    BlockTuning t;
    t.version = s.space->versions[static_cast<std::size_t>(g[s.offset])];
    for (std::size_t l = 0; l < s.space->tiles.size(); ++l) {
      t.tiles.push_back(s.space->tiles[l][static_cast<std::size_t>(g[s.offset + 1 + l])]);
    }
    t.unroll = s.space->unrolls[static_cast<std::size_t>(g[s.offset + 1 + s.space->tiles.size()])];
    return t;
  }

  const LatencyModel& model_;
  const DeviceProfile& device_;
  TuningConfig base_;
  std::vector<Slot> slots_;
  std::vector<int> arity_;
  std::size_t width_ = 0;
  double fixed_s_ = 0.0;
};

void evaluate(const Tuner& tuner, const std::vector<Genome>& genomes, std::vector<double>& out,
              std::size_t first, int threads) {
  const std::size_t n = genomes.size();
  auto work = [&](std::size_t start, std::size_t stride) {
    for (std::size_t i = first + start; i < n; i += stride) out[i] = tuner.fitness(genomes[i]);
  };
  const std::size_t t = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(threads), n - std::min(n, first)));
  if (t == 1) {
    work(0, 1);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t k = 0; k < t; ++k) pool.emplace_back(work, k, t);
}

}  // namespace

GaResult ga_tune(const LatencyModel& model, const DeviceProfile& device, const TuningSpace& space,
                 const GaConfig& config) {
  check_profile(device);
  if (config.population < 2) throw TuningError("population must be at least 2");
  if (config.generations < 0) throw TuningError("generations must be non-negative");
  if (!(config.mutation_rate >= 0.0 && config.mutation_rate <= 1.0)) {
    throw TuningError("mutation rate must lie in [0, 1]");
  }
  const Tuner tuner(model, device, space);
  const int threads = config.threads > 0
                          ? config.threads
                          : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  GaResult result;
  Genome best = tuner.default_genome();
  double best_fit = tuner.fitness(best);
  if (config.generations == 0) {
    result.best = tuner.decode(best);
    result.best_latency_s = best_fit;
    result.history.push_back(best_fit);
    return result;
  }

  const auto pop = static_cast<std::size_t>(config.population);
  auto random_gene = [&](std::mt19937_64& rng, std::size_t gene) {
    return std::uniform_int_distribution<int>(0, tuner.arity(gene) - 1)(rng);
  };

  std::vector<Genome> population(pop);
  std::vector<double> fit(pop);
  population[0] = best;
  for (std::size_t i = 1; i < pop; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, 0, i));
    population[i].resize(tuner.width());
    for (std::size_t k = 0; k < tuner.width(); ++k) population[i][k] = random_gene(rng, k);
  }
  fit[0] = best_fit;
  evaluate(tuner, population, fit, 1, threads);

  auto record = [&]() {
    for (std::size_t i = 0; i < pop; ++i) {
      if (fit[i] < best_fit) best_fit = fit[i], best = population[i];
    }
    result.history.push_back(best_fit);
  };
  record();

  for (int g = 1; g < config.generations; ++g) {
    std::vector<Genome> next(pop);
    next[0] = best;
    auto tournament = [&](std::mt19937_64& rng) -> const Genome& {
      std::uniform_int_distribution<std::size_t> pick(0, pop - 1);
      const std::size_t a = pick(rng), b = pick(rng);
      return fit[b] < fit[a] ? population[b] : population[a];
    };
    for (std::size_t i = 1; i < pop; ++i) {
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(g), i));
      const Genome& p1 = tournament(rng);
      const Genome& p2 = tournament(rng);
      std::bernoulli_distribution coin(0.5), mutate(config.mutation_rate);
      Genome child(tuner.width());
      for (std::size_t k = 0; k < child.size(); ++k) {
        child[k] = coin(rng) ? p1[k] : p2[k];
        if (mutate(rng)) child[k] = random_gene(rng, k);
      }
      // Duplicates waste an evaluation; nudge them to an unseen neighbour.
      std::uniform_int_distribution<std::size_t> any_gene(0, child.size() - 1);
      for (int attempt = 0; attempt < kDuplicateRetries; ++attempt) {
        if (std::find(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(i), child) ==
            next.begin() + static_cast<std::ptrdiff_t>(i)) {
          break;
        }
        const std::size_t k = any_gene(rng);
        child[k] = random_gene(rng, k);
      }
      next[i] = std::move(child);
    }
    population = std::move(next);
    fit[0] = best_fit;
    evaluate(tuner, population, fit, 1, threads);
    record();
  }
  result.best = tuner.decode(best);
  result.best_latency_s = best_fit;
  return result;
}

GaResult ga_tune(const FusedGraph& fused, const DeviceProfile& device, const GaConfig& config) {
  const LatencyModel model(fused);
  return ga_tune(model, device, full_space(model), config);
}

}  // namespace canao
