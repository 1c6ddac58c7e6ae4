#include <array>
#include <cmath>
#include <cstdio>
#include <mutex>

#include <Eigen/Dense>

#include "canao/error.hpp"
#include "canao/rng.hpp"
#include "canao/search.hpp"

namespace canao {

namespace {

// Percent accuracies; pairs share a FLOPs group, deeper model first.
constexpr std::array<AccuracyAnchor, 8> kAnchors{{
    {12, 768, 22, 91.83, 89.40, 66.43},
    {7, 1024, 22, 88.61, 87.72, 64.15},
    {12, 512, 10, 89.70, 88.06, 66.78},
    {6, 768, 10, 87.81, 88.02, 63.90},
    {10, 512, 8, 87.86, 87.52, 63.89},
    {5, 768, 8, 83.85, 86.71, 57.76},
    {24, 256, 6, 88.80, 85.83, 66.24},
    {6, 512, 6, 85.17, 85.82, 61.37},
}};

constexpr int kGridSize = 160;
constexpr double kAlphaLo = 1e-3, kAlphaHi = 2.0;
constexpr double kBetaLo = 1e-5, kBetaHi = 1e-1;

double log_grid(int i, double lo, double hi) {
  const double t = static_cast<double>(i) / (kGridSize - 1);
  return lo * std::pow(hi / lo, t);
}

bool keeps_orderings(const SurrogateModel& m, Task task) {
  for (std::size_t i = 0; i + 1 < kAnchors.size(); i += 2) {
    const AccuracyAnchor& deep = kAnchors[i];
    const AccuracyAnchor& wide = kAnchors[i + 1];
    const bool published = deep.accuracy(task) > wide.accuracy(task);
    const bool fitted = m.mean(deep.blocks, deep.hidden) > m.mean(wide.blocks, wide.hidden);
    if (published != fitted) return false;
  }
  return true;
}

SurrogateModel fit(Task task) {
  const auto n = static_cast<Eigen::Index>(kAnchors.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = kAnchors[static_cast<std::size_t>(i)].accuracy(task);

  SurrogateModel best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int ia = 0; ia < kGridSize; ++ia) {
    const double alpha = log_grid(ia, kAlphaLo, kAlphaHi);
    for (int ib = 0; ib < kGridSize; ++ib) {
      const double beta = log_grid(ib, kBetaLo, kBetaHi);
      Eigen::MatrixXd x(n, 3);
      for (Eigen::Index i = 0; i < n; ++i) {
        const AccuracyAnchor& a = kAnchors[static_cast<std::size_t>(i)];
        x(i, 0) = 1.0;
        x(i, 1) = -std::exp(-alpha * static_cast<double>(a.blocks));
        x(i, 2) = -std::exp(-beta * static_cast<double>(a.hidden));
      }
      // Active sets: both exponentials, or the depth term alone.
      for (int cols : {3, 2}) {
        const Eigen::MatrixXd sub = x.leftCols(cols);
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
        if (qr.rank() < cols) continue;
        const Eigen::VectorXd c = qr.solve(y);
        if (!(c(1) > 0.0) || (cols == 3 && c(2) < 0.0)) continue;
        SurrogateModel m{c(0), c(1), alpha, cols == 3 ? c(2) : 0.0, beta, 0.0};
        const double sse = (sub * c - y).squaredNorm();
        if (sse < best_sse && keeps_orderings(m, task)) {
          best_sse = sse;
          m.rms_error = std::sqrt(sse / static_cast<double>(n));
          best = m;
        }
      }
    }
  }
  if (!std::isfinite(best_sse)) {
    throw CalibrationError("no surrogate fit preserves the anchor orderings for " +
                           std::string(to_string(task)));
  }
  // Percent to fraction.
  best.a_max /= 100.0;
  best.c1 /= 100.0;
  best.c2 /= 100.0;
  best.rms_error /= 100.0;
  return best;
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::MRPC: return "MRPC";
    case Task::STSB: return "STS-B";
    case Task::RTE: return "RTE";
  }
  return "?";
}

Task task_from_string(std::string_view name) {
  if (name == "MRPC") return Task::MRPC;
  if (name == "STS-B") return Task::STSB;
  if (name == "RTE") return Task::RTE;
  throw ConfigError("unknown task \"" + std::string(name) + "\" (expected MRPC, STS-B or RTE)");
}

double AccuracyAnchor::accuracy(Task task) const {
  switch (task) {
    case Task::MRPC: return mrpc;
    case Task::STSB: return stsb;
    case Task::RTE: return rte;
  }
  return 0.0;
}

std::span<const AccuracyAnchor> accuracy_anchors() { return kAnchors; }

double SurrogateModel::mean(std::int64_t blocks, std::int64_t hidden) const {
  return a_max - c1 * std::exp(-alpha * static_cast<double>(blocks)) -
         c2 * std::exp(-beta * static_cast<double>(hidden));
}

const SurrogateModel& fit_surrogate(Task task) {
  static std::once_flag once;
  static std::array<SurrogateModel, 3> fits;
  std::call_once(once, [] {
    for (Task t : {Task::MRPC, Task::STSB, Task::RTE}) fits[static_cast<std::size_t>(t)] = fit(t);
  });
  return fits[static_cast<std::size_t>(task)];
}

double surrogate_accuracy(const ArchitectureConfig& arch, Task task, int epochs, int full_epochs,
                          std::uint64_t seed, double sigma) {
  check_architecture(arch);
  if (full_epochs < 1 || epochs < 1 || epochs > full_epochs) {
    throw ConfigError("surrogate epochs must satisfy 1 <= epochs <= full_epochs");
  }
  if (!(sigma >= 0.0)) throw ConfigError("surrogate sigma must be non-negative");
  double a = fit_surrogate(task).mean(arch.num_blocks, arch.hidden_size);
  const double scale = sigma * (1.0 - static_cast<double>(epochs) / full_epochs);
  if (scale > 0.0) {
    std::uint64_t key = splitmix(seed);
    for (auto v : {arch.num_blocks, arch.hidden_size, arch.intermediate_size, arch.seq_len,
                   static_cast<std::int64_t>(task), static_cast<std::int64_t>(epochs)}) {
      key = splitmix(key ^ static_cast<std::uint64_t>(v));
    }
    std::mt19937_64 rng(key);
    a += std::normal_distribution<double>(0.0, scale)(rng);
  }
  return std::clamp(a, 0.0, 1.0);
}

SurrogateOracle::SurrogateOracle(Task task, int epochs, int full_epochs, double sigma)
    : task_(task), epochs_(epochs), full_epochs_(full_epochs), sigma_(sigma) {
  if (full_epochs < 1 || epochs < 1 || epochs > full_epochs) {
    throw ConfigError("surrogate epochs must satisfy 1 <= epochs <= full_epochs");
  }
  fit_surrogate(task);
}

std::optional<double> SurrogateOracle::evaluate(const ArchitectureConfig& arch, std::uint64_t seed,
                                                std::stop_token stop) const {
  if (stop.stop_requested()) return std::nullopt;
  return surrogate_accuracy(arch, task_, epochs_, full_epochs_, seed, sigma_);
}

ExternalCommandOracle::ExternalCommandOracle(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw ConfigError("external oracle needs a command");
}

std::optional<double> ExternalCommandOracle::evaluate(const ArchitectureConfig& arch,
                                                      std::uint64_t seed,
                                                      std::stop_token stop) const {
  if (stop.stop_requested()) return std::nullopt;
  const std::string cmd = command_ + " " + std::to_string(arch.num_blocks) + " " +
                          std::to_string(arch.hidden_size) + " " +
                          std::to_string(arch.intermediate_size) + " " + std::to_string(seed);
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw OracleError("cannot launch \"" + command_ + "\"");
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  if (status != 0) {
    throw OracleError("\"" + command_ + "\" exited with status " + std::to_string(status));
  }
  if (stop.stop_requested()) return std::nullopt;
  std::size_t used = 0;
  double a = 0.0;
  try {
    a = std::stod(out, &used);
  } catch (const std::exception&) {
    throw OracleError("\"" + command_ + "\" printed no accuracy");
  }
  if (!(a >= 0.0 && a <= 1.0)) {
    throw OracleError("\"" + command_ + "\" printed accuracy outside [0, 1]");
  }
  return a;
}

}  // namespace canao
