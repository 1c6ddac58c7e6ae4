#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "canao/error.hpp"
#include "canao/rng.hpp"
#include "canao/search.hpp"

namespace canao {

namespace {

constexpr double kInitScale = 0.1;

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using MutMatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

struct Controller::Forward {
  std::vector<int> inputs;
  std::vector<Eigen::VectorXd> h;      // h[t + 1] after step t; h[0] = 0
  std::vector<Eigen::VectorXd> probs;  // per step
};

Controller::Controller(std::vector<int> slot_sizes, std::vector<std::vector<int>> sequences,
                       int hidden_width, std::uint64_t seed)
    : slot_sizes_(std::move(slot_sizes)), sequences_(std::move(sequences)), hidden_(hidden_width) {
  if (hidden_ < 1) throw ConfigError("controller hidden width must be >= 1");
  if (slot_sizes_.empty()) throw ConfigError("controller needs at least one slot");
  for (int n : slot_sizes_) {
    if (n < 1) throw ConfigError("every controller slot needs at least one choice");
  }
  for (const auto& seq : sequences_) {
    if (seq.empty()) throw ConfigError("controller sequences must not be empty");
    for (int s : seq) {
      if (s < 0 || s >= static_cast<int>(slot_sizes_.size())) {
        throw ConfigError("controller sequence names unknown slot " + std::to_string(s));
      }
    }
  }
  vocab_ = 1;
  for (int n : slot_sizes_) {
    token_offset_.push_back(vocab_);
    vocab_ += n;
  }

  const auto h = static_cast<std::size_t>(hidden_);
  std::size_t at = 0;
  layout_.wx = at;
  at += h * static_cast<std::size_t>(vocab_);
  layout_.wh = at;
  at += h * h;
  layout_.bh = at;
  at += h;
  for (int n : slot_sizes_) {
    layout_.head_w.push_back(at);
    at += static_cast<std::size_t>(n) * h;
    layout_.head_b.push_back(at);
    at += static_cast<std::size_t>(n);
  }
  params_.assign(at, 0.0);

  // Recurrent weights start small and random; heads start at zero so the
  // initial policy is uniform.
  std::mt19937_64 rng(splitmix(seed));
  std::normal_distribution<double> normal(0.0, kInitScale);
  for (std::size_t i = layout_.wx; i < layout_.bh; ++i) params_[i] = normal(rng);
}

Controller Controller::for_space(const ActionSpace& space, int hidden_width, std::uint64_t seed) {
  check_action_space(space);
  return Controller({static_cast<int>(space.depths.size()), static_cast<int>(space.hidden_sizes.size()),
                     static_cast<int>(space.intermediate_multipliers.size())},
                    {{0}, {1, 2}}, hidden_width, seed);
}

int Controller::token(int slot, int choice) const {
  return token_offset_[static_cast<std::size_t>(slot)] + choice;
}

Controller::Forward Controller::forward(std::size_t sequence, std::span<const int> actions) const {
  const std::vector<int>& slots = sequences_.at(sequence);
  const MatMap wx(params_.data() + layout_.wx, hidden_, vocab_);
  const MatMap wh(params_.data() + layout_.wh, hidden_, hidden_);
  const VecMap bh(params_.data() + layout_.bh, hidden_);

  Forward f;
  f.h.push_back(Eigen::VectorXd::Zero(hidden_));
  int input = 0;
  const std::size_t steps = std::min(actions.size() + 1, slots.size());
  for (std::size_t t = 0; t < steps; ++t) {
    const int slot = slots[t];
    const auto s = static_cast<std::size_t>(slot);
    f.inputs.push_back(input);
    Eigen::VectorXd pre = wx.col(input) + wh * f.h.back() + bh;
    f.h.push_back(pre.array().tanh().matrix());
    const MatMap w(params_.data() + layout_.head_w[s], slot_sizes_[s], hidden_);
    const VecMap b(params_.data() + layout_.head_b[s], slot_sizes_[s]);
    f.probs.push_back(softmax(w * f.h.back() + b));
    if (t < actions.size()) {
      const int a = actions[t];
      if (a < 0 || a >= slot_sizes_[s]) {
        throw ConfigError("action " + std::to_string(a) + " out of range for slot " +
                          std::to_string(slot));
      }
      input = token(slot, a);
    }
  }
  return f;
}

Controller::Sample Controller::sample(std::size_t sequence, std::mt19937_64& rng) const {
  Sample out;
  const std::size_t steps = sequences_.at(sequence).size();
  for (std::size_t t = 0; t < steps; ++t) {
    const std::vector<double> p = probabilities(sequence, out.actions);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    const int a = p.size() == 1 ? 0 : pick(rng);
    out.actions.push_back(a);
    out.log_probs.push_back(std::log(p[static_cast<std::size_t>(a)]));
  }
  return out;
}

std::vector<double> Controller::probabilities(std::size_t sequence, std::span<const int> prefix) const {
  if (prefix.size() >= sequences_.at(sequence).size()) {
    throw ConfigError("sequence already complete");
  }
  const Forward f = forward(sequence, prefix);
  const Eigen::VectorXd& p = f.probs.back();
  return {p.data(), p.data() + p.size()};
}

double Controller::log_prob(std::size_t sequence, std::span<const int> actions) const {
  if (actions.size() != sequences_.at(sequence).size()) {
    throw ConfigError("expected one action per slot");
  }
  const Forward f = forward(sequence, actions);
  double sum = 0.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    sum += std::log(f.probs[t](actions[t]));
  }
  return sum;
}

std::vector<double> Controller::log_prob_gradient(std::size_t sequence,
                                                  std::span<const int> actions) const {
  if (actions.size() != sequences_.at(sequence).size()) {
    throw ConfigError("expected one action per slot");
  }
  const Forward f = forward(sequence, actions);
  const std::vector<int>& slots = sequences_[sequence];
  std::vector<double> grad(params_.size(), 0.0);
  MutMatMap gwx(grad.data() + layout_.wx, hidden_, vocab_);
  MutMatMap gwh(grad.data() + layout_.wh, hidden_, hidden_);
  MutVecMap gbh(grad.data() + layout_.bh, hidden_);
  const MatMap wh(params_.data() + layout_.wh, hidden_, hidden_);

  // Backpropagation through time, last step first.
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hidden_);
  for (std::size_t t = actions.size(); t-- > 0;) {
    const auto s = static_cast<std::size_t>(slots[t]);
    const int n = slot_sizes_[s];
    Eigen::VectorXd dz = -f.probs[t];
    dz(actions[t]) += 1.0;
    const Eigen::VectorXd& h = f.h[t + 1];
    MutMatMap gw(grad.data() + layout_.head_w[s], n, hidden_);
    MutVecMap gb(grad.data() + layout_.head_b[s], n);
    gw += dz * h.transpose();
    gb += dz;
    const MatMap w(params_.data() + layout_.head_w[s], n, hidden_);
    const Eigen::VectorXd dh = w.transpose() * dz + dh_next;
    const Eigen::VectorXd da = dh.array() * (1.0 - h.array().square());
    gwx.col(f.inputs[t]) += da;
    gwh += da * f.h[t].transpose();
    gbh += da;
    dh_next = wh.transpose() * da;
  }
  return grad;
}

double reinforce_objective(const Controller& controller, std::span<const Rollout> batch) {
  if (batch.empty()) throw NumericError("empty REINFORCE batch");
  double sum = 0.0;
  for (const Rollout& r : batch) sum += controller.log_prob(r.sequence, r.actions) * r.reward;
  return sum / static_cast<double>(batch.size());
}

std::vector<double> reinforce_gradient(const Controller& controller, std::span<const Rollout> batch) {
  if (batch.empty()) throw NumericError("empty REINFORCE batch");
  std::vector<double> grad(controller.parameters().size(), 0.0);
  for (const Rollout& r : batch) {
    if (!std::isfinite(r.reward)) throw NumericError("non-finite reward in REINFORCE batch");
    const std::vector<double> g = controller.log_prob_gradient(r.sequence, r.actions);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i] * r.reward;
  }
  for (double& g : grad) g /= static_cast<double>(batch.size());
  return grad;
}

void reinforce_update(Controller& controller, std::span<const Rollout> batch, double learning_rate) {
  const std::vector<double> grad = reinforce_gradient(controller, batch);
  if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
    throw NumericError("non-finite REINFORCE gradient");
  }
  std::vector<double>& p = controller.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += learning_rate * grad[i];
}

}  // namespace canao
